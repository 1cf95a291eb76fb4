#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qsel/matrix.hpp"
#include "qsel/model.hpp"
#include "qsel/timestamp.hpp"
#include "qsel/training.hpp"

namespace qsel {

struct Event {
  std::size_t activity = 0;  // index into EventLog::alphabet
  Instant timestamp = 0;
  std::string event_id;      // unique within its trace; synthesised when the log has none
};

/// Events of one case in non-decreasing time order.
struct Trace {
  std::string case_id;
  std::vector<Event> events;
};

struct EventLog {
  std::vector<Trace> traces;
  std::vector<std::string> alphabet;  // first-appearance order

  std::size_t events() const noexcept;
};

/// CSV column names. Empty lifecycle or event_id columns mean "absent".
struct ColumnMap {
  std::string case_id = "CaseID";
  std::string activity = "Activity";
  std::string timestamp = "CompleteTimestamp";
  std::string lifecycle;
  std::string keep_lifecycle = "complete";
  std::string event_id;
};

/// Groups rows by case (cases in first-appearance order), stable-sorts each
/// case by timestamp and codes activities in first-appearance order. Rows whose
/// lifecycle differs from keep_lifecycle are dropped before anything else.
/// Missing columns raise SchemaError; bad timestamps and duplicate event ids
/// raise DataError with the line number.
EventLog parse_event_log(std::string_view text, const ColumnMap& columns = {},
                         std::string_view source = "<memory>");
EventLog load_event_log(const std::filesystem::path& path, const ColumnMap& columns = {});

std::string event_log_to_csv(const EventLog& log);

/// Throws ContractError unless every trace is time-ordered, has unique event
/// ids and codes only registered activities, and the log is nonempty.
void check_invariants(const EventLog& log);

/// Mean and standard deviation of inter-event gaps in seconds.
struct DeltaScale {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Fitted over every gap in the given traces; a zero spread falls back to 1.
DeltaScale fit_delta_scale(const EventLog& log);

struct PrefixSample {
  Matrix features;  // k x (|alphabet| + 2): one-hot over activities plus END, then scaled gap
  std::size_t target = 0;
  std::size_t trace = 0;
};

struct PrefixDataset {
  std::vector<PrefixSample> samples;
  std::size_t classes = 0;  // |alphabet| + 1; the last class is END
  std::size_t width = 0;
  std::size_t skipped_traces = 0;
  DeltaScale scale;

  std::size_t end_class() const noexcept { return classes - 1; }
};

/// One sample per trace and prefix length k in [min_prefix, n]; k = n targets
/// END. Traces shorter than min_prefix are skipped and counted.
PrefixDataset build_prefix_dataset(const EventLog& log, std::size_t min_prefix);
PrefixDataset build_prefix_dataset(const EventLog& log, std::size_t min_prefix, const DeltaScale& scale);

/// Keeps the last `length` rows and left-pads with zero rows.
Matrix pad_prefix(const Matrix& features, std::size_t length);

/// Lowest index wins ties.
std::size_t argmax(std::span<const double> scores);

/// Fraction of rows whose argmax equals the target. Empty input raises DataError.
double next_activity_accuracy(std::span<const Matrix> scores, std::span<const std::size_t> targets);

/// Encoder stack, mean pooling over the real (unpadded) rows, linear head.
struct ClassifierParams {
  EncoderWeights<Matrix> encoder;
  Matrix head_w, head_b;
  Matrix positional;
};

/// Encoder config for the classifier: input_len is the padded prefix length,
/// in_features the dataset width. The decoder fields are unused.
ModelConfig classifier_config(const ModelConfig& base, std::size_t width, std::size_t max_prefix);

ClassifierParams init_classifier(const ModelConfig& config, std::size_t classes, std::uint64_t seed);

/// 1 x classes logits for one prefix.
Matrix classifier_scores(const ClassifierParams& params, const ModelConfig& config, const Matrix& prefix);

struct ClassifierResult {
  ClassifierParams params;
  std::vector<double> epoch_loss;
};

/// Minibatch cross-entropy training with Adam for config.iterations epochs.
ClassifierResult train_classifier(const ModelConfig& config, std::size_t classes,
                                  std::span<const PrefixSample> samples, const AdamSettings& adam = {},
                                  std::size_t threads = 1);

double classifier_accuracy(const ClassifierParams& params, const ModelConfig& config,
                           std::span<const PrefixSample> samples);

struct ProcessSpec {
  std::vector<std::string> activities = {"A", "B", "C"};
  std::size_t traces = 200;
  std::int64_t mean_gap_s = 3600;
  std::uint64_t seed = 1;
};

/// Every trace runs the activities in the fixed order; gaps are random.
EventLog gen_process_log(const ProcessSpec& spec);

/// Trace-level split: first ratio of traces for training, the rest held out.
std::pair<EventLog, EventLog> split_traces(const EventLog& log, double train_ratio);

}  // namespace qsel
