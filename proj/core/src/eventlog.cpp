#include "qsel/eventlog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "qsel/errors.hpp"
#include "qsel/ops.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

namespace qsel {

namespace {

using detail::split_fields;
using detail::trim;

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::size_t find_column(const std::vector<std::string_view>& header, const std::string& name, const std::string& where) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError(where + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<Matrix*> classifier_tensors(ClassifierParams& p) {
  std::vector<Matrix*> out;
  auto collect = [&](const std::string&, Matrix& m) { out.push_back(&m); };
  for_each_tensor(p.encoder, "", collect);
  out.push_back(&p.head_w);
  out.push_back(&p.head_b);
  return out;
}

struct BoundClassifier {
  EncoderWeights<ad::Var> encoder;
  ad::Var head_w, head_b;
};

BoundClassifier bind_classifier(ad::Tape& tape, const ClassifierParams& p, bool trainable) {
  BoundClassifier b;
  b.encoder = bind(tape, p.encoder, trainable);
  b.head_w = trainable ? tape.parameter(p.head_w) : tape.constant(p.head_w);
  b.head_b = trainable ? tape.parameter(p.head_b) : tape.constant(p.head_b);
  return b;
}

ad::Var logits(const BoundClassifier& b, const ClassifierParams& p, const ModelConfig& config, const Matrix& prefix,
               bool train_mode) {
  if (prefix.rows() == 0) throw DimensionError("classifier: empty prefix");
  const Matrix padded = pad_prefix(prefix, config.input_len);
  ForwardOptions opts;
  opts.train_mode = train_mode;
  ad::Var h = encode(b.encoder, p.positional, config, padded, opts);
  const std::size_t real = std::min(prefix.rows(), config.input_len);
  ad::Var pooled = ad::column_mean(ad::slice_rows(h, config.input_len - real, real));
  return ad::add_row(ad::matmul(pooled, b.head_w), b.head_b);
}

}  // namespace

std::size_t EventLog::events() const noexcept {
  std::size_t n = 0;
  for (const Trace& t : traces) n += t.events.size();
  return n;
}

EventLog parse_event_log(std::string_view text, const ColumnMap& columns, std::string_view source) {
  const std::string where(source);
  const auto lines = detail::split_lines(text);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw DataError(where + ": empty file");

  const auto header = split_fields(lines[first]);
  const std::size_t c_case = find_column(header, columns.case_id, where);
  const std::size_t c_act = find_column(header, columns.activity, where);
  const std::size_t c_time = find_column(header, columns.timestamp, where);
  const bool has_life = !columns.lifecycle.empty();
  const bool has_id = !columns.event_id.empty();
  const std::size_t c_life = has_life ? find_column(header, columns.lifecycle, where) : 0;
  const std::size_t c_id = has_id ? find_column(header, columns.event_id, where) : 0;

  EventLog log;
  std::unordered_map<std::string, std::size_t> case_index, activity_index;
  std::vector<std::set<std::string>> seen_ids;

  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const std::string at = where + ":" + std::to_string(li + 1);
    const auto f = split_fields(lines[li]);
    if (f.size() != header.size()) {
      throw DataError(at + ": expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    }
    if (has_life && !iequals(f[c_life], columns.keep_lifecycle)) continue;
    const auto when = parse_timestamp(f[c_time]);
    if (!when) throw DataError(at + ": unparseable timestamp '" + std::string(f[c_time]) + "'");
    if (f[c_case].empty()) throw DataError(at + ": empty case id");
    if (f[c_act].empty()) throw DataError(at + ": empty activity");

    const std::string case_id(f[c_case]);
    auto [cit, new_case] = case_index.try_emplace(case_id, log.traces.size());
    if (new_case) {
      log.traces.push_back(Trace{case_id, {}});
      seen_ids.emplace_back();
    }
    const std::string activity(f[c_act]);
    auto [ait, new_act] = activity_index.try_emplace(activity, log.alphabet.size());
    if (new_act) log.alphabet.push_back(activity);

    Event e;
    e.activity = ait->second;
    e.timestamp = *when;
    e.event_id = has_id ? std::string(f[c_id]) : std::to_string(li + 1);
    if (!seen_ids[cit->second].insert(e.event_id).second) {
      throw DataError(at + ": duplicate event id '" + e.event_id + "' in case '" + case_id + "'");
    }
    log.traces[cit->second].events.push_back(std::move(e));
  }
  if (log.traces.empty()) throw DataError(where + ": event log has no events");
  for (Trace& t : log.traces) {
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
  }
  return log;
}

EventLog load_event_log(const std::filesystem::path& path, const ColumnMap& columns) {
  return parse_event_log(detail::read_file(path), columns, path.string());
}

std::string event_log_to_csv(const EventLog& log) {
  std::string out = "CaseID,Activity,CompleteTimestamp\n";
  for (const Trace& t : log.traces)
    for (const Event& e : t.events) {
      out += t.case_id + "," + log.alphabet.at(e.activity) + "," + format_timestamp(e.timestamp) + "\n";
    }
  return out;
}

void check_invariants(const EventLog& log) {
  if (log.traces.empty()) throw ContractError("event log is empty");
  for (const Trace& t : log.traces) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      const Event& e = t.events[i];
      if (e.activity >= log.alphabet.size()) {
        throw ContractError("trace '" + t.case_id + "': activity code outside the alphabet");
      }
      if (i > 0 && t.events[i - 1].timestamp > e.timestamp) {
        throw ContractError("trace '" + t.case_id + "' is not time-ordered at event " + std::to_string(i));
      }
      if (!ids.insert(e.event_id).second) {
        throw ContractError("trace '" + t.case_id + "' repeats event id '" + e.event_id + "'");
      }
    }
  }
}

DeltaScale fit_delta_scale(const EventLog& log) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const Trace& t : log.traces)
    for (std::size_t i = 1; i < t.events.size(); ++i) {
      const double d = static_cast<double>(t.events[i].timestamp - t.events[i - 1].timestamp);
      sum += d;
      sq += d * d;
      ++n;
    }
  DeltaScale s;
  if (n == 0) return s;
  s.mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - s.mean * s.mean);
  s.stddev = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

PrefixDataset build_prefix_dataset(const EventLog& log, std::size_t min_prefix) {
  return build_prefix_dataset(log, min_prefix, fit_delta_scale(log));
}

PrefixDataset build_prefix_dataset(const EventLog& log, std::size_t min_prefix, const DeltaScale& scale) {
  if (min_prefix == 0) throw ArgumentError("build_prefix_dataset: min_prefix must be at least 1");
  PrefixDataset ds;
  ds.classes = log.alphabet.size() + 1;
  ds.width = ds.classes + 1;
  ds.scale = scale;
  for (std::size_t ti = 0; ti < log.traces.size(); ++ti) {
    const auto& ev = log.traces[ti].events;
    if (ev.size() < min_prefix) {
      ++ds.skipped_traces;
      continue;
    }
    Matrix full(ev.size(), ds.width);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      full(i, ev[i].activity) = 1.0;
      const double gap = i == 0 ? 0.0 : static_cast<double>(ev[i].timestamp - ev[i - 1].timestamp);
      full(i, ds.width - 1) = (gap - scale.mean) / scale.stddev;
    }
    for (std::size_t k = min_prefix; k <= ev.size(); ++k) {
      PrefixSample s;
      s.features = slice_rows(full, 0, k);
      s.target = k == ev.size() ? ds.end_class() : ev[k].activity;
      s.trace = ti;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Matrix pad_prefix(const Matrix& features, std::size_t length) {
  if (length == 0) throw ArgumentError("pad_prefix: length must be positive");
  Matrix out(length, features.cols());
  const std::size_t keep = std::min(length, features.rows());
  const std::size_t skip = features.rows() - keep;
  for (std::size_t i = 0; i < keep; ++i)
    for (std::size_t j = 0; j < features.cols(); ++j) out(length - keep + i, j) = features(skip + i, j);
  return out;
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

double next_activity_accuracy(std::span<const Matrix> scores, std::span<const std::size_t> targets) {
  if (scores.size() != targets.size()) {
    throw DimensionError("next_activity_accuracy: " + std::to_string(scores.size()) + " score rows vs " +
                         std::to_string(targets.size()) + " targets");
  }
  if (scores.empty()) throw DataError("next_activity_accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (argmax(scores[i].values()) == targets[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

ModelConfig classifier_config(const ModelConfig& base, std::size_t width, std::size_t max_prefix) {
  ModelConfig c = base;
  c.in_features = width;
  c.out_features = 1;
  c.input_len = max_prefix;
  c.label_len = 0;
  c.pred_len = 1;
  c.sites.decoder_self = AttentionMode::full;
  c.sites.decoder_cross = AttentionMode::full;
  return c;
}

ClassifierParams init_classifier(const ModelConfig& config, std::size_t classes, std::uint64_t seed) {
  validate(config);
  if (classes == 0) throw ArgumentError("init_classifier: no classes");
  std::mt19937_64 rng(seed);
  ClassifierParams p;
  p.encoder = init_encoder(config, rng);
  p.head_w = xavier_uniform(config.model_dim, classes, rng);
  p.head_b = Matrix(1, classes);
  p.positional = positional_encoding(config.input_len, config.emb_dim);
  return p;
}

Matrix classifier_scores(const ClassifierParams& params, const ModelConfig& config, const Matrix& prefix) {
  ad::Tape tape(0);
  const BoundClassifier b = bind_classifier(tape, params, false);
  return logits(b, params, config, prefix, false).value();
}

ClassifierResult train_classifier(const ModelConfig& config, std::size_t classes,
                                  std::span<const PrefixSample> samples, const AdamSettings& adam,
                                  std::size_t threads) {
  ClassifierResult result;
  result.params = init_classifier(config, classes, config.seed);
  if (config.iterations == 0) return result;
  if (samples.empty()) throw DataError("train_classifier: no prefix samples");

  auto ptrs = classifier_tensors(result.params);
  std::vector<const Matrix*> cptrs(ptrs.begin(), ptrs.end());
  OptimizerState opt = make_optimizer(cptrs, adam);

  struct Step {
    double loss = 0.0;
    std::vector<Matrix> grads;
  };

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(detail::mix(config.seed));
  for (std::size_t epoch = 1; epoch <= config.iterations; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      std::vector<Step> steps(count);
      detail::parallel_for(count, threads, [&](std::size_t i) {
        const PrefixSample& s = samples[order[begin + i]];
        ad::Tape tape(detail::mix(config.seed ^ detail::mix(epoch * 1000003ULL + begin + i)));
        const BoundClassifier b = bind_classifier(tape, result.params, true);
        ad::Var loss = ad::cross_entropy(logits(b, result.params, config, s.features, true), s.target);
        tape.backward(loss);
        steps[i].loss = loss.value()(0, 0);
        auto collect = [&](const std::string&, const ad::Var& v) { steps[i].grads.push_back(v.grad()); };
        for_each_tensor(b.encoder, "", collect);
        steps[i].grads.push_back(b.head_w.grad());
        steps[i].grads.push_back(b.head_b.grad());
      });
      std::vector<Matrix> grads = std::move(steps.front().grads);
      double batch_loss = steps.front().loss;
      for (std::size_t i = 1; i < count; ++i) {
        batch_loss += steps[i].loss;
        for (std::size_t k = 0; k < grads.size(); ++k) add_in_place(grads[k], steps[i].grads[k]);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("classifier training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      for (Matrix& g : grads)
        for (double& x : g.values()) x /= static_cast<double>(count);
      adam_step(ptrs, grads, opt);
      total += batch_loss;
    }
    result.epoch_loss.push_back(total / static_cast<double>(samples.size()));
  }
  return result;
}

double classifier_accuracy(const ClassifierParams& params, const ModelConfig& config,
                           std::span<const PrefixSample> samples) {
  std::vector<Matrix> scores;
  std::vector<std::size_t> targets;
  for (const PrefixSample& s : samples) {
    scores.push_back(classifier_scores(params, config, s.features));
    targets.push_back(s.target);
  }
  return next_activity_accuracy(scores, targets);
}

EventLog gen_process_log(const ProcessSpec& spec) {
  if (spec.activities.empty()) throw ArgumentError("gen_process_log: no activities");
  if (spec.traces == 0) throw ArgumentError("gen_process_log: traces must be positive");
  if (spec.mean_gap_s <= 0) throw ArgumentError("gen_process_log: mean_gap_s must be positive");
  EventLog log;
  log.alphabet = spec.activities;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::int64_t> gap(1, 2 * spec.mean_gap_s);
  const Instant origin = *parse_timestamp("2020-01-01 00:00:00");
  for (std::size_t c = 0; c < spec.traces; ++c) {
    Trace t;
    t.case_id = "case_" + std::to_string(c + 1);
    Instant now = origin + static_cast<Instant>(c) * spec.mean_gap_s;
    for (std::size_t a = 0; a < spec.activities.size(); ++a) {
      if (a > 0) now += gap(rng);
      t.events.push_back(Event{a, now, std::to_string(a + 1)});
    }
    log.traces.push_back(std::move(t));
  }
  return log;
}

std::pair<EventLog, EventLog> split_traces(const EventLog& log, double train_ratio) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ArgumentError("split_traces: ratio must lie in (0, 1)");
  const auto cut = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(log.traces.size())));
  if (cut == 0 || cut == log.traces.size()) throw DataError("split_traces: too few traces to split");
  EventLog a, b;
  a.alphabet = b.alphabet = log.alphabet;
  a.traces.assign(log.traces.begin(), log.traces.begin() + static_cast<std::ptrdiff_t>(cut));
  b.traces.assign(log.traces.begin() + static_cast<std::ptrdiff_t>(cut), log.traces.end());
  return {std::move(a), std::move(b)};
}

}  // namespace qsel
