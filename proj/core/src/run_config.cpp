#include "qsel/run_config.hpp"

#include <charconv>
#include <sstream>

#include "qsel/errors.hpp"
#include "text_util.hpp"

namespace qsel {

namespace {

using detail::trim;

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view why) {
  throw DataError("config key '" + std::string(key) + "': " + std::string(why) + " (got '" +
                  std::string(value) + "')");
}

std::size_t to_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, "expected a non-negative integer");
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, "expected a real number");
  return out;
}

bool to_flag(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "expected true or false");
}

AttentionMode to_mode(std::string_view key, std::string_view v) {
  try {
    return parse_attention_mode(v);
  } catch (const ArgumentError&) {
    bad(key, v, "expected full or query_selector");
  }
}

SplitRatios to_split(std::string_view key, std::string_view v) {
  std::vector<double> parts;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const std::size_t comma = std::min(v.find(',', pos), v.size());
    parts.push_back(to_real(key, trim(v.substr(pos, comma - pos))));
    pos = comma + 1;
  }
  if (parts.size() != 3) bad(key, v, "expected train,val,test ratios");
  return {parts[0], parts[1], parts[2]};
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "hidden_size", "embedding_size", "encoder_layers", "decoder_layers", "heads",
      "batch_size", "dropout", "iterations", "factor", "input_len", "label_len", "pred_len",
      "encoder_attention", "decoder_self_attention", "decoder_cross_attention", "seed",
      "allow_out_of_range", "learning_rate", "data", "split", "mode", "target", "out_dir",
      "stride", "max_train_windows", "max_eval_windows", "threads", "metric_scale"};
  return keys;
}

void set_run_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  ModelConfig& m = c.model;
  const std::string_view v = trim(value);
  if (key == "hidden_size") m.model_dim = to_count(key, v);
  else if (key == "embedding_size") m.emb_dim = to_count(key, v);
  else if (key == "encoder_layers") m.enc_layers = to_count(key, v);
  else if (key == "decoder_layers") m.dec_layers = to_count(key, v);
  else if (key == "heads") m.heads = to_count(key, v);
  else if (key == "batch_size") m.batch_size = to_count(key, v);
  else if (key == "dropout") m.dropout_rate = to_real(key, v);
  else if (key == "iterations") m.iterations = to_count(key, v);
  else if (key == "factor") m.factor_f = to_real(key, v);
  else if (key == "input_len") m.input_len = to_count(key, v);
  else if (key == "label_len") m.label_len = to_count(key, v);
  else if (key == "pred_len") m.pred_len = to_count(key, v);
  else if (key == "encoder_attention") m.sites.encoder_self = to_mode(key, v);
  else if (key == "decoder_self_attention") m.sites.decoder_self = to_mode(key, v);
  else if (key == "decoder_cross_attention") m.sites.decoder_cross = to_mode(key, v);
  else if (key == "seed") m.seed = to_count(key, v);
  else if (key == "allow_out_of_range") m.allow_out_of_range = to_flag(key, v);
  else if (key == "learning_rate") c.learning_rate = to_real(key, v);
  else if (key == "data") c.data_path = std::string(v);
  else if (key == "split") c.split = to_split(key, v);
  else if (key == "mode") {
    try {
      c.mode = parse_forecast_mode(v);
    } catch (const ArgumentError&) {
      bad(key, v, "expected univariate or multivariate");
    }
  }
  else if (key == "target") c.target = std::string(v);
  else if (key == "out_dir") c.out_dir = std::string(v);
  else if (key == "stride") c.stride = to_count(key, v);
  else if (key == "max_train_windows") c.max_train_windows = to_count(key, v);
  else if (key == "max_eval_windows") c.max_eval_windows = to_count(key, v);
  else if (key == "threads") c.threads = to_count(key, v);
  else if (key == "metric_scale") {
    if (v == "raw") c.raw_scale = true;
    else if (v == "normalized") c.raw_scale = false;
    else bad(key, v, "expected normalized or raw");
  }
  else throw DataError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_run_config_value(c, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(detail::read_file(path));
}

std::string to_text(const RunConfig& c) {
  const ModelConfig& m = c.model;
  std::ostringstream o;
  o << "hidden_size = " << m.model_dim << "\n"
    << "embedding_size = " << m.emb_dim << "\n"
    << "encoder_layers = " << m.enc_layers << "\n"
    << "decoder_layers = " << m.dec_layers << "\n"
    << "heads = " << m.heads << "\n"
    << "batch_size = " << m.batch_size << "\n"
    << "dropout = " << detail::format_real(m.dropout_rate) << "\n"
    << "iterations = " << m.iterations << "\n"
    << "factor = " << detail::format_real(m.factor_f) << "\n"
    << "input_len = " << m.input_len << "\n"
    << "label_len = " << m.label_len << "\n"
    << "pred_len = " << m.pred_len << "\n"
    << "encoder_attention = " << to_string(m.sites.encoder_self) << "\n"
    << "decoder_self_attention = " << to_string(m.sites.decoder_self) << "\n"
    << "decoder_cross_attention = " << to_string(m.sites.decoder_cross) << "\n"
    << "seed = " << m.seed << "\n"
    << "allow_out_of_range = " << (m.allow_out_of_range ? "true" : "false") << "\n"
    << "learning_rate = " << detail::format_real(c.learning_rate) << "\n"
    << "data = " << c.data_path << "\n"
    << "split = " << detail::format_real(c.split.train) << "," << detail::format_real(c.split.val) << ","
    << detail::format_real(c.split.test) << "\n"
    << "mode = " << to_string(c.mode) << "\n"
    << "target = " << c.target << "\n"
    << "out_dir = " << c.out_dir << "\n"
    << "stride = " << c.stride << "\n"
    << "max_train_windows = " << c.max_train_windows << "\n"
    << "max_eval_windows = " << c.max_eval_windows << "\n"
    << "threads = " << c.threads << "\n"
    << "metric_scale = " << (c.raw_scale ? "raw" : "normalized") << "\n";
  return o.str();
}

void validate(const RunConfig& c) {
  try {
    validate(c.model);
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
  if (!(c.learning_rate > 0.0)) throw DataError("config field 'learning_rate': must be positive");
  if (c.stride == 0) throw DataError("config field 'stride': must be positive");
  if (c.threads == 0) throw DataError("config field 'threads': must be positive");
  if (c.split.train <= 0.0 || c.split.val < 0.0 || c.split.test <= 0.0) {
    throw DataError("config field 'split': train and test ratios must be positive, val non-negative");
  }
}

}  // namespace qsel
