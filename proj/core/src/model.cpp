#include "qsel/model.hpp"

#include <cmath>
#include <sstream>

#include "qsel/errors.hpp"

namespace qsel {

namespace {

struct Range {
  const char* field;
  double value;
  double lo;
  double hi;
};

std::vector<Range> searched_ranges(const ModelConfig& c) {
  return {
      {"hidden_size", static_cast<double>(c.model_dim), 96, 512},
      {"embedding_size", static_cast<double>(c.emb_dim), 16, 128},
      {"encoder_layers", static_cast<double>(c.enc_layers), 1, 4},
      {"decoder_layers", static_cast<double>(c.dec_layers), 1, 3},
      {"heads", static_cast<double>(c.heads), 2, 6},
      {"batch_size", static_cast<double>(c.batch_size), 24, 144},
      {"dropout", c.dropout_rate, 0.0, 0.15},
      {"iterations", static_cast<double>(c.iterations), 1, 7},
      {"factor", c.factor_f, 0.1, 0.95},
  };
}

[[noreturn]] void reject(const std::string& field, const std::string& why) {
  throw ArgumentError("config field '" + field + "': " + why);
}

bool uses_query_selector(const AttentionSites& s) {
  return s.encoder_self == AttentionMode::query_selector ||
         s.decoder_self == AttentionMode::query_selector ||
         s.decoder_cross == AttentionMode::query_selector;
}

AttentionWeights<Matrix> init_attention(const ModelConfig& c, std::mt19937_64& rng) {
  AttentionWeights<Matrix> w;
  for (std::size_t h = 0; h < c.heads; ++h) {
    w.w_q.push_back(xavier_uniform(c.model_dim, c.head_dim(), rng));
    w.w_k.push_back(xavier_uniform(c.model_dim, c.head_dim(), rng));
    w.w_v.push_back(xavier_uniform(c.model_dim, c.head_dim(), rng));
  }
  w.w_o = xavier_uniform(c.heads * c.head_dim(), c.model_dim, rng);
  return w;
}

LayerNormWeights<Matrix> init_norm(const ModelConfig& c) {
  return {Matrix(1, c.model_dim, 1.0), Matrix(1, c.model_dim, 0.0)};
}

FeedForwardWeights<Matrix> init_ff(const ModelConfig& c, std::mt19937_64& rng) {
  const std::size_t inner = 4 * c.model_dim;
  FeedForwardWeights<Matrix> w;
  w.w1 = xavier_uniform(c.model_dim, inner, rng);
  w.b1 = Matrix(1, inner);
  w.w2 = xavier_uniform(inner, c.model_dim, rng);
  w.b2 = Matrix(1, c.model_dim);
  return w;
}

AttentionWeights<ad::Var> shape_attention(const AttentionWeights<Matrix>& w) {
  AttentionWeights<ad::Var> out;
  out.w_q.resize(w.w_q.size());
  out.w_k.resize(w.w_k.size());
  out.w_v.resize(w.w_v.size());
  return out;
}

EncoderWeights<ad::Var> shape_encoder(const EncoderWeights<Matrix>& w) {
  EncoderWeights<ad::Var> out;
  out.layers.resize(w.layers.size());
  for (std::size_t i = 0; i < w.layers.size(); ++i)
    out.layers[i].self_attn = shape_attention(w.layers[i].self_attn);
  return out;
}

ad::Var feed_forward(const FeedForwardWeights<ad::Var>& w, ad::Var x) {
  ad::Var hidden = ad::gelu(ad::add_row(ad::matmul(x, w.w1), w.b1));
  return ad::add_row(ad::matmul(hidden, w.w2), w.b2);
}

ad::Var add_norm(ad::Var residual, ad::Var update, const LayerNormWeights<ad::Var>& norm,
                 double dropout, bool train) {
  if (train) update = ad::dropout(update, dropout);
  return ad::layer_norm(ad::add(residual, update), norm.gain, norm.offset);
}

ad::Var embed(const EncoderWeights<ad::Var>& w, const Matrix& positional, const Matrix& input) {
  ad::Tape& tape = *w.embed_w.tape();
  if (input.cols() != w.embed_w.rows()) {
    throw DimensionError("model input " + shape_of(input) + " does not match embedding " +
                         shape_of(w.embed_w.value()));
  }
  if (input.rows() > positional.rows()) {
    throw DimensionError("sequence of " + std::to_string(input.rows()) +
                         " rows exceeds the positional table (" + shape_of(positional) + ")");
  }
  ad::Var x = tape.constant(input);
  ad::Var h = ad::add_row(ad::matmul(x, w.embed_w), w.embed_b);
  h = ad::add(h, tape.constant(slice_rows(positional, 0, input.rows())));
  return ad::add_row(ad::matmul(h, w.lift_w), w.lift_b);
}

}  // namespace

std::vector<std::string> out_of_range_fields(const ModelConfig& config) {
  std::vector<std::string> out;
  for (const Range& r : searched_ranges(config)) {
    if (std::string_view(r.field) == "factor" && !uses_query_selector(config.sites)) continue;
    if (r.value < r.lo || r.value > r.hi) out.emplace_back(r.field);
  }
  return out;
}

void validate(const ModelConfig& c) {
  if (c.heads == 0) reject("heads", "must be positive");
  if (c.model_dim == 0 || c.model_dim % c.heads != 0) {
    reject("hidden_size", std::to_string(c.model_dim) + " is not divisible by heads=" +
                              std::to_string(c.heads));
  }
  if (c.emb_dim == 0 || c.emb_dim % 2 != 0) reject("embedding_size", "must be positive and even");
  if (c.enc_layers == 0) reject("encoder_layers", "must be positive");
  if (c.dec_layers == 0) reject("decoder_layers", "must be positive");
  if (c.batch_size == 0) reject("batch_size", "must be positive");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) reject("dropout", "must lie in [0, 1)");
  if (!(c.factor_f >= 0.0 && c.factor_f < 1.0)) reject("factor", "must lie in [0, 1)");
  if (c.input_len == 0) reject("input_len", "must be positive");
  if (c.pred_len == 0) reject("pred_len", "must be at least 1");
  if (c.label_len > c.input_len) {
    reject("label_len", std::to_string(c.label_len) + " exceeds input_len=" +
                            std::to_string(c.input_len));
  }
  if (c.in_features == 0) reject("in_features", "must be positive");
  if (c.out_features == 0) reject("out_features", "must be positive");

  try {
    if (c.sites.encoder_self == AttentionMode::query_selector) selection_count(c.input_len, c.factor_f);
    if (c.sites.decoder_self == AttentionMode::query_selector ||
        c.sites.decoder_cross == AttentionMode::query_selector) {
      selection_count(c.decoder_len(), c.factor_f);
    }
  } catch (const ArgumentError& e) {
    reject("factor", e.what());
  }

  if (!c.allow_out_of_range) {
    const auto bad = out_of_range_fields(c);
    if (!bad.empty()) {
      reject(bad.front(), "outside the searched range (set allow_out_of_range to accept)");
    }
  }
}

Matrix positional_encoding(std::size_t length, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ArgumentError("positional_encoding: dim must be positive and even, got " + std::to_string(dim));
  }
  Matrix pe(length, dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

EncoderWeights<Matrix> init_encoder(const ModelConfig& c, std::mt19937_64& rng) {
  EncoderWeights<Matrix> e;
  e.embed_w = xavier_uniform(c.in_features, c.emb_dim, rng);
  e.embed_b = Matrix(1, c.emb_dim);
  e.lift_w = xavier_uniform(c.emb_dim, c.model_dim, rng);
  e.lift_b = Matrix(1, c.model_dim);
  for (std::size_t i = 0; i < c.enc_layers; ++i) {
    EncoderLayerWeights<Matrix> layer;
    layer.self_attn = init_attention(c, rng);
    layer.norm1 = init_norm(c);
    layer.ff = init_ff(c, rng);
    layer.norm2 = init_norm(c);
    e.layers.push_back(std::move(layer));
  }
  return e;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.weights.encoder = init_encoder(config, rng);
  for (std::size_t i = 0; i < config.dec_layers; ++i) {
    DecoderLayerWeights<Matrix> layer;
    layer.self_attn = init_attention(config, rng);
    layer.norm1 = init_norm(config);
    layer.cross_attn = init_attention(config, rng);
    layer.norm2 = init_norm(config);
    layer.ff = init_ff(config, rng);
    layer.norm3 = init_norm(config);
    p.weights.decoder.push_back(std::move(layer));
  }
  p.weights.out_w = xavier_uniform(config.model_dim, config.out_features, rng);
  p.weights.out_b = Matrix(1, config.out_features);
  p.positional = positional_encoding(std::max(config.input_len, config.decoder_len()), config.emb_dim);
  return p;
}

std::vector<Matrix*> tensors(ModelWeights<Matrix>& weights) {
  std::vector<Matrix*> out;
  for_each_tensor(weights, [&](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> tensors(const ModelWeights<Matrix>& weights) {
  std::vector<const Matrix*> out;
  for_each_tensor(weights, [&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<std::string> tensor_names(const ModelWeights<Matrix>& weights) {
  std::vector<std::string> out;
  for_each_tensor(weights, [&](const std::string& name, const Matrix&) { out.push_back(name); });
  return out;
}

EncoderWeights<ad::Var> bind(ad::Tape& tape, const EncoderWeights<Matrix>& weights, bool trainable) {
  EncoderWeights<ad::Var> out = shape_encoder(weights);
  std::vector<const Matrix*> src;
  auto collect = [&](const std::string&, const Matrix& m) { src.push_back(&m); };
  for_each_tensor(weights, "", collect);
  std::size_t i = 0;
  auto put = [&](const std::string&, ad::Var& v) {
    const Matrix& m = *src.at(i++);
    v = trainable ? tape.parameter(m) : tape.constant(m);
  };
  for_each_tensor(out, "", put);
  return out;
}

ModelWeights<ad::Var> bind(ad::Tape& tape, const ModelWeights<Matrix>& weights, bool trainable) {
  ModelWeights<ad::Var> out;
  out.encoder = shape_encoder(weights.encoder);
  out.decoder.resize(weights.decoder.size());
  for (std::size_t i = 0; i < weights.decoder.size(); ++i) {
    out.decoder[i].self_attn = shape_attention(weights.decoder[i].self_attn);
    out.decoder[i].cross_attn = shape_attention(weights.decoder[i].cross_attn);
  }
  const auto src = tensors(weights);
  std::size_t i = 0;
  for_each_tensor(out, [&](const std::string&, ad::Var& v) {
    const Matrix& m = *src.at(i++);
    v = trainable ? tape.parameter(m) : tape.constant(m);
  });
  return out;
}

ad::Var encode(const EncoderWeights<ad::Var>& w, const Matrix& positional, const ModelConfig& c,
               const Matrix& input, const ForwardOptions& options) {
  ad::Var h = embed(w, positional, input);
  for (const auto& layer : w.layers) {
    ad::Var a = ad::multi_head(h, h, layer.self_attn, c.sites.encoder_self, c.factor_f, false,
                               options.selections);
    h = add_norm(h, a, layer.norm1, c.dropout_rate, options.train_mode);
    h = add_norm(h, feed_forward(layer.ff, h), layer.norm2, c.dropout_rate, options.train_mode);
  }
  return h;
}

ad::Var forward(const ModelWeights<ad::Var>& w, const Matrix& positional, const ModelConfig& c,
                const Matrix& enc_in, const Matrix& dec_in, const ForwardOptions& options) {
  if (enc_in.rows() != c.input_len || enc_in.cols() != c.in_features) {
    throw DimensionError("encoder input " + shape_of(enc_in) + " expected " +
                         std::to_string(c.input_len) + "x" + std::to_string(c.in_features));
  }
  if (dec_in.rows() != c.decoder_len() || dec_in.cols() != c.in_features) {
    throw DimensionError("decoder input " + shape_of(dec_in) + " expected " +
                         std::to_string(c.decoder_len()) + "x" + std::to_string(c.in_features));
  }
  ad::Var memory = encode(w.encoder, positional, c, enc_in, options);
  // Decoder tokens share the encoder's embedding; both see the same feature space.
  ad::Var d = embed(w.encoder, positional, dec_in);
  for (const auto& layer : w.decoder) {
    // Selection has no causal variant, so a query-selector decoder site runs unmasked.
    const bool causal = c.sites.decoder_self == AttentionMode::full;
    ad::Var s = ad::multi_head(d, d, layer.self_attn, c.sites.decoder_self, c.factor_f, causal,
                               options.selections);
    d = add_norm(d, s, layer.norm1, c.dropout_rate, options.train_mode);
    ad::Var x = ad::multi_head(d, memory, layer.cross_attn, c.sites.decoder_cross, c.factor_f,
                               false, options.selections);
    d = add_norm(d, x, layer.norm2, c.dropout_rate, options.train_mode);
    d = add_norm(d, feed_forward(layer.ff, d), layer.norm3, c.dropout_rate, options.train_mode);
  }
  ad::Var out = ad::add_row(ad::matmul(d, w.out_w), w.out_b);
  return ad::slice_rows(out, c.decoder_len() - c.pred_len, c.pred_len);
}

Matrix forward(const ModelParams& params, const ModelConfig& config, const Matrix& enc_in,
               const Matrix& dec_in, bool train_mode, std::uint64_t dropout_seed) {
  ad::Tape tape(dropout_seed);
  const auto w = bind(tape, params.weights, false);
  ForwardOptions options;
  options.train_mode = train_mode;
  return forward(w, params.positional, config, enc_in, dec_in, options).value();
}

Matrix make_decoder_input(const Matrix& enc_in, std::size_t label_len, std::size_t pred_len) {
  if (label_len > enc_in.rows()) {
    throw DimensionError("label_len " + std::to_string(label_len) + " exceeds encoder input " +
                         shape_of(enc_in));
  }
  Matrix zeros(pred_len, enc_in.cols());
  if (label_len == 0) return zeros;
  return concat_rows(slice_rows(enc_in, enc_in.rows() - label_len, label_len), zeros);
}

}  // namespace qsel
