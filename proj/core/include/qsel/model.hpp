#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "qsel/attention.hpp"
#include "qsel/matrix.hpp"
#include "qsel/ops.hpp"

namespace qsel {

/// Which attention variant runs at each site of the encoder-decoder.
struct AttentionSites {
  AttentionMode encoder_self = AttentionMode::query_selector;
  AttentionMode decoder_self = AttentionMode::full;
  AttentionMode decoder_cross = AttentionMode::query_selector;
};

struct ModelConfig {
  std::size_t model_dim = 96;   // hidden size: width of the residual stream
  std::size_t emb_dim = 32;     // embedding size: width at which inputs meet positions
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 1;
  std::size_t heads = 2;
  std::size_t batch_size = 32;
  double dropout_rate = 0.05;
  std::size_t iterations = 5;   // training epochs
  double factor_f = 0.8;
  std::size_t input_len = 96;
  std::size_t label_len = 48;
  std::size_t pred_len = 24;
  AttentionSites sites;
  std::uint64_t seed = 1;

  std::size_t in_features = 1;
  std::size_t out_features = 1;
  /// Permits values outside the searched hyper-parameter ranges (desk-scale runs).
  bool allow_out_of_range = false;

  std::size_t head_dim() const { return model_dim / heads; }
  std::size_t decoder_len() const { return label_len + pred_len; }
};

/// Names of fields lying outside the searched hyper-parameter ranges.
std::vector<std::string> out_of_range_fields(const ModelConfig& config);

/// Throws ArgumentError naming the first offending field. Range violations
/// are only reported when allow_out_of_range is false.
void validate(const ModelConfig& config);

template <class T>
struct LayerNormWeights {
  T gain;
  T offset;
};

template <class T>
struct FeedForwardWeights {
  T w1, b1, w2, b2;
};

template <class T>
struct EncoderLayerWeights {
  AttentionWeights<T> self_attn;
  LayerNormWeights<T> norm1;
  FeedForwardWeights<T> ff;
  LayerNormWeights<T> norm2;
};

template <class T>
struct DecoderLayerWeights {
  AttentionWeights<T> self_attn;
  LayerNormWeights<T> norm1;
  AttentionWeights<T> cross_attn;
  LayerNormWeights<T> norm2;
  FeedForwardWeights<T> ff;
  LayerNormWeights<T> norm3;
};

/// Embedding, encoder stack and the input embedding lift into model_dim.
template <class T>
struct EncoderWeights {
  T embed_w, embed_b;  // in_features -> emb_dim
  T lift_w, lift_b;    // emb_dim -> model_dim
  std::vector<EncoderLayerWeights<T>> layers;
};

template <class T>
struct ModelWeights {
  EncoderWeights<T> encoder;
  std::vector<DecoderLayerWeights<T>> decoder;
  T out_w, out_b;  // model_dim -> out_features
};

// Visitors enumerate every tensor in a fixed order with a stable name. The
// checkpoint format, the optimizer and tape binding all rely on this order.

template <class A, class F>
void for_each_tensor(A& w, const std::string& prefix, F& f) requires requires { w.w_o; } {
  for (std::size_t h = 0; h < w.w_q.size(); ++h) f(prefix + ".w_q" + std::to_string(h), w.w_q[h]);
  for (std::size_t h = 0; h < w.w_k.size(); ++h) f(prefix + ".w_k" + std::to_string(h), w.w_k[h]);
  for (std::size_t h = 0; h < w.w_v.size(); ++h) f(prefix + ".w_v" + std::to_string(h), w.w_v[h]);
  f(prefix + ".w_o", w.w_o);
}

template <class N, class F>
void for_each_tensor(N& n, const std::string& prefix, F& f) requires requires { n.gain; } {
  f(prefix + ".gain", n.gain);
  f(prefix + ".offset", n.offset);
}

template <class W, class F>
void for_each_tensor(W& w, const std::string& prefix, F& f) requires requires { w.w1; } {
  f(prefix + ".w1", w.w1);
  f(prefix + ".b1", w.b1);
  f(prefix + ".w2", w.w2);
  f(prefix + ".b2", w.b2);
}

template <class E, class F>
void for_each_tensor(E& e, const std::string& prefix, F& f) requires requires { e.embed_w; } {
  f(prefix + "embed.w", e.embed_w);
  f(prefix + "embed.b", e.embed_b);
  f(prefix + "lift.w", e.lift_w);
  f(prefix + "lift.b", e.lift_b);
  for (std::size_t i = 0; i < e.layers.size(); ++i) {
    const std::string p = prefix + "enc" + std::to_string(i);
    for_each_tensor(e.layers[i].self_attn, p + ".attn", f);
    for_each_tensor(e.layers[i].norm1, p + ".norm1", f);
    for_each_tensor(e.layers[i].ff, p + ".ff", f);
    for_each_tensor(e.layers[i].norm2, p + ".norm2", f);
  }
}

template <class M, class F>
void for_each_tensor(M& m, F&& f) requires requires { m.decoder; } {
  for_each_tensor(m.encoder, "", f);
  for (std::size_t i = 0; i < m.decoder.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    auto& layer = m.decoder[i];
    for_each_tensor(layer.self_attn, p + ".self_attn", f);
    for_each_tensor(layer.norm1, p + ".norm1", f);
    for_each_tensor(layer.cross_attn, p + ".cross_attn", f);
    for_each_tensor(layer.norm2, p + ".norm2", f);
    for_each_tensor(layer.ff, p + ".ff", f);
    for_each_tensor(layer.norm3, p + ".norm3", f);
  }
  f(std::string("out.w"), m.out_w);
  f(std::string("out.b"), m.out_b);
}

/// Weights plus the fixed positional table (not trained, not checkpointed).
struct ModelParams {
  ModelWeights<Matrix> weights;
  Matrix positional;
};

/// Sinusoidal absolute positional encoding; dim must be even.
Matrix positional_encoding(std::size_t length, std::size_t dim);

/// Uniform(-b, b) with b = sqrt(6 / (rows + cols)).
Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

/// Deterministic initialisation; identical (config, seed) give identical bytes.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Initialises an encoder stack (shared with the event-log classifier).
EncoderWeights<Matrix> init_encoder(const ModelConfig& config, std::mt19937_64& rng);

/// Tensors of the model in visiting order.
std::vector<Matrix*> tensors(ModelWeights<Matrix>& weights);
std::vector<const Matrix*> tensors(const ModelWeights<Matrix>& weights);
std::vector<std::string> tensor_names(const ModelWeights<Matrix>& weights);

/// Puts every weight on the tape, as parameters or as constants.
ModelWeights<ad::Var> bind(ad::Tape& tape, const ModelWeights<Matrix>& weights, bool trainable);
EncoderWeights<ad::Var> bind(ad::Tape& tape, const EncoderWeights<Matrix>& weights, bool trainable);

struct ForwardOptions {
  bool train_mode = false;
  ad::SelectionLog* selections = nullptr;
};

/// Embedding followed by the encoder stack; returns L x model_dim.
ad::Var encode(const EncoderWeights<ad::Var>& weights, const Matrix& positional,
               const ModelConfig& config, const Matrix& input, const ForwardOptions& options);

/// Full encoder-decoder pass; returns pred_len x out_features.
ad::Var forward(const ModelWeights<ad::Var>& weights, const Matrix& positional,
                const ModelConfig& config, const Matrix& enc_in, const Matrix& dec_in,
                const ForwardOptions& options);

/// Convenience inference/training-mode pass on a private tape.
Matrix forward(const ModelParams& params, const ModelConfig& config, const Matrix& enc_in,
               const Matrix& dec_in, bool train_mode = false, std::uint64_t dropout_seed = 0);

/// Last label_len rows of enc_in followed by pred_len zero rows.
Matrix make_decoder_input(const Matrix& enc_in, std::size_t label_len, std::size_t pred_len);

}  // namespace qsel
