#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/mlm.hpp"
#include "toxseq/ops.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/tensor.hpp"
#include "toxseq/text.hpp"

namespace toxseq {

enum class Mode { train, eval };

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t model_dim = 64;
  std::size_t ff_dim = 128;
  std::size_t max_len = 64;
  std::size_t vocab_size = 0;
  double dropout_rate = 0.1;

  void validate() const {
    if (num_heads == 0 || model_dim == 0 || ff_dim == 0 || max_len == 0 || vocab_size == 0) {
      throw PreconditionError("encoder config: all dimensions must be positive");
    }
    if (model_dim % num_heads != 0) {
      throw PreconditionError("encoder config: model_dim " + std::to_string(model_dim) +
                              " is not divisible by num_heads " + std::to_string(num_heads));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw PreconditionError("encoder config: dropout_rate must be in [0,1)");
    }
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayerParams {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
  Tensor norm1_scale, norm1_offset;
  Tensor ff1_weight, ff1_bias;
  Tensor ff2_weight, ff2_bias;
  Tensor norm2_scale, norm2_offset;
};

struct EncoderParams {
  Tensor token_embedding;     // [vocab_size x d_model]
  Tensor segment_embedding;   // [2 x d_model]
  Tensor position_embedding;  // [max_len x d_model]
  std::vector<EncoderLayerParams> layers;
  Tensor mlm_weight;  // [vocab_size x d_model]
  Tensor mlm_bias;    // [vocab_size]

  /// Weights ~ N(0, 0.02²); layer-norm scale 1 and offset 0; biases 0.
  static EncoderParams init(const EncoderConfig& config, Rng& rng) {
    config.validate();
    const std::size_t d = config.model_dim;
    auto normal = [&rng](Shape shape) {
      std::vector<double> v(shape_numel(shape));
      for (auto& x : v) x = rng.normal(0.0, 0.02);
      return Tensor(std::move(shape), std::move(v), true);
    };
    auto zeros = [](std::size_t n) { return Tensor::zeros({n}, true); };
    auto ones = [](std::size_t n) { return Tensor::full({n}, 1.0, true); };

    EncoderParams p;
    p.token_embedding = normal({config.vocab_size, d});
    p.segment_embedding = normal({2, d});
    p.position_embedding = normal({config.max_len, d});
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      EncoderLayerParams layer;
      layer.query_weight = normal({d, d});
      layer.query_bias = zeros(d);
      layer.key_weight = normal({d, d});
      layer.key_bias = zeros(d);
      layer.value_weight = normal({d, d});
      layer.value_bias = zeros(d);
      layer.output_weight = normal({d, d});
      layer.output_bias = zeros(d);
      layer.norm1_scale = ones(d);
      layer.norm1_offset = zeros(d);
      layer.ff1_weight = normal({config.ff_dim, d});
      layer.ff1_bias = zeros(config.ff_dim);
      layer.ff2_weight = normal({d, config.ff_dim});
      layer.ff2_bias = zeros(d);
      layer.norm2_scale = ones(d);
      layer.norm2_offset = zeros(d);
      p.layers.push_back(std::move(layer));
    }
    p.mlm_weight = normal({config.vocab_size, d});
    p.mlm_bias = zeros(config.vocab_size);
    return p;
  }

  std::vector<NamedTensor> named_parameters() const {
    std::vector<NamedTensor> out{{"encoder.token_embedding", token_embedding},
                                 {"encoder.segment_embedding", segment_embedding},
                                 {"encoder.position_embedding", position_embedding}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::string prefix = "encoder.layer" + std::to_string(l) + ".";
      out.push_back({prefix + "query.weight", L.query_weight});
      out.push_back({prefix + "query.bias", L.query_bias});
      out.push_back({prefix + "key.weight", L.key_weight});
      out.push_back({prefix + "key.bias", L.key_bias});
      out.push_back({prefix + "value.weight", L.value_weight});
      out.push_back({prefix + "value.bias", L.value_bias});
      out.push_back({prefix + "output.weight", L.output_weight});
      out.push_back({prefix + "output.bias", L.output_bias});
      out.push_back({prefix + "norm1.scale", L.norm1_scale});
      out.push_back({prefix + "norm1.offset", L.norm1_offset});
      out.push_back({prefix + "ff1.weight", L.ff1_weight});
      out.push_back({prefix + "ff1.bias", L.ff1_bias});
      out.push_back({prefix + "ff2.weight", L.ff2_weight});
      out.push_back({prefix + "ff2.bias", L.ff2_bias});
      out.push_back({prefix + "norm2.scale", L.norm2_scale});
      out.push_back({prefix + "norm2.offset", L.norm2_offset});
    }
    out.push_back({"encoder.mlm.weight", mlm_weight});
    out.push_back({"encoder.mlm.bias", mlm_bias});
    return out;
  }
};

/// Final-layer features C; row 0 is the [CLS] feature.
struct EncoderOutput {
  Tensor features;  // [max_len x d_model]
  std::vector<int> attention_mask;
};

/// Row i = token_table[token_i] + segment_table[segment_i] + position_table[position_i].
inline Tensor embed(const EncodedExample& example, const EncoderParams& params) {
  return add(add(gather_rows(params.token_embedding, example.token_ids),
                 gather_rows(params.segment_embedding, example.segment_ids)),
             gather_rows(params.position_embedding, example.position_ids));
}

namespace detail {

inline Tensor key_mask_bias(std::span<const int> mask) {
  std::vector<double> bias(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) bias[j] = mask[j] ? 0.0 : -1e9;
  return Tensor({mask.size()}, std::move(bias));
}

inline Rng& require_rng(Rng* rng) {
  if (!rng) throw PreconditionError("training mode with dropout needs an Rng");
  return *rng;
}

}  // namespace detail

/// Scaled dot-product attention over `num_heads` column groups of the
/// projected queries/keys/values. Padded key positions get a -1e9 score
/// offset before the softmax. When `head_probs` is given it receives each
/// head's [n x n] attention matrix.
inline Tensor multi_head_attention(const Tensor& x, const EncoderLayerParams& layer,
                                   std::span<const int> mask, std::size_t num_heads,
                                   std::vector<Tensor>* head_probs = nullptr) {
  detail::require_rank("multi_head_attention", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (mask.size() != n) {
    throw ShapeError("multi_head_attention: mask of length " + std::to_string(mask.size()) +
                     " for " + std::to_string(n) + " positions");
  }
  if (num_heads == 0 || d % num_heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(d) + " not divisible into " +
                     std::to_string(num_heads) + " heads");
  }
  const std::size_t head_dim = d / num_heads;
  const Tensor q = linear(x, layer.query_weight, layer.query_bias);
  const Tensor k = linear(x, layer.key_weight, layer.key_bias);
  const Tensor v = linear(x, layer.value_weight, layer.value_bias);
  const Tensor bias = detail::key_mask_bias(mask);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor qh = slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(v, h * head_dim, head_dim);
    const Tensor scores = add_rowwise(scale(matmul(qh, transpose(kh)), inv_sqrt), bias);
    const Tensor probs = softmax(scores, 1);
    if (head_probs) head_probs->push_back(probs);
    heads.push_back(matmul(probs, vh));
  }
  const Tensor merged = num_heads == 1 ? heads.front() : concat(heads, 1);
  return linear(merged, layer.output_weight, layer.output_bias);
}

/// Post-norm block: LN(x + drop(attn(x))) then LN(h + drop(ff(h))).
inline Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& layer,
                            std::span<const int> mask, const EncoderConfig& config, Mode mode,
                            Rng* rng = nullptr) {
  const bool drop = mode == Mode::train && config.dropout_rate > 0.0;
  Tensor attended = multi_head_attention(x, layer, mask, config.num_heads);
  if (drop) attended = dropout(attended, config.dropout_rate, detail::require_rng(rng));
  const Tensor h = layer_norm(add(x, attended), layer.norm1_scale, layer.norm1_offset);
  Tensor ff = linear(relu(linear(h, layer.ff1_weight, layer.ff1_bias)), layer.ff2_weight,
                     layer.ff2_bias);
  if (drop) ff = dropout(ff, config.dropout_rate, detail::require_rng(rng));
  return layer_norm(add(h, ff), layer.norm2_scale, layer.norm2_offset);
}

inline EncoderOutput encode_sequence(const EncodedExample& example, const EncoderParams& params,
                                     const EncoderConfig& config, Mode mode, Rng* rng = nullptr) {
  if (example.length() != config.max_len) {
    throw ShapeError("encode_sequence: example length " + std::to_string(example.length()) +
                     " differs from max_len " + std::to_string(config.max_len));
  }
  Tensor x = embed(example, params);
  for (const auto& layer : params.layers) {
    x = encoder_layer(x, layer, example.attention_mask, config, mode, rng);
  }
  return {x, example.attention_mask};
}

/// Vocabulary distributions at the target positions of one masked example.
inline Tensor mlm_probabilities(const MaskedExample& masked, const EncoderParams& params,
                                const EncoderConfig& config, Mode mode, Rng* rng = nullptr) {
  if (masked.targets.positions.empty()) throw PreconditionError("mlm: empty target set");
  const auto out = encode_sequence(masked.example, params, config, mode, rng);
  std::vector<int> rows(masked.targets.positions.begin(), masked.targets.positions.end());
  const Tensor selected = gather_rows(out.features, rows);
  return softmax(linear(selected, params.mlm_weight, params.mlm_bias), 1);
}

/// Cross-entropy against original ids, averaged over every target position
/// in the batch.
inline Tensor mlm_loss(std::span<const MaskedExample> batch, const EncoderParams& params,
                       const EncoderConfig& config, Mode mode, Rng* rng = nullptr) {
  std::vector<Tensor> probs;
  std::vector<int> labels;
  for (const auto& masked : batch) {
    if (masked.targets.positions.empty()) throw PreconditionError("mlm_loss: empty target set");
    probs.push_back(mlm_probabilities(masked, params, config, mode, rng));
    labels.insert(labels.end(), masked.targets.original_ids.begin(),
                  masked.targets.original_ids.end());
  }
  if (probs.empty()) throw PreconditionError("mlm_loss: empty target set");
  const Tensor all = probs.size() == 1 ? probs.front() : concat(probs, 0);
  return cross_entropy(all, labels);
}

}  // namespace toxseq
