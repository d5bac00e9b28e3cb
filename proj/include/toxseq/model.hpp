#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toxseq/encoder.hpp"
#include "toxseq/head.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/text.hpp"

namespace toxseq {

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;
  // Feed the summed embeddings straight into the head (no transformer
  // layers); the recurrent-only ablation.
  bool bypass_encoder = false;

  void validate() const {
    encoder.validate();
    head.validate();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Prediction {
  int label = 0;
  double p_toxic = 0.0;
};

/// Encoder plus classifier head. Tensors are shared handles, so copying a
/// Model aliases its parameters; use clone() for an independent copy.
struct Model {
  ModelConfig config;
  EncoderParams encoder;
  HeadParams head;

  static Model init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    Rng encoder_rng = rng.split();
    Rng head_rng = rng.split();
    Model m;
    m.config = config;
    m.encoder = EncoderParams::init(config.encoder, encoder_rng);
    m.head = HeadParams::init(config.head, config.encoder.model_dim, config.encoder.max_len,
                              head_rng);
    return m;
  }

  std::vector<NamedTensor> named_parameters() const {
    auto out = encoder.named_parameters();
    for (auto& p : head.named_parameters()) out.push_back(std::move(p));
    return out;
  }

  Model clone() const {
    Model copy = *this;
    auto deep = [](Tensor& t) {
      const bool rg = t.requires_grad();
      t = t.detach();
      t.set_requires_grad(rg);
    };
    deep(copy.encoder.token_embedding);
    deep(copy.encoder.segment_embedding);
    deep(copy.encoder.position_embedding);
    for (auto& L : copy.encoder.layers) {
      for (Tensor* t : {&L.query_weight, &L.query_bias, &L.key_weight, &L.key_bias,
                        &L.value_weight, &L.value_bias, &L.output_weight, &L.output_bias,
                        &L.norm1_scale, &L.norm1_offset, &L.ff1_weight, &L.ff1_bias,
                        &L.ff2_weight, &L.ff2_bias, &L.norm2_scale, &L.norm2_offset}) {
        deep(*t);
      }
    }
    deep(copy.encoder.mlm_weight);
    deep(copy.encoder.mlm_bias);
    for (Tensor* t : {&copy.head.feature_weight, &copy.head.feature_bias, &copy.head.fc_weight,
                      &copy.head.fc_bias, &copy.head.out_weight, &copy.head.out_bias}) {
      deep(*t);
    }
    for (auto& dir : copy.head.directions) {
      deep(dir.input_weight);
      deep(dir.recurrent_weight);
      deep(dir.bias);
    }
    return copy;
  }
};

/// Encoder features for one example, honoring the bypass ablation.
inline Tensor model_features(const Model& model, const EncodedExample& example, Mode mode,
                             Rng* rng = nullptr) {
  if (model.config.bypass_encoder) {
    if (example.length() != model.config.encoder.max_len) {
      throw ShapeError("model: example length " + std::to_string(example.length()) +
                       " differs from max_len " + std::to_string(model.config.encoder.max_len));
    }
    return embed(example, model.encoder);
  }
  return encode_sequence(example, model.encoder, model.config.encoder, mode, rng).features;
}

/// Class probabilities [1 x 2]; column 1 is p(toxic).
inline Tensor forward(const Model& model, const EncodedExample& example, Mode mode,
                      Rng* rng = nullptr) {
  const Tensor features = model_features(model, example, mode, rng);
  return head_forward(features, example.attention_mask, model.head, model.config.head);
}

/// label = 1 iff p_toxic >= threshold.
inline Prediction predict(const Model& model, const EncodedExample& example,
                          double threshold = 0.5) {
  NoGradGuard no_grad;
  const Tensor probs = forward(model, example, Mode::eval);
  const double p = probs.at(0, 1);
  return {p >= threshold ? 1 : 0, p};
}

}  // namespace toxseq
