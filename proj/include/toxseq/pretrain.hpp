#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "toxseq/encoder.hpp"
#include "toxseq/error.hpp"
#include "toxseq/mlm.hpp"
#include "toxseq/optim.hpp"
#include "toxseq/rng.hpp"

namespace toxseq {

struct PretrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  AdamHyper adam;
  std::uint64_t seed = 0;
  MaskingOptions masking;
  std::optional<double> gradient_clip_norm;
};

struct PretrainReport {
  std::vector<double> step_losses;
};

/// Masked-token pretraining of `params` in place with Adam. Examples are
/// visited in seeded shuffled passes; each visit draws a fresh masking.
inline PretrainReport pretrain_mlm(EncoderParams& params, const EncoderConfig& config,
                                   std::span<const EncodedExample> corpus,
                                   const PretrainConfig& options) {
  if (options.batch_size == 0) throw PreconditionError("pretrain: batch_size must be >= 1");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].real_length() > 2) usable.push_back(i);
  }
  if (usable.empty()) throw PreconditionError("pretrain: corpus has no content tokens");

  Optimizer optimizer(OptimizerKind::adam, options.adam, options.gradient_clip_norm);
  optimizer.add_group(params.named_parameters(), options.learning_rate);

  Rng rng(options.seed);
  Rng order_rng = rng.split();
  Rng mask_rng = rng.split();
  Rng dropout_rng = rng.split();

  PretrainReport report;
  std::vector<std::size_t> order = usable;
  std::size_t cursor = order.size();
  std::vector<MaskedExample> batch;
  for (std::size_t step = 0; step < options.steps; ++step) {
    batch.clear();
    while (batch.size() < std::min(options.batch_size, usable.size())) {
      if (cursor == order.size()) {
        order_rng.shuffle(std::span(order));
        cursor = 0;
      }
      batch.push_back(mask_for_mlm(corpus[order[cursor++]], config.vocab_size, mask_rng,
                                   options.masking));
    }
    const Tensor loss = mlm_loss(batch, params, config, Mode::train, &dropout_rng);
    if (!std::isfinite(loss.item())) {
      throw DivergenceError("pretrain: non-finite loss at step " + std::to_string(step));
    }
    report.step_losses.push_back(loss.item());
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
  }
  optimizer.zero_grad();
  return report;
}

/// Fraction of content positions whose original id is the top-1 prediction
/// when that single position is replaced by [MASK].
inline double masked_recovery_rate(const EncoderParams& params, const EncoderConfig& config,
                                   std::span<const EncodedExample> corpus) {
  NoGradGuard no_grad;
  std::size_t hits = 0, total = 0;
  for (const auto& ex : corpus) {
    for (std::size_t pos = 0; pos < ex.length(); ++pos) {
      const TokenId id = ex.token_ids[pos];
      if (!ex.attention_mask[pos] || id == Vocab::kCls || id == Vocab::kSep || id == Vocab::kPad) {
        continue;
      }
      MaskedExample probe{ex, {{pos}, {id}}};
      probe.example.token_ids[pos] = Vocab::kMask;
      const Tensor probs = mlm_probabilities(probe, params, config, Mode::eval);
      const auto row = probs.data();
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      hits += static_cast<TokenId>(best) == id;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace toxseq
