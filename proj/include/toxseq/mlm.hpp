#pragma once

#include <cstddef>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/text.hpp"

namespace toxseq {

struct MaskingOptions {
  double selection_rate = 0.15;
  // Of the selected positions: this share becomes [MASK], the next
  // random_share becomes a random non-reserved token, the rest stay as is.
  double mask_share = 0.8;
  double random_share = 0.1;
};

struct MlmTargets {
  std::vector<std::size_t> positions;
  std::vector<TokenId> original_ids;
};

struct MaskedExample {
  EncodedExample example;
  MlmTargets targets;
};

/// Cloze corruption for masked-token pretraining. Only content positions
/// (attended, not [CLS]/[SEP]/[PAD]) are eligible; if none is drawn, one is
/// picked uniformly so every example has a target.
inline MaskedExample mask_for_mlm(const EncodedExample& example, std::size_t vocab_size, Rng& rng,
                                  const MaskingOptions& options = {}) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < example.length(); ++i) {
    const TokenId id = example.token_ids[i];
    if (example.attention_mask[i] && id != Vocab::kCls && id != Vocab::kSep && id != Vocab::kPad) {
      eligible.push_back(i);
    }
  }
  if (eligible.empty()) throw PreconditionError("mask_for_mlm: example has no content tokens");

  std::vector<std::size_t> selected;
  for (auto pos : eligible) {
    if (rng.uniform() < options.selection_rate) selected.push_back(pos);
  }
  if (selected.empty()) selected.push_back(eligible[rng.uniform_int(eligible.size())]);

  MaskedExample out{example, {}};
  const bool can_randomize = vocab_size > Vocab::kReservedCount;
  for (auto pos : selected) {
    out.targets.positions.push_back(pos);
    out.targets.original_ids.push_back(example.token_ids[pos]);
    const double roll = rng.uniform();
    if (roll < options.mask_share) {
      out.example.token_ids[pos] = Vocab::kMask;
    } else if (roll < options.mask_share + options.random_share) {
      out.example.token_ids[pos] =
          can_randomize ? static_cast<TokenId>(Vocab::kReservedCount +
                                               rng.uniform_int(vocab_size - Vocab::kReservedCount))
                        : Vocab::kMask;
    }
  }
  return out;
}

inline MaskedExample mask_for_mlm(const EncodedExample& example, const Vocab& vocab, Rng& rng,
                                  const MaskingOptions& options = {}) {
  return mask_for_mlm(example, vocab.size(), rng, options);
}

}  // namespace toxseq
