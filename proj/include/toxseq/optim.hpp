#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/tensor.hpp"

namespace toxseq {

enum class OptimizerKind { sgd, adam };

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t steps = 0;
};

namespace detail {
inline std::span<const double> require_grad(const NamedTensor& p) {
  if (!p.tensor.has_grad()) {
    throw PreconditionError("optimizer: parameter '" + p.name + "' has no gradient");
  }
  return p.tensor.grad();
}
}  // namespace detail

/// p <- p - lr * g
inline void sgd_step(NamedTensor& param, double learning_rate) {
  const auto g = detail::require_grad(param);
  auto p = param.tensor.mutable_data();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g[i];
}

/// Bias-corrected Adam update.
inline void adam_step(NamedTensor& param, AdamState& state, double learning_rate,
                      const AdamHyper& hyper) {
  const auto g = detail::require_grad(param);
  auto p = param.tensor.mutable_data();
  if (state.first_moment.empty()) {
    state.first_moment.assign(p.size(), 0.0);
    state.second_moment.assign(p.size(), 0.0);
  }
  ++state.steps;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g[i];
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g[i] * g[i];
    p[i] -= learning_rate * (m / c1) / (std::sqrt(v / c2) + hyper.eps);
  }
}

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before scaling.
inline double clip_grad_norm(std::span<NamedTensor> params, double max_norm) {
  double squared = 0.0;
  for (auto& p : params) {
    for (double g : detail::require_grad(p)) squared += g * g;
  }
  const double norm = std::sqrt(squared);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      for (auto& g : p.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

/// Parameter groups with their own learning rates and shared settings.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamHyper hyper = {}, std::optional<double> clip_norm = {})
      : kind_(kind), hyper_(hyper), clip_norm_(clip_norm) {}

  void add_group(std::vector<NamedTensor> params, double learning_rate) {
    for (auto& p : params) {
      entries_.push_back({std::move(p), learning_rate, {}});
    }
  }

  void zero_grad() {
    for (auto& e : entries_) e.param.tensor.zero_grad();
  }

  void step() {
    if (clip_norm_) {
      std::vector<NamedTensor> all;
      all.reserve(entries_.size());
      for (auto& e : entries_) all.push_back(e.param);
      clip_grad_norm(all, *clip_norm_);
    }
    for (auto& e : entries_) {
      if (kind_ == OptimizerKind::sgd) {
        sgd_step(e.param, e.learning_rate);
      } else {
        adam_step(e.param, e.state, e.learning_rate, hyper_);
      }
    }
  }

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    NamedTensor param;
    double learning_rate;
    AdamState state;
  };

  OptimizerKind kind_;
  AdamHyper hyper_;
  std::optional<double> clip_norm_;
  std::vector<Entry> entries_;
};

}  // namespace toxseq
