#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "toxseq/tensor.hpp"

namespace toxseq {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences on every coordinate of
/// every parameter. Relative error is |a-b| / max(1, |a|, |b|).
///
/// `loss` must rebuild its graph from the parameters on each call and be
/// deterministic (any Rng it uses must be re-seeded inside).
inline GradCheckReport grad_check(const std::function<Tensor()>& loss,
                                  std::vector<NamedTensor> params, double eps = 1e-5) {
  for (auto& p : params) p.tensor.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    if (p.tensor.has_grad()) {
      analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      analytic.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].tensor.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coordinates;
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = err;
        report.worst_parameter = params[k].name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  for (auto& p : params) p.tensor.zero_grad();
  return report;
}

}  // namespace toxseq
