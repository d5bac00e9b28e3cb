#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/ops.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/tensor.hpp"

namespace toxseq {

enum class CellMode { lstm, simple_tanh };
enum class PoolingMode { concat_all, final_states, mean };
enum class DirectionalMerge { sum, concat };

struct HeadConfig {
  std::size_t weight_dim = 64;  // d_a
  std::size_t hidden_dim = 64;  // d_h
  std::size_t fc_dim = 64;      // d_fc
  CellMode cell = CellMode::lstm;
  PoolingMode pooling = PoolingMode::concat_all;
  DirectionalMerge merge = DirectionalMerge::sum;

  void validate() const {
    if (weight_dim == 0 || hidden_dim == 0 || fc_dim == 0) {
      throw PreconditionError("head config: all dimensions must be positive");
    }
  }

  std::size_t gate_count() const { return cell == CellMode::lstm ? 4 : 1; }
  std::size_t merged_dim() const {
    return merge == DirectionalMerge::sum ? hidden_dim : 2 * hidden_dim;
  }
  std::size_t pooled_dim(std::size_t max_len) const {
    switch (pooling) {
      case PoolingMode::concat_all: return max_len * merged_dim();
      case PoolingMode::final_states: return 2 * hidden_dim;
      case PoolingMode::mean: return merged_dim();
    }
    return 0;
  }

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// One recurrence direction. In lstm mode the gate blocks are stacked in
/// the order input, forget, candidate, output.
struct DirectionParams {
  Tensor input_weight;      // W_h^d [G*d_h x d_a]
  Tensor recurrent_weight;  // U^d   [G*d_h x d_h]
  Tensor bias;              // b_h^d [G*d_h]
};

struct HeadParams {
  Tensor feature_weight;  // W_a [d_a x d_model]
  Tensor feature_bias;    // b_a [d_a]
  std::array<DirectionParams, 2> directions;
  Tensor fc_weight;   // W_fc [d_fc x dim(H)]
  Tensor fc_bias;     // b_fc [d_fc]
  Tensor out_weight;  // W_s [2 x d_fc]
  Tensor out_bias;    // b_s [2]

  /// Weights ~ N(0, 1/fan_in), biases zero.
  static HeadParams init(const HeadConfig& config, std::size_t input_dim, std::size_t max_len,
                         Rng& rng) {
    config.validate();
    auto normal = [&rng](std::size_t rows, std::size_t cols) {
      std::vector<double> v(rows * cols);
      const double stddev = 1.0 / std::sqrt(static_cast<double>(cols));
      for (auto& x : v) x = rng.normal(0.0, stddev);
      return Tensor({rows, cols}, std::move(v), true);
    };
    auto zeros = [](std::size_t n) { return Tensor::zeros({n}, true); };
    const std::size_t gates = config.gate_count() * config.hidden_dim;

    HeadParams p;
    p.feature_weight = normal(config.weight_dim, input_dim);
    p.feature_bias = zeros(config.weight_dim);
    for (auto& dir : p.directions) {
      dir.input_weight = normal(gates, config.weight_dim);
      dir.recurrent_weight = normal(gates, config.hidden_dim);
      dir.bias = zeros(gates);
    }
    p.fc_weight = normal(config.fc_dim, config.pooled_dim(max_len));
    p.fc_bias = zeros(config.fc_dim);
    p.out_weight = normal(2, config.fc_dim);
    p.out_bias = zeros(2);
    return p;
  }

  std::vector<NamedTensor> named_parameters() const {
    std::vector<NamedTensor> out{{"head.feature.weight", feature_weight},
                                 {"head.feature.bias", feature_bias}};
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string prefix = "head.direction" + std::to_string(d) + ".";
      out.push_back({prefix + "input_weight", directions[d].input_weight});
      out.push_back({prefix + "recurrent_weight", directions[d].recurrent_weight});
      out.push_back({prefix + "bias", directions[d].bias});
    }
    out.push_back({"head.fc.weight", fc_weight});
    out.push_back({"head.fc.bias", fc_bias});
    out.push_back({"head.out.weight", out_weight});
    out.push_back({"head.out.bias", out_bias});
    return out;
  }
};

/// a_i = sigmoid(W_a C_i + b_a), applied to every row of C.
inline Tensor weight_features(const Tensor& features, const Tensor& weight, const Tensor& bias) {
  return sigmoid(linear(features, weight, bias));
}

struct CellState {
  Tensor h;  // [1 x d_h]
  Tensor c;  // [1 x d_h]; unused by simple_tanh
};

inline CellState zero_state(std::size_t hidden_dim) {
  return {Tensor::zeros({1, hidden_dim}), Tensor::zeros({1, hidden_dim})};
}

namespace detail {

// Recurrence given the precomputed input projection W a_i + b.
inline CellState cell_from_projection(const Tensor& projected, const CellState& prev,
                                      const Tensor& recurrent_weight, CellMode mode) {
  const Tensor z = add(projected, linear(prev.h, recurrent_weight));
  if (mode == CellMode::simple_tanh) return {tanh(z), prev.c};
  const std::size_t d = prev.h.dim(1);
  const Tensor input_gate = sigmoid(slice_cols(z, 0, d));
  const Tensor forget_gate = sigmoid(slice_cols(z, d, d));
  const Tensor candidate = tanh(slice_cols(z, 2 * d, d));
  const Tensor output_gate = sigmoid(slice_cols(z, 3 * d, d));
  const Tensor c = add(mul(forget_gate, prev.c), mul(input_gate, candidate));
  return {mul(output_gate, tanh(c)), c};
}

}  // namespace detail

/// One recurrent step. simple_tanh: h = tanh(W a + U h_prev + b).
/// lstm: gated update with c = f*c_prev + i*g and h = o*tanh(c).
inline CellState cell_step(const Tensor& input, const CellState& prev, const DirectionParams& params,
                           CellMode mode) {
  const std::size_t gates = params.bias.numel();
  const std::size_t expected = (mode == CellMode::lstm ? 4 : 1) * prev.h.dim(1);
  if (gates != expected) {
    throw ShapeError("cell_step: parameter block of " + std::to_string(gates) +
                     " rows does not fit hidden size " + std::to_string(prev.h.dim(1)));
  }
  return detail::cell_from_projection(linear(input, params.input_weight, params.bias), prev,
                                      params.recurrent_weight, mode);
}

struct BiStates {
  Tensor forward;   // [n x d_h], zero rows at padded positions
  Tensor backward;  // [n x d_h]
  Tensor merged;    // [n x d_h] (sum) or [n x 2 d_h] (concat)
};

/// Runs direction 0 left-to-right and direction 1 right-to-left over the
/// attended positions only; padded positions emit zeros and keep the state.
inline BiStates bilstm(const Tensor& inputs, std::span<const int> mask, const HeadParams& params,
                       const HeadConfig& config) {
  detail::require_rank("bilstm", inputs, 2);
  const std::size_t n = inputs.dim(0);
  if (mask.size() != n) {
    throw ShapeError("bilstm: mask of length " + std::to_string(mask.size()) + " for " +
                     std::to_string(n) + " positions");
  }
  const std::size_t d = config.hidden_dim;
  const Tensor zero_row = Tensor::zeros({1, d});

  auto run = [&](const DirectionParams& dir, bool reverse) {
    if (dir.bias.numel() != config.gate_count() * d) {
      throw ShapeError("bilstm: direction parameters do not match hidden size " +
                       std::to_string(d));
    }
    const Tensor projected = linear(inputs, dir.input_weight, dir.bias);
    std::vector<Tensor> rows(n, zero_row);
    CellState state = zero_state(d);
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t i = reverse ? n - 1 - step : step;
      if (!mask[i]) continue;
      state = detail::cell_from_projection(row(projected, i), state, dir.recurrent_weight,
                                           config.cell);
      rows[i] = state.h;
    }
    return concat(rows, 0);
  };

  BiStates out;
  out.forward = run(params.directions[0], false);
  out.backward = run(params.directions[1], true);
  out.merged = config.merge == DirectionalMerge::sum ? add(out.forward, out.backward)
                                                     : concat({out.forward, out.backward}, 1);
  return out;
}

/// Sentence vector H as a [1 x dim(H)] row.
inline Tensor pool(const BiStates& states, std::span<const int> mask, PoolingMode mode) {
  std::vector<int> live;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) live.push_back(static_cast<int>(i));
  if (live.empty()) throw PreconditionError("pool: no unmasked positions");
  switch (mode) {
    case PoolingMode::concat_all:
      return reshape(states.merged, {1, states.merged.numel()});
    case PoolingMode::final_states:
      return concat({row(states.forward, static_cast<std::size_t>(live.back())),
                     row(states.backward, static_cast<std::size_t>(live.front()))},
                    1);
    case PoolingMode::mean: {
      const Tensor weights =
          Tensor::full({1, live.size()}, 1.0 / static_cast<double>(live.size()));
      return matmul(weights, gather_rows(states.merged, live));
    }
  }
  throw PreconditionError("pool: unknown pooling mode");
}

/// H_relu = relu(W_fc H + b_fc).
inline Tensor fc_relu(const Tensor& pooled, const Tensor& weight, const Tensor& bias) {
  return relu(linear(pooled, weight, bias));
}

/// p(y) = softmax(W_s H_relu + b_s) as a [1 x 2] row.
inline Tensor classify(const Tensor& hidden, const Tensor& weight, const Tensor& bias) {
  return softmax(linear(hidden, weight, bias), 1);
}

/// Full head from encoder features to class probabilities.
inline Tensor head_forward(const Tensor& features, std::span<const int> mask,
                           const HeadParams& params, const HeadConfig& config) {
  const Tensor weighted = weight_features(features, params.feature_weight, params.feature_bias);
  const BiStates states = bilstm(weighted, mask, params, config);
  const Tensor pooled = pool(states, mask, config.pooling);
  return classify(fc_relu(pooled, params.fc_weight, params.fc_bias), params.out_weight,
                  params.out_bias);
}

}  // namespace toxseq
