#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/tensor.hpp"

namespace toxseq {

inline constexpr double kProbabilityEpsilon = 1e-12;
inline constexpr double kLayerNormEpsilon = 1e-12;

namespace detail {

/// Records a new tape node when any operand requires grad and recording is
/// enabled. The backward rule reads operands from node.parents in the order
/// they are passed here.
inline Tensor make_op(Shape shape, std::vector<double> value, std::initializer_list<Tensor> operands,
                      std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : operands) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : operands) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

inline Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& operands,
                      std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& t : operands) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : operands) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

inline void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Length of a bias operand that is either [n] or [1xn].
inline std::size_t vector_length(const char* op, const Tensor& b) {
  if (b.rank() == 1) return b.dim(0);
  if (b.rank() == 2 && b.dim(0) == 1) return b.dim(1);
  throw ShapeError(std::string(op) + ": expected a vector, got shape " + shape_str(b.shape()));
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df_from_output) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op(x.shape(), std::move(out), {x}, [df_from_output](Node& self) {
    Node& a = *self.parents[0];
    if (!a.requires_grad) return;
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += self.grad[i] * df_from_output(a.value[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  return detail::make_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    const auto& G = self.grad;
    if (na.requires_grad) {
      auto ga = na.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * nb.value[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (nb.requires_grad) {
      auto gb = nb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = na.value[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

/// x · Wᵀ + b for x [m×in], W [out×in], b [out] (b may be undefined).
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t m = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && detail::vector_length("linear", bias) != out_dim) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  std::vector<double> out(m * out_dim);
  const auto X = x.data();
  const auto W = weight.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = has_bias ? bias.data()[o] : 0.0;
      const double* xr = &X[i * in];
      const double* wr = &W[o * in];
      for (std::size_t p = 0; p < in; ++p) acc += xr[p] * wr[p];
      out[i * out_dim + o] = acc;
    }
  }
  auto rule = [m, in, out_dim, has_bias](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    detail::Node& nw = *self.parents[1];
    const auto& G = self.grad;
    if (nx.requires_grad) {
      auto gx = nx.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double g = G[i * out_dim + o];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < in; ++p) gx[i * in + p] += g * nw.value[o * in + p];
        }
    }
    if (nw.requires_grad) {
      auto gw = nw.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double g = G[i * out_dim + o];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < in; ++p) gw[o * in + p] += g * nx.value[i * in + p];
        }
    }
    if (has_bias) {
      detail::Node& nb = *self.parents[2];
      if (nb.requires_grad) {
        auto gb = nb.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G[i * out_dim + o];
      }
    }
  };
  if (has_bias) return detail::make_op({m, out_dim}, std::move(out), {x, weight, bias}, rule);
  return detail::make_op({m, out_dim}, std::move(out), {x, weight}, rule);
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return detail::make_op({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    if (!na.requires_grad) return;
    auto ga = na.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      auto g = parent->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.parents[k]->requires_grad) continue;
      auto g = self.parents[k]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& na = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

/// x [m×n] plus a row vector b ([n] or [1×n]) broadcast over rows.
inline Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  detail::require_rank("add_rowwise", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (detail::vector_length("add_rowwise", b) != n) {
    throw ShapeError("add_rowwise: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + b.data()[j];
  return detail::make_op({m, n}, std::move(out), {x, b}, [m, n](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    detail::Node& nb = *self.parents[1];
    if (nx.requires_grad) {
      auto g = nx.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

inline Tensor scale(const Tensor& x, double factor) {
  return detail::unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

inline Tensor add_scalar(const Tensor& x, double offset) {
  return detail::unary(
      x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// Inverted dropout: kept entries are scaled by 1/(1-rate).
inline Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw PreconditionError("dropout rate must be in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_op(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    auto g = nx.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Concatenation along `axis`; all other dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s) +
                       " on axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_block = out_shape[axis] * inner;

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + o * block, block, out.begin() + o * out_block + offset);
    }
    offset += block;
  }
  return detail::make_op(std::move(out_shape), std::move(out), parts,
                         [offsets, outer, out_block](detail::Node& self) {
                           for (std::size_t k = 0; k < self.parents.size(); ++k) {
                             detail::Node& p = *self.parents[k];
                             if (!p.requires_grad) continue;
                             auto g = p.grad_buffer();
                             const std::size_t block = g.size() / outer;
                             for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t i = 0; i < block; ++i)
                                 g[o * block + i] += self.grad[o * out_block + offsets[k] + i];
                           }
                         });
}

/// Rows [begin, begin+count) of a matrix.
inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_rank("slice_rows", x, 2);
  const std::size_t n = x.dim(1);
  if (begin + count > x.dim(0)) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + begin * n, x.data().begin() + (begin + count) * n);
  return detail::make_op({count, n}, std::move(out), {x}, [begin, n](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    auto g = nx.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

inline Tensor row(const Tensor& x, std::size_t index) { return slice_rows(x, index, 1); }

/// Columns [begin, begin+count) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_rank("slice_cols", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin + count > n) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().begin() + i * n + begin, count, out.begin() + i * count);
  return detail::make_op({m, count}, std::move(out), {x}, [m, n, begin, count](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    auto g = nx.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
  });
}

/// Table lookup: row r of the result is table[ids[r]].
inline Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  detail::require_rank("gather_rows", table, 2);
  const std::size_t rows = table.dim(0), n = table.dim(1);
  std::vector<double> out(ids.size() * n);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= rows) {
      throw PreconditionError("gather_rows: id " + std::to_string(ids[r]) +
                              " out of range for table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(table.data().begin() + ids[r] * n, n, out.begin() + r * n);
  }
  std::vector<int> index(ids.begin(), ids.end());
  return detail::make_op({ids.size(), n}, std::move(out), {table},
                         [index = std::move(index), n](detail::Node& self) {
                           detail::Node& nt = *self.parents[0];
                           if (!nt.requires_grad) return;
                           auto g = nt.grad_buffer();
                           for (std::size_t r = 0; r < index.size(); ++r)
                             for (std::size_t j = 0; j < n; ++j)
                               g[index[r] * n + j] += self.grad[r * n + j];
                         });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return detail::make_op({}, {total}, {x}, [](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    auto g = nx.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Max-subtracted exponential normalization along `axis`.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t len = x.dim(axis);
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) peak = std::max(peak, in[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(in[base + k * inner] - peak);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  return detail::make_op(x.shape(), std::move(out), {x}, [outer, inner, len](detail::Node& self) {
    detail::Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    auto g = nx.grad_buffer();
    const auto& y = self.value;
    const auto& gy = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += gy[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t at = base + k * inner;
          g[at] += y[at] * (gy[at] - dot);
        }
      }
  });
}

/// Mean negative log-likelihood of `labels` under row distributions `probs`.
/// Probabilities are clamped at kProbabilityEpsilon. Optional per-row weights
/// multiply each term; the mean is still taken over the row count.
inline Tensor cross_entropy(const Tensor& probs, std::span<const int> labels,
                            std::span<const double> weights = {}) {
  detail::require_rank("cross_entropy", probs, 2);
  const std::size_t rows = probs.dim(0), classes = probs.dim(1);
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  if (!weights.empty() && weights.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(rows) + " rows");
  }
  if (rows == 0) throw PreconditionError("cross_entropy: empty batch");
  const auto p = probs.data();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw PreconditionError("cross_entropy: label " + std::to_string(labels[r]) +
                              " out of range for " + std::to_string(classes) + " classes");
    }
    double row_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) row_sum += p[r * classes + c];
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw PreconditionError("cross_entropy: probability row " + std::to_string(r) +
                              " sums to " + std::to_string(row_sum));
    }
    const double w = weights.empty() ? 1.0 : weights[r];
    total += -w * std::log(std::max(p[r * classes + labels[r]], kProbabilityEpsilon));
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  std::vector<int> label_copy(labels.begin(), labels.end());
  std::vector<double> weight_copy(weights.begin(), weights.end());
  return detail::make_op(
      {}, {total * inv_rows}, {probs},
      [label_copy = std::move(label_copy), weight_copy = std::move(weight_copy), classes,
       inv_rows](detail::Node& self) {
        detail::Node& np = *self.parents[0];
        if (!np.requires_grad) return;
        auto g = np.grad_buffer();
        for (std::size_t r = 0; r < label_copy.size(); ++r) {
          const std::size_t at = r * classes + static_cast<std::size_t>(label_copy[r]);
          const double pv = np.value[at];
          if (pv <= kProbabilityEpsilon) continue;  // clamped: flat
          const double w = weight_copy.empty() ? 1.0 : weight_copy[r];
          g[at] += -self.grad[0] * w * inv_rows / pv;
        }
      });
}

/// Row-wise layer normalization with learned scale and offset.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = kLayerNormEpsilon) {
  detail::require_rank("layer_norm", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (detail::vector_length("layer_norm", gamma) != n ||
      detail::vector_length("layer_norm", beta) != n) {
    throw ShapeError("layer_norm: " + shape_str(x.shape()) + " with scale " +
                     shape_str(gamma.shape()) + " and offset " + shape_str(beta.shape()));
  }
  std::vector<double> out(m * n), normalized(m * n), inv_std(m);
  const auto X = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += X[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (X[i * n + j] - mu) * (X[i * n + j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized[i * n + j] = (X[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = gamma.data()[j] * normalized[i * n + j] + beta.data()[j];
    }
  }
  return detail::make_op(
      {m, n}, std::move(out), {x, gamma, beta},
      [m, n, normalized = std::move(normalized), inv_std = std::move(inv_std)](detail::Node& self) {
        detail::Node& nx = *self.parents[0];
        detail::Node& ng = *self.parents[1];
        detail::Node& nb = *self.parents[2];
        const auto& G = self.grad;
        if (ng.requires_grad) {
          auto g = ng.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += G[i * n + j] * normalized[i * n + j];
        }
        if (nb.requires_grad) {
          auto g = nb.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += G[i * n + j];
        }
        if (nx.requires_grad) {
          auto g = nx.grad_buffer();
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = G[i * n + j] * ng.value[j];
              mean_d += d;
              mean_dx += d * normalized[i * n + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = G[i * n + j] * ng.value[j];
              g[i * n + j] += inv_std[i] * (d - mean_d - normalized[i * n + j] * mean_dx);
            }
          }
        }
      });
}

}  // namespace toxseq
