#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "toxseq/error.hpp"

namespace toxseq {

// Positive class is toxic (label 1).
struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t n() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw PreconditionError("confusion: " + std::to_string(predictions.size()) +
                            " predictions for " + std::to_string(labels.size()) + " labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      throw PreconditionError("confusion: non-binary value at index " + std::to_string(i));
    }
    if (p == 1 && y == 1) ++c.tp;
    else if (p == 1) ++c.fp;
    else if (y == 1) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Ratios with a zero denominator are absent rather than 0 or NaN.
struct MetricsReport {
  Confusion counts;
  std::optional<double> precision;
  std::optional<double> recall;
  double accuracy = 0.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport metrics(const Confusion& c) {
  if (c.n() == 0) throw PreconditionError("metrics: empty confusion matrix");
  MetricsReport r;
  r.counts = c;
  if (c.tp + c.fp > 0) {
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn > 0) {
    r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.n());
  return r;
}

}  // namespace toxseq
