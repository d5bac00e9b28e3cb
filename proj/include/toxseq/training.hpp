#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "toxseq/error.hpp"
#include "toxseq/metrics.hpp"
#include "toxseq/model.hpp"
#include "toxseq/ops.hpp"
#include "toxseq/optim.hpp"
#include "toxseq/rng.hpp"

namespace toxseq {

enum class ClassWeighting { none, inverse_frequency };

struct TrainConfig {
  double learning_rate = 1e-3;          // head parameters
  double encoder_learning_rate = 1e-4;  // unfrozen encoder parameters
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamHyper adam;
  ClassWeighting class_weighting = ClassWeighting::inverse_frequency;
  std::size_t early_stop_patience = 3;
  std::uint64_t seed = 0;
  bool encoder_frozen = false;
  std::optional<double> gradient_clip_norm;

  void validate() const {
    if (!(learning_rate > 0.0) || !(encoder_learning_rate > 0.0)) {
      throw PreconditionError("train config: learning rates must be positive");
    }
    if (batch_size == 0) throw PreconditionError("train config: batch_size must be >= 1");
    if (gradient_clip_norm && !(*gradient_clip_norm > 0.0)) {
      throw PreconditionError("train config: gradient_clip_norm must be positive");
    }
  }
};

using ClassWeights = std::array<double, 2>;

namespace detail {

// Smallest-ulp-distance pair (w0, w1) around the nominal weights whose
// products with the class counts round to the same double.
inline ClassWeights equalize_masses(double w0, double w1, double n0, double n1) {
  constexpr int kReach = 16;
  auto step = [](double v, int k) {
    for (; k > 0; --k) v = std::nextafter(v, std::numeric_limits<double>::infinity());
    for (; k < 0; ++k) v = std::nextafter(v, -std::numeric_limits<double>::infinity());
    return v;
  };
  ClassWeights best{w0, w1};
  int best_cost = std::numeric_limits<int>::max();
  for (int a = -kReach; a <= kReach; ++a) {
    const double c0 = step(w0, a);
    const double m0 = c0 * n0;
    for (int b = -kReach; b <= kReach; ++b) {
      const int cost = std::abs(a) + std::abs(b);
      if (cost >= best_cost) continue;
      const double c1 = step(w1, b);
      if (c1 * n1 == m0) {
        best = {c0, c1};
        best_cost = cost;
      }
    }
  }
  return best;
}

}  // namespace detail

/// inverse_frequency: w_c = N / (2 N_c), nudged by at most a few ulps so that
/// w_0 N_0 and w_1 N_1 are equal as doubles. none: both weights 1.
inline ClassWeights class_weights(std::span<const int> labels,
                                  ClassWeighting mode = ClassWeighting::inverse_frequency) {
  std::array<std::size_t, 2> counts{};
  for (int y : labels) {
    if (y != 0 && y != 1) throw PreconditionError("class_weights: non-binary label");
    ++counts[static_cast<std::size_t>(y)];
  }
  if (counts[0] == 0 || counts[1] == 0) {
    throw PreconditionError("class_weights: both classes must be present");
  }
  if (mode == ClassWeighting::none) return {1.0, 1.0};
  const double n = static_cast<double>(labels.size());
  const double n0 = static_cast<double>(counts[0]);
  const double n1 = static_cast<double>(counts[1]);
  const double w0 = n / (2.0 * n0);
  const double w1 = n / (2.0 * n1);
  if (w0 * n0 == w1 * n1) return {w0, w1};
  return detail::equalize_masses(w0, w1, n0, n1);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  MetricsReport val_metrics;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;
  double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"val_precision", opt(r.val_metrics.precision)},
          {"val_recall", opt(r.val_metrics.recall)},
          {"val_accuracy", r.val_metrics.accuracy}};
}

/// One JSON object per line, one line per epoch. Undefined metrics are null.
inline void write_train_log(const TrainReport& report, std::ostream& out) {
  for (const auto& r : report.epochs) out << to_json(r).dump() << '\n';
}

struct Evaluation {
  double loss = 0.0;
  MetricsReport metrics;
  std::vector<double> p_toxic;
};

inline std::vector<int> labels_of(std::span<const EncodedExample> examples) {
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) {
    if (!ex.label) throw PreconditionError("training: example without a label");
    labels.push_back(*ex.label);
  }
  return labels;
}

/// Eval-mode weighted cross-entropy plus metrics at `threshold`.
inline Evaluation evaluate(const Model& model, std::span<const EncodedExample> examples,
                           const ClassWeights& weights = {1.0, 1.0}, double threshold = 0.5) {
  if (examples.empty()) throw PreconditionError("evaluate: empty example set");
  NoGradGuard no_grad;
  const auto labels = labels_of(examples);
  Evaluation ev;
  std::vector<int> predictions;
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Tensor probs = forward(model, examples[i], Mode::eval);
    const double p = probs.at(0, 1);
    ev.p_toxic.push_back(p);
    predictions.push_back(p >= threshold ? 1 : 0);
    const double py = probs.at(0, static_cast<std::size_t>(labels[i]));
    total += -weights[labels[i]] * std::log(std::max(py, kProbabilityEpsilon));
  }
  ev.loss = total / static_cast<double>(examples.size());
  ev.metrics = metrics(confusion(predictions, labels));
  return ev;
}

/// Weighted cross-entropy of one mini-batch, recorded on the tape.
inline Tensor batch_loss(const Model& model, std::span<const EncodedExample> batch,
                         const ClassWeights& weights, Mode mode, Rng* rng) {
  std::vector<Tensor> rows;
  std::vector<int> labels;
  std::vector<double> row_weights;
  for (const auto& ex : batch) {
    rows.push_back(forward(model, ex, mode, rng));
    labels.push_back(ex.label.value());
    row_weights.push_back(weights[labels.back()]);
  }
  const Tensor probs = rows.size() == 1 ? rows.front() : concat(rows, 0);
  return cross_entropy(probs, labels, row_weights);
}

/// Encoder parameters the classifier objective reaches: the embeddings,
/// plus the transformer layers unless bypassed. The masked-token head is
/// never part of this objective.
inline std::vector<NamedTensor> encoder_classifier_parameters(const Model& model) {
  std::vector<NamedTensor> out;
  for (auto& p : model.encoder.named_parameters()) {
    if (p.name.starts_with("encoder.mlm.")) continue;
    if (model.config.bypass_encoder && p.name.starts_with("encoder.layer")) continue;
    out.push_back(std::move(p));
  }
  return out;
}

struct FitResult {
  Model model;
  TrainReport report;
};

/// Mini-batch training with per-epoch validation. Returns the parameters of
/// the epoch with the lowest validation loss.
inline FitResult fit(std::span<const EncodedExample> train, std::span<const EncodedExample> val,
                     const Model& initial, const TrainConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  FitResult result{initial.clone(), {}};
  if (config.max_epochs == 0) return result;
  if (train.empty() || val.empty()) throw PreconditionError("fit: empty train or validation set");

  const auto train_labels = labels_of(train);
  const ClassWeights weights = class_weights(train_labels, config.class_weighting);

  Model model = initial.clone();
  const auto encoder_params = model.encoder.named_parameters();
  if (config.encoder_frozen) {
    for (auto p : encoder_params) p.tensor.set_requires_grad(false);
  }

  Optimizer optimizer(config.optimizer, config.adam, config.gradient_clip_norm);
  optimizer.add_group(model.head.named_parameters(), config.learning_rate);
  if (!config.encoder_frozen) {
    optimizer.add_group(encoder_classifier_parameters(model), config.encoder_learning_rate);
  }

  Rng rng(config.seed);
  Rng shuffle_rng = rng.split();
  Rng dropout_rng = rng.split();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_val = std::numeric_limits<double>::infinity();
  Model best = model.clone();
  std::size_t since_best = 0;
  std::vector<EncodedExample> batch;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      const Tensor loss = batch_loss(model, batch, weights, Mode::train, &dropout_rng);
      if (!std::isfinite(loss.item())) {
        throw DivergenceError("fit: non-finite training loss at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      }
      loss_sum += loss.item() * static_cast<double>(stop - start);
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    const Evaluation ev = evaluate(model, val, weights);
    if (!std::isfinite(ev.loss)) {
      throw DivergenceError("fit: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    record.val_loss = ev.loss;
    record.val_metrics = ev.metrics;
    result.report.epochs.push_back(record);

    if (ev.loss < best_val) {
      best_val = ev.loss;
      best = model.clone();
      result.report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }

  if (config.encoder_frozen) {
    for (auto p : best.encoder.named_parameters()) p.tensor.set_requires_grad(true);
  }
  result.model = std::move(best);
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace toxseq
