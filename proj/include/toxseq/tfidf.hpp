#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/ops.hpp"
#include "toxseq/optim.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/text.hpp"

namespace toxseq {

struct SparseVector {
  std::vector<std::uint32_t> index;  // strictly increasing
  std::vector<double> value;

  double norm() const {
    double s = 0.0;
    for (double v : value) s += v * v;
    return std::sqrt(s);
  }
};

/// Smoothed TF-IDF features plus a logistic classifier over them.
class TfidfModel {
 public:
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::size_t>& document_frequency() const { return df_; }
  const std::vector<double>& idf() const { return idf_; }
  std::size_t document_count() const { return documents_; }
  std::size_t size() const { return terms_.size(); }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  double& bias() { return bias_; }
  double bias() const { return bias_; }

  std::optional<std::uint32_t> index_of(const std::string& term) const {
    auto it = index_.find(term);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// tf = count / token count, scaled by idf, L2-normalized. Unknown terms
  /// are ignored; an all-unknown text maps to the zero vector.
  SparseVector transform(std::string_view text) const {
    const auto tokens = tokenize(text);
    std::map<std::uint32_t, double> counts;
    for (const auto& tok : tokens) {
      if (auto i = index_of(tok)) counts[*i] += 1.0;
    }
    SparseVector v;
    if (tokens.empty()) return v;
    const double len = static_cast<double>(tokens.size());
    for (const auto& [i, c] : counts) {
      v.index.push_back(i);
      v.value.push_back(c / len * idf_[i]);
    }
    const double n = v.norm();
    if (n > 0.0)
      for (auto& x : v.value) x /= n;
    return v;
  }

  /// Vocabulary ranked by corpus count, ties broken lexicographically;
  /// idf = ln((1+N)/(1+df)) + 1.
  static TfidfModel fit(std::span<const std::string> corpus, std::size_t max_features = 0) {
    if (corpus.empty()) throw PreconditionError("tfidf: empty corpus");
    std::map<std::string, std::pair<std::size_t, std::size_t>> stats;  // term -> (count, df)
    for (const auto& doc : corpus) {
      auto tokens = tokenize(doc);
      for (const auto& t : tokens) ++stats[t].first;
      std::sort(tokens.begin(), tokens.end());
      tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
      for (const auto& t : tokens) ++stats[t].second;
    }
    std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(stats.begin(),
                                                                                    stats.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second.first > b.second.first; });
    if (max_features > 0 && ranked.size() > max_features) ranked.resize(max_features);

    TfidfModel m;
    m.documents_ = corpus.size();
    const double n = static_cast<double>(corpus.size());
    for (const auto& [term, s] : ranked) {
      m.index_.emplace(term, static_cast<std::uint32_t>(m.terms_.size()));
      m.terms_.push_back(term);
      m.df_.push_back(s.second);
      m.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(s.second))) + 1.0);
    }
    m.weights_.assign(m.terms_.size(), 0.0);
    return m;
  }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::size_t> df_;
  std::vector<double> idf_;
  std::size_t documents_ = 0;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

struct TfidfFit {
  TfidfModel model;
  std::vector<SparseVector> vectors;
};

inline TfidfFit tfidf_fit_transform(std::span<const std::string> corpus,
                                    std::size_t max_features = 0) {
  TfidfFit out{TfidfModel::fit(corpus, max_features), {}};
  out.vectors.reserve(corpus.size());
  for (const auto& doc : corpus) out.vectors.push_back(out.model.transform(doc));
  return out;
}

/// Row-sparse X times dense w, plus scalar b: logits [rows x 1].
inline Tensor sparse_linear(std::span<const SparseVector> rows, const Tensor& weight,
                            const Tensor& bias) {
  if (weight.rank() != 1 || bias.numel() != 1) {
    throw ShapeError("sparse_linear: weight " + shape_str(weight.shape()) + ", bias " +
                     shape_str(bias.shape()));
  }
  std::vector<double> out(rows.size());
  std::vector<const SparseVector*> refs;
  refs.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double acc = bias.data()[0];
    for (std::size_t k = 0; k < rows[r].index.size(); ++k) {
      if (rows[r].index[k] >= weight.numel()) {
        throw ShapeError("sparse_linear: feature index out of range");
      }
      acc += rows[r].value[k] * weight.data()[rows[r].index[k]];
    }
    out[r] = acc;
    refs.push_back(&rows[r]);
  }
  // The caller keeps `rows` alive until backward() has run.
  return detail::make_op({rows.size(), 1}, std::move(out), {weight, bias},
                         [refs = std::move(refs)](detail::Node& self) {
                           detail::Node& nw = *self.parents[0];
                           detail::Node& nb = *self.parents[1];
                           if (nw.requires_grad) {
                             auto g = nw.grad_buffer();
                             for (std::size_t r = 0; r < refs.size(); ++r)
                               for (std::size_t k = 0; k < refs[r]->index.size(); ++k)
                                 g[refs[r]->index[k]] += self.grad[r] * refs[r]->value[k];
                           }
                           if (nb.requires_grad) {
                             auto g = nb.grad_buffer();
                             for (double v : self.grad) g[0] += v;
                           }
                         });
}

struct BaselineConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  bool balance_classes = true;
};

/// Logistic regression on TF-IDF vectors, trained by mini-batch Adam on
/// cross-entropy through the tensor tape.
inline void baseline_fit(TfidfModel& model, std::span<const SparseVector> vectors,
                         std::span<const int> labels, const BaselineConfig& config = {}) {
  if (vectors.size() != labels.size()) {
    throw PreconditionError("baseline_fit: vectors and labels differ in length");
  }
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw PreconditionError("baseline_fit: non-binary label");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == labels.size()) {
    throw PreconditionError("baseline_fit: both classes must be present");
  }
  if (config.batch_size == 0) throw PreconditionError("baseline_fit: batch_size must be >= 1");

  const double n = static_cast<double>(labels.size());
  const double class_weight[2] = {
      config.balance_classes ? n / (2.0 * static_cast<double>(labels.size() - positives)) : 1.0,
      config.balance_classes ? n / (2.0 * static_cast<double>(positives)) : 1.0};

  Tensor weight({model.size()}, model.weights(), true);
  Tensor bias({1}, {model.bias()}, true);
  Optimizer optimizer(OptimizerKind::adam);
  optimizer.add_group({{"tfidf.weight", weight}, {"tfidf.bias", bias}}, config.learning_rate);

  Rng rng(config.seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SparseVector> batch;
  std::vector<int> batch_labels;
  std::vector<double> batch_weights;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      batch_labels.clear();
      batch_weights.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(vectors[order[i]]);
        batch_labels.push_back(labels[order[i]]);
        batch_weights.push_back(class_weight[labels[order[i]]]);
      }
      const Tensor p = sigmoid(sparse_linear(batch, weight, bias));
      const Tensor probs = concat({add_scalar(scale(p, -1.0), 1.0), p}, 1);
      const Tensor loss = cross_entropy(probs, batch_labels, batch_weights);
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }
  }
  model.weights().assign(weight.data().begin(), weight.data().end());
  model.bias() = bias.data()[0];
}

inline double baseline_probability(const TfidfModel& model, const SparseVector& v) {
  double z = model.bias();
  for (std::size_t k = 0; k < v.index.size(); ++k) z += v.value[k] * model.weights().at(v.index[k]);
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// Labels at threshold 0.5 (ties go to the toxic class).
inline std::vector<int> baseline_predict(const TfidfModel& model,
                                         std::span<const SparseVector> vectors) {
  std::vector<int> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) out.push_back(baseline_probability(model, v) >= 0.5 ? 1 : 0);
  return out;
}

}  // namespace toxseq
