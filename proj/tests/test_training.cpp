#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "test_support.hpp"
#include "toxseq/training.hpp"

namespace toxseq {
namespace {

using testing::values;

// "bad" marks the toxic class; the other words are shared filler.
std::vector<EncodedExample> keyword_set(const Vocab& vocab, std::size_t n, std::uint64_t seed) {
  const std::vector<std::string> filler{"the", "a", "cat", "dog", "sat", "ran"};
  Rng rng(seed);
  std::vector<EncodedExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::string text;
    const std::size_t len = 3 + rng.uniform_int(3);
    const std::size_t slot = rng.uniform_int(len);
    for (std::size_t k = 0; k < len; ++k) {
      if (!text.empty()) text += ' ';
      text += (label == 1 && k == slot) ? "bad" : filler[rng.uniform_int(filler.size())];
    }
    out.push_back(encode(text, vocab, 8, label));
  }
  return out;
}

Vocab keyword_vocab() { return testing::vocab_of({"the", "a", "cat", "dog", "sat", "ran", "bad"}); }

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.encoder_learning_rate = 1e-2;
  c.batch_size = 8;
  c.max_epochs = epochs;
  c.early_stop_patience = epochs;
  c.seed = 11;
  return c;
}

TEST(ClassWeights, WorkedExamples) {
  std::vector<int> labels(100, 0);
  std::fill_n(labels.begin(), 10, 1);
  const auto w = class_weights(labels);
  EXPECT_NEAR(w[0], 100.0 / 180.0, 1e-15);
  EXPECT_NEAR(w[1], 5.0, 1e-15);
  const std::vector<int> even{0, 1, 1, 0};
  EXPECT_EQ(class_weights(even), (ClassWeights{1.0, 1.0}));
  EXPECT_EQ(class_weights(labels, ClassWeighting::none), (ClassWeights{1.0, 1.0}));
}

TEST(ClassWeights, MassesAreExactlyEqual) {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n1 = 1 + rng.uniform_int(5000), n0 = 1 + rng.uniform_int(5000);
    std::vector<int> labels(n0, 0);
    labels.insert(labels.end(), n1, 1);
    const auto w = class_weights(labels);
    ASSERT_EQ(w[0] * static_cast<double>(n0), w[1] * static_cast<double>(n1))
        << "n0=" << n0 << " n1=" << n1;
    const double nominal = static_cast<double>(n0 + n1) / (2.0 * static_cast<double>(n1));
    EXPECT_NEAR(w[1], nominal, 1e-13 * nominal);
  }
}

TEST(ClassWeights, Preconditions) {
  const std::vector<int> single{1, 1, 1};
  EXPECT_THROW(class_weights(single), PreconditionError);
  const std::vector<int> bad{0, 2};
  EXPECT_THROW(class_weights(bad), PreconditionError);
}

NamedTensor param_with_grad(std::vector<double> value, std::vector<double> grad) {
  const std::size_t n = value.size();
  Tensor t({n}, std::move(value), true);
  sum(mul(t, Tensor({n}, std::move(grad)))).backward();
  return {"p", t};
}

TEST(Optimizers, SgdExample) {
  auto p = param_with_grad({1.0}, {2.0});
  sgd_step(p, 0.1);
  EXPECT_NEAR(p.tensor.data()[0], 0.8, 1e-15);
}

TEST(Optimizers, AdamFirstStepMovesByLearningRate) {
  auto p = param_with_grad({1.0, -1.0}, {3.0, -0.02});
  AdamState s;
  adam_step(p, s, 0.01, {});
  EXPECT_NEAR(p.tensor.data()[0], 0.99, 1e-9);
  EXPECT_NEAR(p.tensor.data()[1], -0.99, 1e-6);
  EXPECT_EQ(s.steps, 1u);
}

TEST(Optimizers, ZeroLearningRateLeavesParametersBitIdentical) {
  auto p = param_with_grad({0.1, 0.2, 0.3}, {5, -5, 1});
  const auto before = values(p.tensor);
  sgd_step(p, 0.0);
  AdamState s;
  adam_step(p, s, 0.0, {});
  EXPECT_TRUE(testing::bit_equal(p.tensor, Tensor({3}, before)));
}

TEST(Optimizers, ClipScalesGlobalNorm) {
  std::vector<NamedTensor> ps{param_with_grad({0, 0}, {6, 0}), param_with_grad({0}, {8})};
  EXPECT_NEAR(clip_grad_norm(ps, 1.0), 10.0, 1e-15);
  EXPECT_NEAR(ps[0].tensor.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(ps[1].tensor.grad()[0], 0.8, 1e-15);
  clip_grad_norm(ps, 5.0);
  EXPECT_NEAR(ps[1].tensor.grad()[0], 0.8, 1e-15);
}

TEST(Optimizers, MissingGradientIsAnError) {
  NamedTensor p{"lonely", Tensor({2}, {1, 2}, true)};
  try {
    sgd_step(p, 0.1);
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(Optimizers, SmallStepDecreasesLoss) {
  Rng rng(2);
  Tensor x = testing::random_tensor({4, 3}, rng);
  const Tensor target = testing::random_tensor({4, 3}, rng, 1.0, false);
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    Optimizer opt(kind, {}, 10.0);
    opt.add_group({{"x", x}}, 1e-3);
    auto loss = [&] {
      const Tensor d = sub(x, target);
      return sum(mul(d, d));
    };
    const double before = loss().item();
    opt.zero_grad();
    loss().backward();
    opt.step();
    EXPECT_LT(loss().item(), before);
  }
}

TEST(Fit, ZeroEpochsReturnsInitialParameters) {
  const auto vocab = keyword_vocab();
  const auto data = keyword_set(vocab, 10, 3);
  const Model init = Model::init(testing::small_model_config(vocab.size()), 1);
  const auto result = fit(data, data, init, quick_config(0));
  EXPECT_TRUE(result.report.epochs.empty());
  EXPECT_FALSE(result.report.best_epoch);
  const auto a = init.named_parameters(), b = result.model.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(testing::bit_equal(a[i].tensor, b[i].tensor));
}

TEST(Fit, LearnsSeparableKeywordTask) {
  const auto vocab = keyword_vocab();
  const auto train = keyword_set(vocab, 48, 4);
  const auto val = keyword_set(vocab, 16, 5);
  // Mean pooling is position-agnostic, so the keyword's slot need not recur.
  const Model init = Model::init(
      testing::small_model_config(vocab.size(), CellMode::lstm, PoolingMode::mean), 2);
  const auto result = fit(train, val, init, quick_config(30));
  const auto ev = evaluate(result.model, val);
  EXPECT_EQ(ev.metrics.accuracy, 1.0);
  ASSERT_TRUE(result.report.best_epoch);
  EXPECT_LE(*result.report.best_epoch, result.report.epochs.size());
  EXPECT_LT(result.report.epochs.back().train_loss, result.report.epochs.front().train_loss);
}

TEST(Fit, DeterministicForFixedSeed) {
  const auto vocab = keyword_vocab();
  const auto train = keyword_set(vocab, 16, 6);
  const Model init = Model::init(testing::small_model_config(vocab.size()), 3);
  const auto a = fit(train, train, init, quick_config(2));
  const auto b = fit(train, train, init, quick_config(2));
  const auto pa = a.model.named_parameters(), pb = b.model.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(testing::bit_equal(pa[i].tensor, pb[i].tensor));
  EXPECT_EQ(a.report.epochs.back().val_loss, b.report.epochs.back().val_loss);
  // The initial model is left untouched.
  const auto p0 = init.named_parameters();
  EXPECT_FALSE(testing::bit_equal(p0.back().tensor, pa.back().tensor));
}

TEST(Fit, FrozenEncoderStaysBitIdentical) {
  const auto vocab = keyword_vocab();
  const auto train = keyword_set(vocab, 16, 7);
  const Model init = Model::init(testing::small_model_config(vocab.size()), 4);
  auto cfg = quick_config(2);
  cfg.encoder_frozen = true;
  const auto result = fit(train, train, init, cfg);
  const auto a = init.encoder.named_parameters(), b = result.model.encoder.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(testing::bit_equal(a[i].tensor, b[i].tensor)) << a[i].name;
    EXPECT_TRUE(b[i].tensor.requires_grad());
  }
  EXPECT_FALSE(testing::bit_equal(init.head.fc_weight, result.model.head.fc_weight));
}

TEST(Fit, UnfrozenEncoderMovesButMlmHeadDoesNot) {
  const auto vocab = keyword_vocab();
  const auto train = keyword_set(vocab, 16, 8);
  const Model init = Model::init(testing::small_model_config(vocab.size()), 5);
  const auto result = fit(train, train, init, quick_config(1));
  EXPECT_FALSE(testing::bit_equal(init.encoder.token_embedding, result.model.encoder.token_embedding));
  EXPECT_TRUE(testing::bit_equal(init.encoder.mlm_weight, result.model.encoder.mlm_weight));
}

TEST(Fit, EarlyStoppingRestoresBestEpoch) {
  const auto vocab = keyword_vocab();
  const auto train = keyword_set(vocab, 16, 9);
  // Validation labels are flipped, so val loss rises once training fits.
  auto val = train;
  for (auto& ex : val) ex.label = 1 - *ex.label;
  const Model init = Model::init(testing::small_model_config(vocab.size()), 6);
  auto cfg = quick_config(40);
  cfg.early_stop_patience = 2;
  const auto result = fit(train, val, init, cfg);
  ASSERT_TRUE(result.report.best_epoch);
  const std::size_t best = *result.report.best_epoch;
  EXPECT_LT(result.report.epochs.size(), 40u);
  EXPECT_EQ(result.report.epochs.size(), best + 2);
  const ClassWeights w = class_weights(labels_of(train));
  EXPECT_NEAR(evaluate(result.model, val, w).loss, result.report.epochs[best - 1].val_loss, 1e-12);
}

TEST(Fit, LogHasOneJsonObjectPerEpoch) {
  const auto vocab = keyword_vocab();
  const auto train = keyword_set(vocab, 12, 10);
  const Model init = Model::init(testing::small_model_config(vocab.size()), 7);
  const auto result = fit(train, train, init, quick_config(3));
  std::ostringstream log;
  write_train_log(result.report, log);
  std::istringstream in(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<std::size_t>(), ++n);
    for (const char* k : {"train_loss", "val_loss", "val_precision", "val_recall", "val_accuracy"}) {
      EXPECT_TRUE(j.contains(k)) << k;
    }
  }
  EXPECT_EQ(n, result.report.epochs.size());
}

TEST(Fit, Preconditions) {
  const auto vocab = keyword_vocab();
  auto train = keyword_set(vocab, 4, 11);
  const Model init = Model::init(testing::small_model_config(vocab.size()), 8);
  auto cfg = quick_config(1);
  cfg.batch_size = 0;
  EXPECT_THROW(fit(train, train, init, cfg), PreconditionError);
  train[0].label.reset();
  EXPECT_THROW(fit(train, train, init, quick_config(1)), PreconditionError);
  EXPECT_THROW(fit({}, train, init, quick_config(1)), PreconditionError);
}

TEST(Evaluate, WeightedLossMatchesHandSum) {
  const auto vocab = keyword_vocab();
  const auto data = keyword_set(vocab, 6, 12);
  const Model m = Model::init(testing::small_model_config(vocab.size()), 9);
  const ClassWeights w{0.75, 1.5};
  const auto ev = evaluate(m, data, w);
  double total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = *data[i].label;
    const double p = y == 1 ? ev.p_toxic[i] : 1.0 - ev.p_toxic[i];
    total += -w[y] * std::log(p);
  }
  EXPECT_NEAR(ev.loss, total / 6.0, 1e-12);
}

}  // namespace
}  // namespace toxseq
