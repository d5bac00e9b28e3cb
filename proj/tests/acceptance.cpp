// Acceptance gate: one test per criterion, summarized as PASS/FAIL/SKIP
// lines after the run.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "grad_cases.hpp"
#include "metrics_oracle.hpp"
#include "test_support.hpp"
#include "toxseq/toxseq.hpp"

namespace toxseq {
namespace {

namespace fs = std::filesystem;

std::map<std::string, std::string>& details() {
  static std::map<std::string, std::string> d;
  return d;
}

void note(const std::string& detail) {
  details()[::testing::UnitTest::GetInstance()->current_test_info()->name()] = detail;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
  return s;
}

std::vector<DatasetRecord> labeled(const std::vector<std::string>& texts,
                                   const std::vector<int>& labels) {
  std::vector<DatasetRecord> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back({std::to_string(i), texts[i], static_cast<double>(labels[i]), labels[i]});
  }
  return out;
}

std::vector<EncodedExample> encode_all(std::span<const DatasetRecord> records, const Vocab& vocab,
                                       std::size_t max_len) {
  std::vector<EncodedExample> out;
  for (const auto& r : records) out.push_back(encode(r.comment_text, vocab, max_len, r.label));
  return out;
}

double baseline_accuracy(const SplitParts<DatasetRecord>& parts, const BaselineConfig& config) {
  std::vector<std::string> train_texts;
  std::vector<int> train_labels, test_labels;
  for (const auto& r : parts.train) {
    train_texts.push_back(r.comment_text);
    train_labels.push_back(r.label);
  }
  TfidfFit tf = tfidf_fit_transform(train_texts);
  baseline_fit(tf.model, tf.vectors, train_labels, config);
  std::vector<SparseVector> test_vectors;
  for (const auto& r : parts.test) {
    test_vectors.push_back(tf.model.transform(r.comment_text));
    test_labels.push_back(r.label);
  }
  return metrics(confusion(baseline_predict(tf.model, test_vectors), test_labels)).accuracy;
}

const std::vector<std::string> kFiller{"the", "a",  "cat",  "dog",  "sat",  "ran",  "on",  "mat",
                                       "big", "red", "old", "new",  "we",   "they", "saw", "it"};

// --- 1 ---------------------------------------------------------------------

TEST(Acceptance, C1_GradientOracle) {
  const Stopwatch clock;
  double worst = 0.0;
  std::string worst_name;
  std::size_t coordinates = 0;

  for (auto& c : testing::op_grad_cases()) {
    const auto r = grad_check(c.loss, c.params, 1e-5);
    EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " " << r.worst_parameter;
    coordinates += r.coordinates;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = c.name;
    }
  }

  // Full pipeline: embeddings, transformer stack, feature weighting,
  // bidirectional recurrence, pooling, FC + softmax, weighted CE, with
  // dropout active under a re-seeded Rng.
  const Vocab vocab = testing::vocab_of({"you", "are", "kind", "awful", "very"});
  for (CellMode cell : {CellMode::lstm, CellMode::simple_tanh}) {
    ModelConfig cfg = testing::small_model_config(vocab.size(), cell);
    ASSERT_EQ(cfg.encoder.num_layers, 2u);
    ASSERT_EQ(cfg.encoder.num_heads, 2u);
    ASSERT_EQ(cfg.encoder.model_dim, 8u);
    ASSERT_EQ(cfg.head.hidden_dim, 4u);
    ASSERT_EQ(cfg.encoder.max_len, 8u);
    Model model = Model::init(cfg, 12);
    Rng jitter(13);
    for (const auto& p : model.named_parameters()) {
      Tensor t = p.tensor;
      for (auto& v : t.mutable_data()) v += jitter.normal(0.0, 0.2);
    }
    const std::vector<EncodedExample> batch{encode("you are very awful", vocab, 8, 1),
                                            encode("kind", vocab, 8, 0)};
    const ClassWeights weights{0.75, 1.5};
    auto params = model.named_parameters();
    std::erase_if(params, [](const NamedTensor& p) { return p.name.starts_with("encoder.mlm."); });
    const auto r = grad_check(
        [&] {
          Rng dropout_rng(99);
          return batch_loss(model, batch, weights, Mode::train, &dropout_rng);
        },
        params, 1e-5);
    EXPECT_LT(r.max_relative_error, 1e-4) << "pipeline " << r.worst_parameter;
    coordinates += r.coordinates;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_name = "pipeline:" + r.worst_parameter;
    }
  }

  // Masked-token objective through the encoder and its projection.
  {
    EncoderConfig ec = testing::small_model_config(vocab.size()).encoder;
    ec.dropout_rate = 0.0;
    Rng rng(14);
    EncoderParams params = EncoderParams::init(ec, rng);
    const std::vector<MaskedExample> batch{
        {encode("you are awful", vocab, 8), {{2}, {vocab.id("are")}}}};
    const auto r = grad_check([&] { return mlm_loss(batch, params, ec, Mode::eval); },
                              params.named_parameters(), 1e-5);
    EXPECT_LT(r.max_relative_error, 1e-4) << "mlm " << r.worst_parameter;
    coordinates += r.coordinates;
    worst = std::max(worst, r.max_relative_error);
  }

  const double secs = clock.seconds();
  EXPECT_LT(secs, 60.0);
  note("max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " +
       std::to_string(coordinates) + " coordinates, " + fmt("%.1f", secs) + " s");
}

// --- 2 ---------------------------------------------------------------------

TEST(Acceptance, C2_EquationFidelity) {
  Rng rng(21);
  double tanh_err = 0.0, row_err = 0.0;
  bool sum_exact = true;
  HeadConfig hc;
  hc.weight_dim = 5;
  hc.hidden_dim = 3;
  hc.fc_dim = 4;
  hc.cell = CellMode::simple_tanh;
  for (int trial = 0; trial < 50; ++trial) {
    HeadParams p = HeadParams::init(hc, 6, 9, rng);
    const Tensor a = testing::random_tensor({9, 5}, rng, 1.0, false);
    std::vector<int> mask(9, 0);
    std::fill_n(mask.begin(), 1 + rng.uniform_int(9), 1);
    const BiStates s = bilstm(a, mask, p, hc);

    // h_t = tanh(W a_t + U h_{t-1} + b), evaluated with plain loops.
    for (int dir = 0; dir < 2; ++dir) {
      const auto& d = p.directions[dir];
      std::vector<double> h(3, 0.0);
      for (std::size_t step = 0; step < 9; ++step) {
        const std::size_t i = dir == 0 ? step : 8 - step;
        if (!mask[i]) continue;
        std::vector<double> next(3);
        for (std::size_t r = 0; r < 3; ++r) {
          double z = d.bias.data()[r];
          for (std::size_t k = 0; k < 5; ++k) z += d.input_weight.at(r, k) * a.at(i, k);
          for (std::size_t k = 0; k < 3; ++k) z += d.recurrent_weight.at(r, k) * h[k];
          next[r] = std::tanh(z);
        }
        h = next;
        const Tensor& got = dir == 0 ? s.forward : s.backward;
        for (std::size_t r = 0; r < 3; ++r) tanh_err = std::max(tanh_err, std::abs(got.at(i, r) - h[r]));
      }
    }
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t r = 0; r < 3; ++r) {
        sum_exact = sum_exact && s.merged.at(i, r) == s.forward.at(i, r) + s.backward.at(i, r);
      }

    const Tensor logits = testing::random_tensor({7, 11}, rng, 30.0, false);
    const Tensor sm = softmax(logits, 1);
    for (std::size_t i = 0; i < 7; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 11; ++j) total += sm.at(i, j);
      row_err = std::max(row_err, std::abs(total - 1.0));
    }
  }

  EncoderConfig ec = testing::small_model_config(10).encoder;
  EncoderParams ep = EncoderParams::init(ec, rng);
  for (const auto& p : ep.named_parameters()) {
    Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v = rng.normal(0.0, 0.8);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = testing::random_tensor({8, 8}, rng, 2.0, false);
    std::vector<int> mask(8, 0);
    std::fill_n(mask.begin(), 1 + rng.uniform_int(8), 1);
    std::vector<Tensor> probs;
    multi_head_attention(x, ep.layers[0], mask, ec.num_heads, &probs);
    for (const auto& pr : probs)
      for (std::size_t i = 0; i < 8; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 8; ++j) total += pr.at(i, j);
        row_err = std::max(row_err, std::abs(total - 1.0));
      }
  }

  EXPECT_LT(tanh_err, 1e-12);
  EXPECT_TRUE(sum_exact);
  EXPECT_LT(row_err, 1e-9);
  note("tanh cell err " + fmt("%.1e", tanh_err) + ", merge sum " + (sum_exact ? "exact" : "INEXACT") +
       ", row sum err " + fmt("%.1e", row_err));
}

// --- 3 ---------------------------------------------------------------------

// Pairs of sentences with the same words where only the relative order of
// "alpha" and "beta" differs; label 1 iff alpha comes first.
std::vector<DatasetRecord> word_order_corpus(std::size_t pairs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t n = 4 + rng.uniform_int(5);
    std::vector<std::string> w;
    for (std::size_t i = 0; i < n; ++i) w.push_back(kFiller[rng.uniform_int(kFiller.size())]);
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(rng.uniform_int(n + 1)), "alpha");
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(rng.uniform_int(n + 2)), "beta");
    const int alpha_first =
        std::find(w.begin(), w.end(), "alpha") < std::find(w.begin(), w.end(), "beta");
    std::vector<std::string> swapped = w;
    for (auto& t : swapped) t = t == "alpha" ? "beta" : t == "beta" ? "alpha" : t;
    texts.push_back(join_words(w));
    labels.push_back(alpha_first);
    texts.push_back(join_words(swapped));
    labels.push_back(1 - alpha_first);
  }
  return labeled(texts, labels);
}

TEST(Acceptance, C3_WordOrderDiscrimination) {
  const Stopwatch clock;
  const auto records = word_order_corpus(1000, 31);
  ASSERT_EQ(records.size(), 2000u);
  const auto parts = split(records, SplitRatios{}, 32);
  std::vector<std::string> texts;
  for (const auto& r : parts.train) texts.push_back(r.comment_text);
  const Vocab vocab = Vocab::build(texts, 1000, 1);

  ModelConfig cfg;
  cfg.bypass_encoder = true;
  cfg.encoder.vocab_size = vocab.size();
  cfg.encoder.num_layers = 1;
  cfg.encoder.num_heads = 1;
  cfg.encoder.model_dim = 16;
  cfg.encoder.ff_dim = 16;
  cfg.encoder.max_len = 12;
  cfg.head.weight_dim = cfg.head.hidden_dim = cfg.head.fc_dim = 16;
  cfg.head.cell = CellMode::lstm;
  cfg.head.pooling = PoolingMode::final_states;
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.encoder_learning_rate = 1e-2;
  tc.max_epochs = 30;
  tc.seed = 33;

  const auto fitted = fit(encode_all(parts.train, vocab, 12), encode_all(parts.val, vocab, 12),
                          Model::init(cfg, 34), tc);
  const double seq_acc = evaluate(fitted.model, encode_all(parts.test, vocab, 12)).metrics.accuracy;
  BaselineConfig bc;
  bc.seed = 35;
  const double bow_acc = baseline_accuracy(parts, bc);
  const double secs = clock.seconds();

  EXPECT_LE(fitted.report.epochs.size(), 30u);
  EXPECT_GE(seq_acc, 0.90);
  EXPECT_LE(bow_acc, 0.60);
  EXPECT_LT(secs, 300.0);
  note("bilstm test acc " + fmt("%.4f", seq_acc) + ", tfidf+logistic " + fmt("%.4f", bow_acc) + ", " +
       std::to_string(fitted.report.epochs.size()) + " epochs, " + fmt("%.1f", secs) + " s");
}

// --- 4 ---------------------------------------------------------------------

std::vector<DatasetRecord> keyword_corpus(std::size_t n, std::uint64_t seed) {
  const std::vector<std::string> keywords{"idiot", "moron", "stupid", "loser", "trash"};
  std::vector<std::string> filler = kFiller;
  filler.insert(filler.end(), {"you", "are", "is", "this", "post", "comment", "really", "very"});
  Rng rng(seed);
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const std::size_t len = 3 + rng.uniform_int(8);
    std::vector<std::string> w;
    for (std::size_t k = 0; k < len; ++k) w.push_back(filler[rng.uniform_int(filler.size())]);
    if (y == 1) {
      w.insert(w.begin() + static_cast<std::ptrdiff_t>(rng.uniform_int(len + 1)),
               keywords[rng.uniform_int(keywords.size())]);
    }
    texts.push_back(join_words(w));
    labels.push_back(y);
  }
  return labeled(texts, labels);
}

TEST(Acceptance, C4_SeparableKeywordTask) {
  const Stopwatch clock;
  const auto parts = split(keyword_corpus(1000, 41), SplitRatios{}, 42);
  std::vector<std::string> texts;
  for (const auto& r : parts.train) texts.push_back(r.comment_text);
  const Vocab vocab = Vocab::build(texts, 1000, 1);

  ModelConfig cfg;
  cfg.encoder.vocab_size = vocab.size();
  cfg.encoder.num_layers = 2;
  cfg.encoder.num_heads = 2;
  cfg.encoder.model_dim = 32;
  cfg.encoder.ff_dim = 64;
  cfg.encoder.max_len = 16;
  cfg.head.weight_dim = cfg.head.hidden_dim = cfg.head.fc_dim = 32;
  TrainConfig tc;
  tc.max_epochs = 20;
  tc.seed = 43;

  const auto fitted = fit(encode_all(parts.train, vocab, 16), encode_all(parts.val, vocab, 16),
                          Model::init(cfg, 44), tc);
  const auto m = evaluate(fitted.model, encode_all(parts.test, vocab, 16)).metrics;
  const double secs = clock.seconds();

  EXPECT_GE(m.accuracy, 0.95);
  EXPECT_LT(secs, 300.0);
  note("bert+bilstm test acc " + fmt("%.4f", m.accuracy) + " on " + std::to_string(parts.test.size()) +
       " held-out rows, " + std::to_string(fitted.report.epochs.size()) + " epochs, " +
       fmt("%.1f", secs) + " s");
}

// --- 5 ---------------------------------------------------------------------

TEST(Acceptance, C5_MlmPretrainingSanity) {
  const std::vector<std::string> subject{"the cat", "the dog", "a bird", "my friend", "the teacher"};
  const std::vector<std::string> verb{"eats", "sees", "likes", "finds", "wants"};
  const std::vector<std::string> object{"fresh fish", "green apples", "old books", "warm bread",
                                        "red flowers", "cold water", "sweet cake", "small stones",
                                        "bright stars", "blue paint"};
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < 50; ++i) {
    texts.push_back(subject[i % 5] + " " + verb[(i / 5) % 5] + " " + object[i % 10] + " every day");
  }
  const Vocab vocab = Vocab::build(texts, 1000, 1);
  EncoderConfig ec;
  ec.vocab_size = vocab.size();
  ec.num_layers = 2;
  ec.num_heads = 2;
  ec.model_dim = 32;
  ec.ff_dim = 64;
  ec.max_len = 12;
  std::vector<EncodedExample> corpus;
  for (const auto& t : texts) corpus.push_back(encode(t, vocab, ec.max_len));
  Rng rng(51);
  EncoderParams params = EncoderParams::init(ec, rng);
  PretrainConfig pc;
  pc.seed = 52;
  ASSERT_EQ(pc.steps, 200u);

  const auto report = pretrain_mlm(params, ec, corpus, pc);
  const double ln_v = std::log(static_cast<double>(vocab.size()));
  const double first = report.step_losses.front();
  double tail = 0.0;
  for (std::size_t i = report.step_losses.size() - 20; i < report.step_losses.size(); ++i) {
    tail += report.step_losses[i] / 20.0;
  }
  const double recovery = masked_recovery_rate(params, ec, corpus);

  EXPECT_EQ(report.step_losses.size(), 200u);
  EXPECT_NEAR(first, ln_v, 0.05 * ln_v);
  EXPECT_LT(tail, 0.8 * ln_v);
  EXPECT_GE(recovery, 0.5);
  note("ln V " + fmt("%.3f", ln_v) + ", first-step loss " + fmt("%.3f", first) +
       ", last-20-step mean " + fmt("%.3f", tail) + " (" + fmt("%.2f", tail / ln_v) +
       " ln V), top-1 recovery " + fmt("%.3f", recovery));
}

// --- 6 ---------------------------------------------------------------------

std::string csv_escape(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> csv_accuracy(const std::string& csv, const std::string& model) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.starts_with(model + ",")) continue;
    const auto last = line.rfind(',');
    return std::stod(line.substr(last + 1));
  }
  return std::nullopt;
}

TEST(Acceptance, C6_JigsawSubsample) {
  const char* path = std::getenv("TOXSEQ_JIGSAW_CSV");
  if (path == nullptr || *path == '\0') {
    note("TOXSEQ_JIGSAW_CSV not set");
    GTEST_SKIP() << "set TOXSEQ_JIGSAW_CSV to the Jigsaw train.csv to run this criterion";
  }
  const Stopwatch clock;
  const auto records = load_jigsaw_csv(path);
  ASSERT_GE(records.size(), 25000u);

  // Stratified 20k / 5k draw; the remainder (the middle part) is unused.
  const double n = static_cast<double>(records.size());
  const double rest = 1.0 - 25000.0 / n;
  std::vector<DatasetRecord> sample;
  if (rest > 0.0) {
    const auto draw = split(records, {20000.0 / n, rest, 5000.0 / n}, 61);
    sample = draw.train;
    sample.insert(sample.end(), draw.test.begin(), draw.test.end());
  } else {
    sample = records;
  }

  const fs::path dir = fs::temp_directory_path() / "toxseq_acceptance_jigsaw";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "sample.csv", std::ios::binary);
    out << "id,comment_text,target\n";
    for (const auto& r : sample) out << csv_escape(r.id) << "," << csv_escape(r.comment_text) << "," << fmt("%.17g", r.target) << "\n";
  }
  {
    // 18k train / 2k val carved from the 20k, 5k test.
    std::ofstream cfg(dir / "jigsaw.cfg");
    cfg << "split.train=0.72\nsplit.val=0.08\nsplit.test=0.2\n"
        << "encoder.num_layers=2\nencoder.num_heads=2\nencoder.model_dim=32\nencoder.ff_dim=64\n"
        << "encoder.max_len=64\nhead.weight_dim=32\nhead.hidden_dim=32\nhead.fc_dim=32\n"
        << "head.pooling_mode=mean\ntrain.max_epochs=4\ntrain.batch_size=32\n"
        << "train.learning_rate=0.001\ntrain.encoder_learning_rate=0.001\n";
  }
  std::ostringstream out, err;
  const int code = run_cli({"compare", "--data", (dir / "sample.csv").string(), "--config",
                            (dir / "jigsaw.cfg").string(), "--models", "tfidf+logistic,bert+bilstm",
                            "--csv", (dir / "report.csv").string(), "--seed", "62"},
                           out, err);
  ASSERT_EQ(code, 0) << err.str();
  std::ifstream csv_in(dir / "report.csv");
  const std::string csv((std::istreambuf_iterator<char>(csv_in)), std::istreambuf_iterator<char>());
  const auto model_acc = csv_accuracy(csv, "bert+bilstm");
  const auto base_acc = csv_accuracy(csv, "tfidf+logistic");
  ASSERT_TRUE(model_acc && base_acc) << csv;
  EXPECT_TRUE(out.str().starts_with("Method")) << out.str();
  EXPECT_NE(out.str().find("Precision"), std::string::npos);
  EXPECT_GE(*model_acc, *base_acc);
  std::cout << out.str();
  note("bert+bilstm acc " + fmt("%.4f", *model_acc) + " vs tfidf+logistic " + fmt("%.4f", *base_acc) +
       ", " + fmt("%.0f", clock.seconds()) + " s");
}

// --- 7 ---------------------------------------------------------------------

TEST(Acceptance, C7_MetricsOracle) {
  Rng rng(71);
  std::size_t agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t limit = trial % 4 == 0 ? 4 : 100000;
    Confusion c{rng.uniform_int(limit), rng.uniform_int(limit), rng.uniform_int(limit),
                rng.uniform_int(limit)};
    if (c.n() == 0) c.fn = 1;
    const auto m = metrics(c);
    const bool ok = testing::optional_matches(m.precision, c.tp, c.tp + c.fp) &&
                    testing::optional_matches(m.recall, c.tp, c.tp + c.fn) &&
                    testing::is_rounded_quotient(m.accuracy, c.tp + c.tn, c.n());
    agree += ok;
  }
  const std::string row = format_metric_values({"Bert+Bilstm", 0.94, 0.93, 0.94});
  EXPECT_EQ(agree, 1000u);
  EXPECT_EQ(row, "0.94 0.93 0.94");
  note(std::to_string(agree) + "/1000 exact, reference row \"" + row + "\"");
}

// --- 8 ---------------------------------------------------------------------

TEST(Acceptance, C8_DeterminismAndPersistence) {
  const auto parts = split(keyword_corpus(80, 81), SplitRatios{}, 82);
  std::vector<std::string> texts;
  for (const auto& r : parts.train) texts.push_back(r.comment_text);
  const Vocab vocab = Vocab::build(texts, 1000, 1);
  const ModelConfig cfg = testing::small_model_config(vocab.size());
  const auto train = encode_all(parts.train, vocab, 8), val = encode_all(parts.val, vocab, 8);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.seed = 83;
  auto run = [&](std::uint64_t seed) {
    return encode_checkpoint(fit(train, val, Model::init(cfg, seed), tc).model, seed);
  };
  const std::string a = run(7), b = run(7), c = run(8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);

  const fs::path file = fs::temp_directory_path() / "toxseq_acceptance_roundtrip.ckpt";
  const Model original = model_from_checkpoint(decode_checkpoint(a));
  save_checkpoint(original, 7, file);
  const Model reloaded = load_checkpoint(file, vocab.size()).model;
  fs::remove(file);
  std::size_t identical = 0;
  const auto test = encode_all(parts.test, vocab, 8);
  for (const auto& ex : test) {
    identical += std::bit_cast<std::uint64_t>(predict(original, ex).p_toxic) ==
                 std::bit_cast<std::uint64_t>(predict(reloaded, ex).p_toxic);
  }
  EXPECT_EQ(identical, test.size());

  Rng rng(84);
  std::size_t equal_mass = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n0 = 1 + rng.uniform_int(100000), n1 = 1 + rng.uniform_int(100000);
    std::vector<int> labels(n0, 0);
    labels.insert(labels.end(), n1, 1);
    const auto w = class_weights(labels);
    equal_mass += w[0] * static_cast<double>(n0) == w[1] * static_cast<double>(n1);
  }
  EXPECT_EQ(equal_mass, 1000u);
  note(std::string("same-seed checkpoints ") + (a == b ? "identical" : "DIFFER") + ", " +
       std::to_string(identical) + "/" + std::to_string(test.size()) +
       " predictions bit-exact after reload, " + std::to_string(equal_mass) +
       "/1000 class-mass pairs equal");
}

class CriterionSummary : public ::testing::EmptyTestEventListener {
 public:
  void OnTestProgramEnd(const ::testing::UnitTest& unit) override {
    std::printf("\n==== acceptance summary ====\n");
    for (int s = 0; s < unit.total_test_suite_count(); ++s) {
      const auto* suite = unit.GetTestSuite(s);
      for (int t = 0; t < suite->total_test_count(); ++t) {
        const auto* info = suite->GetTestInfo(t);
        if (!info->should_run()) continue;
        const auto* result = info->result();
        const char* status = result->Skipped() ? "SKIP" : result->Passed() ? "PASS" : "FAIL";
        const std::string name = info->name();
        const auto it = details().find(name);
        std::printf("%s  criterion %s: %s\n", status, name.substr(1, 1).c_str(),
                    it == details().end() ? name.c_str() : (name.substr(3) + " | " + it->second).c_str());
      }
    }
    std::fflush(stdout);
  }
};

}  // namespace
}  // namespace toxseq

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new toxseq::CriterionSummary);
  return RUN_ALL_TESTS();
}
