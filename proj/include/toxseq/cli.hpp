#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toxseq/checkpoint.hpp"
#include "toxseq/config.hpp"
#include "toxseq/dataset.hpp"
#include "toxseq/error.hpp"
#include "toxseq/metrics.hpp"
#include "toxseq/model.hpp"
#include "toxseq/pretrain.hpp"
#include "toxseq/report.hpp"
#include "toxseq/text.hpp"
#include "toxseq/tfidf.hpp"
#include "toxseq/training.hpp"

namespace toxseq {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
};

namespace cli {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

// Precedence: defaults < --config file < --set < --seed.
inline RunConfig resolve(const CommonOptions& opts) {
  RunConfig run;
  if (!opts.config_path.empty()) load_config_file(run, opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    set_config_value(run, detail::trim(std::string_view(kv).substr(0, eq)),
                     std::string_view(kv).substr(eq + 1));
  }
  if (opts.seed) run.seed = *opts.seed;
  run.apply_seed();
  return run;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << content;
    if (!out) throw DataError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

// "lines": one comment per line, "\n" and "\\" escapes decoded.
inline std::string unescape_line(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size() && (line[i + 1] == 'n' || line[i + 1] == '\\')) {
      out += line[i + 1] == 'n' ? '\n' : '\\';
      ++i;
    } else {
      out += line[i];
    }
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(unescape_line(line));
  }
  return out;
}

inline std::vector<std::string> read_texts(const std::filesystem::path& path, const std::string& format) {
  if (format == "lines") return read_lines(path);
  std::vector<std::string> out;
  for (auto& r : load_jigsaw_csv(path)) out.push_back(std::move(r.comment_text));
  return out;
}

inline std::vector<EncodedExample> encode_records(std::span<const DatasetRecord> records,
                                                  const Vocab& vocab, std::size_t max_len) {
  std::vector<EncodedExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode(r.comment_text, vocab, max_len, r.label));
  return out;
}

inline std::vector<std::string> texts_of(std::span<const DatasetRecord> records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.comment_text);
  return out;
}

inline std::vector<int> record_labels(std::span<const DatasetRecord> records) {
  std::vector<int> out;
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

// Fresh model for `run`; with an init checkpoint, the encoder (weights and
// architecture) comes from the checkpoint and the head is newly initialized.
inline Model initial_model(const RunConfig& run, std::size_t vocab_size,
                           const std::string& init_path) {
  ModelConfig config = run.model;
  config.encoder.vocab_size = vocab_size;
  if (init_path.empty()) return Model::init(config, run.seed);
  LoadedCheckpoint loaded = load_checkpoint(init_path, vocab_size);
  config.encoder = loaded.model.config.encoder;
  Model model = Model::init(config, run.seed);
  model.encoder = loaded.model.encoder;
  return model;
}

inline std::string format_report(const MetricsReport& m) {
  auto ratio = [](const std::optional<double>& v) {
    if (!v) return std::string(kAbsentMetric);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  std::ostringstream s;
  s << "n " << m.counts.n() << "\n"
    << "tp " << m.counts.tp << "\n"
    << "fp " << m.counts.fp << "\n"
    << "fn " << m.counts.fn << "\n"
    << "tn " << m.counts.tn << "\n"
    << "precision " << ratio(m.precision) << "\n"
    << "recall " << ratio(m.recall) << "\n"
    << "accuracy " << ratio(m.accuracy) << "\n";
  return s.str();
}

inline std::vector<DatasetRecord> select_split(std::vector<DatasetRecord> records,
                                               const std::string& which, const RunConfig& run) {
  if (which == "all") return records;
  auto parts = split(records, run.split, run.seed);
  if (which == "train") return std::move(parts.train);
  if (which == "val") return std::move(parts.val);
  return std::move(parts.test);
}

inline const std::vector<std::string> kCompareModels{"tfidf+logistic", "bilstm", "bert+bilstm"};

}  // namespace cli

/// Entry point behind the `toxseq` binary; `args` excludes the program name.
/// Results go to `out`, diagnostics to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"toxseq: toxic comment classification with a transformer encoder and BiLSTM head"};
  app.require_subcommand(1);
  cli::CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "override one config key (key=value)")
        ->allow_extra_args(false);
    sub->add_option("--seed", common.seed, "seed for every stochastic step");
  };

  std::string data, vocab_path, output, init, checkpoint, log_path, csv_path;
  std::string format = "csv", which = "all", input;
  std::vector<std::string> texts, models = cli::kCompareModels;

  auto* build_vocab = app.add_subcommand("build-vocab", "build a vocabulary file from a corpus");
  add_common(build_vocab);
  build_vocab->add_option("--data", data, "corpus file")->required();
  build_vocab->add_option("--format", format, "corpus format")->check(CLI::IsMember({"csv", "lines"}));
  build_vocab->add_option("--output", output, "vocab file to write")->required();

  auto* pretrain = app.add_subcommand("pretrain-mlm", "masked-token pretraining of the encoder");
  add_common(pretrain);
  pretrain->add_option("--data", data, "corpus file")->required();
  pretrain->add_option("--format", format, "corpus format")->check(CLI::IsMember({"csv", "lines"}));
  pretrain->add_option("--vocab", vocab_path, "vocab file")->required();
  pretrain->add_option("--init", init, "checkpoint to continue from");
  pretrain->add_option("--output", output, "checkpoint to write")->required();

  auto* train = app.add_subcommand("train", "train the classifier on the train split");
  add_common(train);
  train->add_option("--data", data, "labeled CSV")->required();
  train->add_option("--vocab", vocab_path, "vocab file")->required();
  train->add_option("--init", init, "checkpoint whose encoder initializes the model");
  train->add_option("--output", output, "checkpoint to write")->required();
  train->add_option("--log", log_path, "JSON-lines training log (default: stdout)");

  auto* eval = app.add_subcommand("eval", "metrics of a checkpoint on labeled data");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--vocab", vocab_path, "vocab file")->required();
  eval->add_option("--data", data, "labeled CSV")->required();
  eval->add_option("--split", which, "evaluate all rows or one seeded split part")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));

  auto* predict_cmd = app.add_subcommand("predict", "label and toxic probability per comment");
  add_common(predict_cmd);
  predict_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--vocab", vocab_path, "vocab file")->required();
  auto* text_opt = predict_cmd->add_option("--text", texts, "comment text (repeatable)");
  predict_cmd->add_option("--input", input, "file with one escaped comment per line")
      ->excludes(text_opt);

  auto* compare = app.add_subcommand("compare", "train and test the model set on one split");
  add_common(compare);
  compare->add_option("--data", data, "labeled CSV")->required();
  compare->add_option("--vocab", vocab_path, "vocab file (default: built from the train split)");
  compare->add_option("--init", init, "pretrained checkpoint for the bert+bilstm encoder");
  compare->add_option("--models", models, "comma-separated subset of tfidf+logistic,bilstm,bert+bilstm")
      ->delimiter(',')
      ->check(CLI::IsMember(cli::kCompareModels));
  compare->add_option("--csv", csv_path, "also write the CSV companion here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig run = cli::resolve(common);

    if (build_vocab->parsed()) {
      const auto corpus = cli::read_texts(data, format);
      const Vocab vocab = Vocab::build(corpus, run.vocab.max_size, run.vocab.min_freq);
      vocab.save(output);
      out << "vocab_size " << vocab.size() << "\n";
      return kExitOk;
    }

    if (pretrain->parsed()) {
      const Vocab vocab = Vocab::load(vocab_path);
      Model model = cli::initial_model(run, vocab.size(), init);
      std::vector<EncodedExample> corpus;
      for (const auto& text : cli::read_texts(data, format)) {
        corpus.push_back(encode(text, vocab, model.config.encoder.max_len));
      }
      const PretrainReport report = pretrain_mlm(model.encoder, model.config.encoder, corpus, run.pretrain);
      for (std::size_t i = 0; i < report.step_losses.size(); ++i) {
        out << nlohmann::ordered_json{{"step", i + 1}, {"mlm_loss", report.step_losses[i]}}.dump() << "\n";
      }
      save_checkpoint(model, run.seed, output);
      return kExitOk;
    }

    if (train->parsed()) {
      const Vocab vocab = Vocab::load(vocab_path);
      const Model initial = cli::initial_model(run, vocab.size(), init);
      const auto parts = split(load_jigsaw_csv(data), run.split, run.seed);
      const std::size_t max_len = initial.config.encoder.max_len;
      const auto train_ex = cli::encode_records(parts.train, vocab, max_len);
      const auto val_ex = cli::encode_records(parts.val, vocab, max_len);
      const FitResult fitted = fit(train_ex, val_ex, initial, run.train);
      save_checkpoint(fitted.model, run.seed, output);
      err << "train: " << fitted.report.epochs.size() << " epochs, best epoch "
          << (fitted.report.best_epoch ? std::to_string(*fitted.report.best_epoch) : "none") << ", "
          << fitted.report.wall_seconds << " s\n";
      std::ostringstream log;
      write_train_log(fitted.report, log);
      if (log_path.empty()) {
        out << log.str();
      } else {
        cli::write_file_atomic(log_path, log.str());
      }
      return kExitOk;
    }

    if (eval->parsed()) {
      const Vocab vocab = Vocab::load(vocab_path);
      const Model model = load_checkpoint(checkpoint, vocab.size()).model;
      const auto records = cli::select_split(load_jigsaw_csv(data), which, run);
      const auto examples = cli::encode_records(records, vocab, model.config.encoder.max_len);
      const Evaluation ev = evaluate(model, examples, {1.0, 1.0}, run.threshold);
      out << cli::format_report(ev.metrics);
      return kExitOk;
    }

    if (predict_cmd->parsed()) {
      const Vocab vocab = Vocab::load(vocab_path);
      const Model model = load_checkpoint(checkpoint, vocab.size()).model;
      if (!input.empty()) {
        texts = cli::read_lines(input);
      } else if (texts.empty()) {
        throw UsageError("predict: give --text or --input");
      }
      for (const auto& text : texts) {
        const Prediction p = predict(model, encode(text, vocab, model.config.encoder.max_len), run.threshold);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%d\t%.6f\n", p.label, p.p_toxic);
        out << buf;
      }
      return kExitOk;
    }

    // compare
    const auto parts = split(load_jigsaw_csv(data), run.split, run.seed);
    const auto train_texts = cli::texts_of(parts.train);
    const Vocab vocab = vocab_path.empty()
                            ? Vocab::build(train_texts, run.vocab.max_size, run.vocab.min_freq)
                            : Vocab::load(vocab_path);
    std::vector<ModelResult> results;
    for (const auto& name : models) {
      err << "compare: " << name << "\n";
      if (name == "tfidf+logistic") {
        TfidfFit tf = tfidf_fit_transform(train_texts, run.baseline_max_features);
        baseline_fit(tf.model, tf.vectors, cli::record_labels(parts.train), run.baseline);
        std::vector<SparseVector> test_vectors;
        for (const auto& r : parts.test) test_vectors.push_back(tf.model.transform(r.comment_text));
        const auto preds = baseline_predict(tf.model, test_vectors);
        results.push_back(ModelResult::from(name, metrics(confusion(preds, cli::record_labels(parts.test)))));
        continue;
      }
      RunConfig variant = run;
      variant.model.bypass_encoder = name == "bilstm";
      const Model initial = cli::initial_model(variant, vocab.size(), variant.model.bypass_encoder ? "" : init);
      const std::size_t max_len = initial.config.encoder.max_len;
      const FitResult fitted = fit(cli::encode_records(parts.train, vocab, max_len),
                                   cli::encode_records(parts.val, vocab, max_len), initial, run.train);
      const auto test_ex = cli::encode_records(parts.test, vocab, max_len);
      results.push_back(ModelResult::from(name, evaluate(fitted.model, test_ex, {1.0, 1.0}, run.threshold).metrics));
    }
    const ComparisonReport report = comparison_report(results);
    out << report.text;
    if (!csv_path.empty()) cli::write_file_atomic(csv_path, report.csv);
    return kExitOk;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace toxseq
