#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "toxseq/dataset.hpp"
#include "toxseq/error.hpp"
#include "toxseq/model.hpp"
#include "toxseq/pretrain.hpp"
#include "toxseq/tfidf.hpp"
#include "toxseq/training.hpp"

namespace toxseq {

struct VocabOptions {
  std::size_t max_size = 30000;
  std::size_t min_freq = 1;
};

/// Everything a CLI run can be configured with. `seed` drives every
/// stochastic component (initialization, splitting, shuffling, masking,
/// dropout).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PretrainConfig pretrain;
  BaselineConfig baseline;
  std::size_t baseline_max_features = 0;
  SplitRatios split;
  VocabOptions vocab;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void apply_seed() {
    train.seed = seed;
    pretrain.seed = seed;
    baseline.seed = seed;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw UsageError("config key '" + std::string(key) + "': invalid value '" + std::string(text) +
                     "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError("config key '" + std::string(key) + "': expected true/false, got '" +
                   std::string(text) + "'");
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view key, std::string_view text,
                const std::array<std::pair<std::string_view, Enum>, N>& options) {
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (name == text) return value;
    allowed += (allowed.empty() ? "" : "|") + std::string(name);
  }
  throw UsageError("config key '" + std::string(key) + "': expected " + allowed + ", got '" +
                   std::string(text) + "'");
}

template <typename Enum, std::size_t N>
std::string enum_name(Enum value, const std::array<std::pair<std::string_view, Enum>, N>& options) {
  for (const auto& [name, v] : options)
    if (v == value) return std::string(name);
  return "?";
}

inline constexpr auto kCellModes = std::to_array<std::pair<std::string_view, CellMode>>({
    {"lstm", CellMode::lstm}, {"simple_tanh", CellMode::simple_tanh}});
inline constexpr auto kPoolingModes = std::to_array<std::pair<std::string_view, PoolingMode>>({
    {"concat_all", PoolingMode::concat_all},
    {"final_states", PoolingMode::final_states},
    {"mean", PoolingMode::mean}});
inline constexpr auto kMerges = std::to_array<std::pair<std::string_view, DirectionalMerge>>({
    {"sum", DirectionalMerge::sum}, {"concat", DirectionalMerge::concat}});
inline constexpr auto kOptimizers = std::to_array<std::pair<std::string_view, OptimizerKind>>({
    {"sgd", OptimizerKind::sgd}, {"adam", OptimizerKind::adam}});
inline constexpr auto kWeightings = std::to_array<std::pair<std::string_view, ClassWeighting>>({
    {"none", ClassWeighting::none}, {"inverse_frequency", ClassWeighting::inverse_frequency}});

struct ConfigKey {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TOXSEQ_SIZE_KEY(name, field)                                                           \
  ConfigKey {                                                                                  \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_number<std::size_t>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                             \
  }
#define TOXSEQ_DOUBLE_KEY(name, field)                                                     \
  ConfigKey {                                                                              \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_number<double>(name, v); }, \
        [](const RunConfig& c) { return format_double(c.field); }                          \
  }
#define TOXSEQ_BOOL_KEY(name, field)                                              \
  ConfigKey {                                                                     \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_bool(name, v); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); } \
  }
#define TOXSEQ_ENUM_KEY(name, field, table)                                                 \
  ConfigKey {                                                                               \
    name, [](RunConfig& c, std::string_view v) { c.field = parse_enum(name, v, table); },    \
        [](const RunConfig& c) { return enum_name(c.field, table); }                        \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      TOXSEQ_SIZE_KEY("encoder.num_layers", model.encoder.num_layers),
      TOXSEQ_SIZE_KEY("encoder.num_heads", model.encoder.num_heads),
      TOXSEQ_SIZE_KEY("encoder.model_dim", model.encoder.model_dim),
      TOXSEQ_SIZE_KEY("encoder.ff_dim", model.encoder.ff_dim),
      TOXSEQ_SIZE_KEY("encoder.max_len", model.encoder.max_len),
      TOXSEQ_DOUBLE_KEY("encoder.dropout_rate", model.encoder.dropout_rate),
      TOXSEQ_SIZE_KEY("head.weight_dim", model.head.weight_dim),
      TOXSEQ_SIZE_KEY("head.hidden_dim", model.head.hidden_dim),
      TOXSEQ_SIZE_KEY("head.fc_dim", model.head.fc_dim),
      TOXSEQ_ENUM_KEY("head.cell_mode", model.head.cell, kCellModes),
      TOXSEQ_ENUM_KEY("head.pooling_mode", model.head.pooling, kPoolingModes),
      TOXSEQ_ENUM_KEY("head.directional_merge", model.head.merge, kMerges),
      TOXSEQ_BOOL_KEY("model.bypass_encoder", model.bypass_encoder),
      TOXSEQ_DOUBLE_KEY("train.learning_rate", train.learning_rate),
      TOXSEQ_DOUBLE_KEY("train.encoder_learning_rate", train.encoder_learning_rate),
      TOXSEQ_SIZE_KEY("train.batch_size", train.batch_size),
      TOXSEQ_SIZE_KEY("train.max_epochs", train.max_epochs),
      TOXSEQ_ENUM_KEY("train.optimizer", train.optimizer, kOptimizers),
      TOXSEQ_DOUBLE_KEY("train.adam_beta1", train.adam.beta1),
      TOXSEQ_DOUBLE_KEY("train.adam_beta2", train.adam.beta2),
      TOXSEQ_DOUBLE_KEY("train.adam_eps", train.adam.eps),
      TOXSEQ_ENUM_KEY("train.class_weighting", train.class_weighting, kWeightings),
      TOXSEQ_SIZE_KEY("train.early_stop_patience", train.early_stop_patience),
      TOXSEQ_BOOL_KEY("train.encoder_frozen", train.encoder_frozen),
      ConfigKey{"train.gradient_clip_norm",
                [](RunConfig& c, std::string_view v) {
                  if (v == "none") {
                    c.train.gradient_clip_norm.reset();
                  } else {
                    c.train.gradient_clip_norm = parse_number<double>("train.gradient_clip_norm", v);
                  }
                },
                [](const RunConfig& c) {
                  return c.train.gradient_clip_norm ? format_double(*c.train.gradient_clip_norm)
                                                    : std::string("none");
                }},
      TOXSEQ_SIZE_KEY("pretrain.steps", pretrain.steps),
      TOXSEQ_SIZE_KEY("pretrain.batch_size", pretrain.batch_size),
      TOXSEQ_DOUBLE_KEY("pretrain.learning_rate", pretrain.learning_rate),
      TOXSEQ_DOUBLE_KEY("pretrain.selection_rate", pretrain.masking.selection_rate),
      TOXSEQ_SIZE_KEY("baseline.epochs", baseline.epochs),
      TOXSEQ_SIZE_KEY("baseline.batch_size", baseline.batch_size),
      TOXSEQ_DOUBLE_KEY("baseline.learning_rate", baseline.learning_rate),
      TOXSEQ_SIZE_KEY("baseline.max_features", baseline_max_features),
      TOXSEQ_DOUBLE_KEY("split.train", split.train),
      TOXSEQ_DOUBLE_KEY("split.val", split.val),
      TOXSEQ_DOUBLE_KEY("split.test", split.test),
      TOXSEQ_SIZE_KEY("vocab.max_size", vocab.max_size),
      TOXSEQ_SIZE_KEY("vocab.min_freq", vocab.min_freq),
      TOXSEQ_DOUBLE_KEY("eval.threshold", threshold),
      ConfigKey{"seed",
                [](RunConfig& c, std::string_view v) {
                  c.seed = parse_number<std::uint64_t>("seed", v);
                },
                [](const RunConfig& c) { return std::to_string(c.seed); }},
  };
  return keys;
}

#undef TOXSEQ_SIZE_KEY
#undef TOXSEQ_DOUBLE_KEY
#undef TOXSEQ_BOOL_KEY
#undef TOXSEQ_ENUM_KEY

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Sets one dotted key; unknown keys are a UsageError.
inline void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& entry : detail::config_keys()) {
    if (entry.key == key) {
      entry.set(config, detail::trim(value));
      return;
    }
  }
  throw UsageError("unknown config key '" + std::string(key) + "'");
}

inline std::string get_config_value(const RunConfig& config, std::string_view key) {
  for (const auto& entry : detail::config_keys()) {
    if (entry.key == key) return entry.get(config);
  }
  throw UsageError("unknown config key '" + std::string(key) + "'");
}

/// Parses "key=value" lines; '#' starts a comment, blank lines are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                         const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    out.emplace_back(std::string(detail::trim(line.substr(0, eq))),
                     std::string(detail::trim(line.substr(eq + 1))));
  }
  return out;
}

inline void apply_key_values(RunConfig& config,
                             const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [k, v] : pairs) set_config_value(config, k, v);
}

inline void load_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  apply_key_values(config, parse_key_values(text, path.string()));
}

/// Model-architecture keys in a fixed order (the checkpoint header subset).
inline std::vector<std::pair<std::string, std::string>> model_key_values(const ModelConfig& model) {
  RunConfig tmp;
  tmp.model = model;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : detail::config_keys()) {
    if (entry.key.starts_with("encoder.") || entry.key.starts_with("head.") ||
        entry.key.starts_with("model.")) {
      out.emplace_back(std::string(entry.key), entry.get(tmp));
    }
  }
  return out;
}

}  // namespace toxseq
