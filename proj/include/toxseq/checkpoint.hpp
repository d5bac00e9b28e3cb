#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "toxseq/config.hpp"
#include "toxseq/error.hpp"
#include "toxseq/model.hpp"

namespace toxseq {

// Layout (all integers u64 little-endian, values f64 little-endian):
//   "TOXSEQ1\n" | header_len | header (key=value lines) | tensor_count |
//   per tensor: name_len | name | rank | dims[rank] | value_count | values
inline constexpr std::string_view kCheckpointMagic = "TOXSEQ1\n";
inline constexpr std::uint64_t kCheckpointVersion = 1;

enum class CheckpointErrorKind {
  io,
  bad_magic,
  version_mismatch,
  truncated,
  bad_header,
  shape_inconsistency,
  unknown_tensor,
  missing_tensor,
  duplicate_tensor,
  trailing_data,
  vocab_mismatch,
};

class CheckpointError : public DataError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : DataError(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<NamedTensor> tensors;  // file order
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::truncated,
                            source_ + ": truncated checkpoint while reading " + what);
    }
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint64_t u64(const char* what) {
    const auto b = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string source_;
};

inline std::string checkpoint_header(const ModelConfig& config, std::uint64_t seed) {
  std::string h = "format_version=" + std::to_string(kCheckpointVersion) + "\n";
  h += "vocab_size=" + std::to_string(config.encoder.vocab_size) + "\n";
  h += "seed=" + std::to_string(seed) + "\n";
  for (const auto& [k, v] : model_key_values(config)) h += k + "=" + v + "\n";
  return h;
}

inline void parse_checkpoint_header(std::string_view text, Checkpoint& out,
                                    const std::string& source) {
  std::vector<std::pair<std::string, std::string>> pairs;
  try {
    pairs = parse_key_values(text, source + " header");
  } catch (const UsageError& e) {
    throw CheckpointError(CheckpointErrorKind::bad_header, e.what());
  }
  std::map<std::string, std::string> fields;
  for (const auto& [k, v] : pairs) {
    if (!fields.emplace(k, v).second) {
      throw CheckpointError(CheckpointErrorKind::bad_header,
                            source + ": header repeats key '" + k + "'");
    }
  }
  const auto version = fields.find("format_version");
  if (version == fields.end()) {
    throw CheckpointError(CheckpointErrorKind::bad_header, source + ": header lacks format_version");
  }
  if (version->second != std::to_string(kCheckpointVersion)) {
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          source + ": checkpoint format version " + version->second +
                              ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  fields.erase(version);

  RunConfig run;
  try {
    auto take_number = [&](const std::string& key) {
      const auto it = fields.find(key);
      if (it == fields.end()) throw UsageError("header lacks " + key);
      const auto value = parse_number<std::uint64_t>(key, it->second);
      fields.erase(it);
      return value;
    };
    run.model.encoder.vocab_size = static_cast<std::size_t>(take_number("vocab_size"));
    out.seed = take_number("seed");
    for (const auto& [k, v] : model_key_values(run.model)) {
      const auto it = fields.find(k);
      if (it == fields.end()) throw UsageError("header lacks " + k);
      set_config_value(run, k, it->second);
      fields.erase(it);
    }
    if (!fields.empty()) throw UsageError("unexpected header key '" + fields.begin()->first + "'");
    run.model.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorKind::bad_header, source + ": " + e.what());
  }
  out.config = run.model;
}

}  // namespace detail

inline std::string encode_checkpoint(const Model& model, std::uint64_t seed) {
  std::string out(kCheckpointMagic);
  const std::string header = detail::checkpoint_header(model.config, seed);
  detail::put_u64(out, header.size());
  out += header;
  const auto params = model.named_parameters();
  detail::put_u64(out, params.size());
  for (const auto& p : params) {
    detail::put_u64(out, p.name.size());
    out += p.name;
    detail::put_u64(out, p.tensor.rank());
    for (std::size_t d : p.tensor.shape()) detail::put_u64(out, d);
    detail::put_u64(out, p.tensor.numel());
    for (double v : p.tensor.data()) detail::put_f64(out, v);
  }
  return out;
}

/// Parses the container. Tensor names are not checked against the
/// architecture here; see model_from_checkpoint.
inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "checkpoint") {
  if (!bytes.starts_with(kCheckpointMagic)) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, source + ": not a toxseq checkpoint (bad magic)");
  }
  detail::ByteReader in(bytes.substr(kCheckpointMagic.size()), source);
  Checkpoint out;
  const std::uint64_t header_len = in.u64("header length");
  detail::parse_checkpoint_header(in.take(header_len, "header"), out, source);

  const std::uint64_t count = in.u64("tensor count");
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::uint64_t name_len = in.u64("tensor name length");
    std::string name(in.take(name_len, "tensor name"));
    const std::uint64_t rank = in.u64("tensor rank");
    if (rank > in.remaining() / 8) in.take(rank * 8, "tensor dims");
    Shape shape;
    std::uint64_t product = 1;
    bool overflow = false;
    for (std::uint64_t r = 0; r < rank; ++r) {
      const std::uint64_t d = in.u64("tensor dims");
      if (d != 0 && product > UINT64_MAX / d) overflow = true;
      product *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    const std::uint64_t value_count = in.u64("tensor value count");
    if (overflow || product != value_count) {
      throw CheckpointError(CheckpointErrorKind::shape_inconsistency,
                            source + ": tensor '" + name + "' declares dims " + shape_str(shape) +
                                " but holds " + std::to_string(value_count) + " values");
    }
    if (value_count > in.remaining() / 8) in.take(value_count * 8, "tensor values");
    std::vector<double> values(static_cast<std::size_t>(value_count));
    for (auto& v : values) v = in.f64("tensor values");
    out.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (in.remaining() != 0) {
    throw CheckpointError(CheckpointErrorKind::trailing_data,
                          source + ": " + std::to_string(in.remaining()) +
                              " unexpected bytes after the last tensor");
  }
  return out;
}

/// Matches tensors to the architecture by name: each parameter exactly
/// once, with its expected shape, and nothing else.
inline Model model_from_checkpoint(const Checkpoint& ckpt, const std::string& source = "checkpoint") {
  Model model = Model::init(ckpt.config, ckpt.seed);
  auto params = model.named_parameters();
  std::map<std::string, NamedTensor*> by_name;
  for (auto& p : params) by_name.emplace(p.name, &p);
  std::set<std::string> seen;
  for (const auto& t : ckpt.tensors) {
    const auto it = by_name.find(t.name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointErrorKind::unknown_tensor,
                            source + ": unknown tensor '" + t.name + "'");
    }
    if (!seen.insert(t.name).second) {
      throw CheckpointError(CheckpointErrorKind::duplicate_tensor,
                            source + ": tensor '" + t.name + "' appears more than once");
    }
    Tensor& dst = it->second->tensor;
    if (dst.shape() != t.tensor.shape()) {
      throw CheckpointError(CheckpointErrorKind::shape_inconsistency,
                            source + ": tensor '" + t.name + "' has shape " +
                                shape_str(t.tensor.shape()) + ", configuration expects " +
                                shape_str(dst.shape()));
    }
    const auto src = t.tensor.data();
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
  for (const auto& p : params) {
    if (!seen.contains(p.name)) {
      throw CheckpointError(CheckpointErrorKind::missing_tensor,
                            source + ": missing tensor '" + p.name + "'");
    }
  }
  return model;
}

/// Atomic: writes `path.tmp`, then renames over `path`.
inline void save_checkpoint(const Model& model, std::uint64_t seed, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model, seed);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointErrorKind::io, "failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

struct LoadedCheckpoint {
  Model model;
  std::uint64_t seed = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                        std::optional<std::size_t> expected_vocab_size = {}) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (expected_vocab_size && *expected_vocab_size != ckpt.config.encoder.vocab_size) {
    throw CheckpointError(CheckpointErrorKind::vocab_mismatch,
                          path.string() + ": checkpoint vocab_size " +
                              std::to_string(ckpt.config.encoder.vocab_size) + " but vocab has " +
                              std::to_string(*expected_vocab_size) + " tokens");
  }
  return {model_from_checkpoint(ckpt, path.string()), ckpt.seed};
}

}  // namespace toxseq
