#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "toxseq/error.hpp"

namespace toxseq {

using TokenId = int;

namespace detail {

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Decodes UTF-8; malformed sequences yield U+FFFD for the offending byte.
inline std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      ok = (b & 0xC0) == 0x80;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

// Cc controls plus zero-width format characters.
inline bool is_removable_control(char32_t c) {
  return c < 0x20 || (c >= 0x7F && c <= 0x9F) || (c >= 0x200B && c <= 0x200F) || c == 0xFEFF;
}

inline bool is_punctuation(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB ||
         c == 0xBF || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x303F) || (c >= 0xFF01 && c <= 0xFF0F);
}

// ASCII, Latin-1, Greek and basic Cyrillic case folding.
inline char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 0x20;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  return c;
}

}  // namespace detail

/// Lowercases, drops control characters, isolates each punctuation mark as
/// its own token and collapses whitespace runs to single spaces.
inline std::string normalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  auto emit_space = [&] { pending_space = !out.empty(); };
  for (char32_t c : detail::decode_utf8(text)) {
    if (detail::is_unicode_space(c)) {
      emit_space();
      continue;
    }
    if (detail::is_removable_control(c)) continue;
    if (detail::is_punctuation(c)) {
      emit_space();
      if (pending_space) out += ' ';
      detail::append_utf8(out, c);
      pending_space = true;
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    detail::append_utf8(out, detail::to_lower(c));
  }
  return out;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const std::string norm = normalize(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    if (end > start) tokens.emplace_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

/// Token/id bijection with five reserved ids at the front.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr std::size_t kReservedCount = 5;

  static constexpr std::string_view reserved_token(TokenId id) {
    constexpr std::string_view names[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    return names[id];
  }

  Vocab() {
    for (TokenId id = 0; id < static_cast<TokenId>(kReservedCount); ++id) {
      insert(std::string(reserved_token(id)));
    }
  }

  /// Ranks corpus tokens by frequency (ties lexicographic), keeps those with
  /// count >= min_freq, and truncates so size() <= max_size.
  static Vocab build(std::span<const std::string> corpus, std::size_t max_size,
                     std::size_t min_freq = 1) {
    if (max_size <= kReservedCount) {
      throw PreconditionError("build_vocab: max_size must exceed " +
                              std::to_string(kReservedCount) + " reserved tokens");
    }
    if (corpus.empty()) throw PreconditionError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& doc : corpus) {
      for (auto& tok : tokenize(doc)) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab vocab;
    for (const auto& [tok, count] : ranked) {
      if (vocab.size() >= max_size) break;
      if (count < min_freq) continue;
      if (!vocab.contains(tok)) vocab.insert(tok);
    }
    return vocab;
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocab file " + path.string());
    Vocab vocab;
    vocab.tokens_.clear();
    vocab.ids_.clear();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty token");
      if (vocab.contains(line)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": duplicate token '" +
                        line + "'");
      }
      vocab.insert(line);
    }
    for (TokenId id = 0; id < static_cast<TokenId>(kReservedCount); ++id) {
      if (vocab.size() <= static_cast<std::size_t>(id) || vocab.tokens_[id] != reserved_token(id)) {
        throw DataError(path.string() + ": line " + std::to_string(id + 1) + " must be " +
                        std::string(reserved_token(id)));
      }
    }
    return vocab;
  }

  void save(const std::filesystem::path& path) const {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw DataError("cannot write vocab file " + path.string());
      for (const auto& tok : tokens_) out << tok << '\n';
      if (!out) throw DataError("failed writing vocab file " + path.string());
    }
    std::filesystem::rename(tmp, path);
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.contains(token); }

  TokenId id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  static bool is_special(TokenId id) {
    return id >= 0 && id < static_cast<TokenId>(kReservedCount);
  }

 private:
  void insert(std::string token) {
    ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Fixed-length model input for one comment.
struct EncodedExample {
  std::vector<TokenId> token_ids;
  std::vector<TokenId> segment_ids;
  std::vector<TokenId> position_ids;
  std::vector<int> attention_mask;
  std::optional<int> label;

  std::size_t length() const { return token_ids.size(); }
  std::size_t real_length() const {
    return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
  }

  friend bool operator==(const EncodedExample&, const EncodedExample&) = default;
};

/// [CLS] tokens... [SEP] then [PAD] up to max_len; keeps the leading
/// max_len-2 tokens when the text is too long.
inline EncodedExample encode_tokens(std::span<const std::string> tokens, const Vocab& vocab,
                                    std::size_t max_len, std::optional<int> label = std::nullopt) {
  if (max_len < 3) throw PreconditionError("encode: max_len must be at least 3");
  const std::size_t kept = std::min(tokens.size(), max_len - 2);
  EncodedExample ex;
  ex.token_ids.reserve(max_len);
  ex.token_ids.push_back(Vocab::kCls);
  for (std::size_t i = 0; i < kept; ++i) ex.token_ids.push_back(vocab.id(tokens[i]));
  ex.token_ids.push_back(Vocab::kSep);
  const std::size_t real = ex.token_ids.size();
  ex.token_ids.resize(max_len, Vocab::kPad);
  ex.segment_ids.assign(max_len, 0);
  ex.position_ids.resize(max_len);
  for (std::size_t i = 0; i < max_len; ++i) ex.position_ids[i] = static_cast<TokenId>(i);
  ex.attention_mask.assign(max_len, 0);
  std::fill_n(ex.attention_mask.begin(), real, 1);
  ex.label = label;
  return ex;
}

inline EncodedExample encode(std::string_view text, const Vocab& vocab, std::size_t max_len,
                             std::optional<int> label = std::nullopt) {
  const auto tokens = tokenize(text);
  return encode_tokens(tokens, vocab, max_len, label);
}

/// Content tokens (between [CLS] and [SEP]) as strings.
inline std::vector<std::string> decode(const EncodedExample& ex, const Vocab& vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < ex.length(); ++i) {
    if (!ex.attention_mask[i] || ex.token_ids[i] == Vocab::kSep) break;
    out.push_back(vocab.token(ex.token_ids[i]));
  }
  return out;
}

}  // namespace toxseq
