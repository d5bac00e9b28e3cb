#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "toxseq/error.hpp"
#include "toxseq/rng.hpp"
#include "toxseq/text.hpp"

namespace toxseq {

inline constexpr double kToxicThreshold = 0.5;

struct DatasetRecord {
  std::string id;
  std::string comment_text;
  double target = 0.0;
  int label = 0;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

inline int binarize_target(double target) { return target >= kToxicThreshold ? 1 : 0; }

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and line
/// breaks; records end at LF or CRLF.
inline std::vector<CsvRow> parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  std::vector<CsvRow> rows;
  CsvRow current;
  std::string field;
  std::size_t line = 1;
  current.line = line;
  bool in_quotes = false;
  bool field_started = false;
  bool row_has_content = false;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (row_has_content || current.fields.size() > 1 || !current.fields[0].empty()) {
      rows.push_back(std::move(current));
    }
    current = CsvRow{};
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw DataError("csv line " + std::to_string(line) + ": stray quote inside field");
        }
        in_quotes = true;
        field_started = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        field += c;
        break;
      case '\n':
        end_row();
        ++line;
        current.line = line;
        break;
      default:
        field += c;
        field_started = true;
        row_has_content = true;
    }
  }
  if (in_quotes) {
    throw DataError("csv line " + std::to_string(current.line) + ": unterminated quoted field");
  }
  if (!field.empty() || !current.fields.empty() || row_has_content) end_row();
  return rows;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

/// Parses Jigsaw-style CSV text with id, comment_text and target columns.
inline std::vector<DatasetRecord> parse_jigsaw_csv(std::string_view text,
                                                   const std::string& source = "<csv>") {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw DataError(source + ": missing header row");
  const auto& header = rows.front().fields;
  auto column = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(source + ": missing required column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = column("id");
  const std::size_t text_col = column("comment_text");
  const std::size_t target_col = column("target");

  std::vector<DatasetRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = source + ":" + std::to_string(row.line);
    if (row.fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(row.fields.size()));
    }
    const std::string& raw = row.fields[target_col];
    double target = 0.0;
    const char* first = raw.data();
    const char* last = raw.data() + raw.size();
    while (first < last && *first == ' ') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, target);
    if (ec != std::errc{} || ptr != last || !std::isfinite(target) || target < 0.0 ||
        target > 1.0) {
      throw DataError(where + ": unparsable target value '" + raw + "'");
    }
    records.push_back({row.fields[id_col], row.fields[text_col], target, binarize_target(target)});
  }
  return records;
}

inline std::vector<DatasetRecord> load_jigsaw_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
  return parse_jigsaw_csv(read_file(path), path.string());
}

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

template <typename Record>
struct SplitParts {
  std::vector<Record> train;
  std::vector<Record> val;
  std::vector<Record> test;
};

namespace detail {

inline int label_of(const DatasetRecord& r) { return r.label; }
inline int label_of(const EncodedExample& e) {
  if (!e.label) throw PreconditionError("split: example without a label");
  return *e.label;
}

// Largest-remainder apportionment of `count` items over three ratios.
inline std::array<std::size_t, 3> apportion(std::size_t count, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> quota{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = ratios[k] * static_cast<double>(count);
    quota[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[k] = exact - static_cast<double>(quota[k]);
    assigned += quota[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < count; k = (k + 1) % 3, ++assigned) ++quota[order[k]];
  return quota;
}

}  // namespace detail

template <typename Record>
concept Labeled = requires(const Record& r) {
  { detail::label_of(r) } -> std::convertible_to<int>;
};

/// Seeded stratified three-way partition. Each class is shuffled on its own
/// and apportioned by largest remainder, so per-class part sizes are within
/// one record of ratio * class size.
template <Labeled Record>
SplitParts<Record> split(std::span<const Record> records, SplitRatios ratios, std::uint64_t seed) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  if (r[0] <= 0.0 || r[1] <= 0.0 || r[2] <= 0.0 || std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw PreconditionError("split: ratios must be positive and sum to 1");
  }
  Rng rng(seed);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int label = detail::label_of(records[i]);
    by_class.at(static_cast<std::size_t>(label)).push_back(i);
  }
  std::array<std::vector<std::size_t>, 3> parts;
  constexpr std::array<const char*, 3> names{"train", "val", "test"};
  for (int cls = 0; cls < 2; ++cls) {
    auto& idx = by_class[cls];
    rng.shuffle(std::span(idx));
    const auto quota = detail::apportion(idx.size(), r);
    std::size_t at = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      if (quota[k] == 0) {
        throw DataError(std::string("split: part '") + names[k] + "' receives no records of class " +
                        std::to_string(cls));
      }
      parts[k].insert(parts[k].end(), idx.begin() + at, idx.begin() + at + quota[k]);
      at += quota[k];
    }
  }
  SplitParts<Record> out;
  std::array<std::vector<Record>*, 3> targets{&out.train, &out.val, &out.test};
  for (std::size_t k = 0; k < 3; ++k) {
    rng.shuffle(std::span(parts[k]));
    targets[k]->reserve(parts[k].size());
    for (auto i : parts[k]) targets[k]->push_back(records[i]);
  }
  return out;
}

template <Labeled Record>
SplitParts<Record> split(const std::vector<Record>& records, SplitRatios ratios, std::uint64_t seed) {
  return split(std::span<const Record>(records), ratios, seed);
}

}  // namespace toxseq
