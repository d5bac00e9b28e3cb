#pragma once

#include <algorithm>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toxseq/metrics.hpp"

namespace toxseq {

/// One row of a comparison table. Values may be given without counts.
struct ModelResult {
  std::string name;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> accuracy;

  static ModelResult from(std::string name, const MetricsReport& m) {
    return {std::move(name), m.precision, m.recall, m.accuracy};
  }
};

inline constexpr const char* kAbsentMetric = "—";

/// Two-decimal rendering; absent values render as an em dash.
inline std::string format_metric(const std::optional<double>& value) {
  if (!value) return kAbsentMetric;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *value);
  return buf;
}

/// "P R A" with single spaces, e.g. "0.94 0.93 0.94".
inline std::string format_metric_values(const ModelResult& r) {
  return format_metric(r.precision) + " " + format_metric(r.recall) + " " +
         format_metric(r.accuracy);
}

struct ComparisonReport {
  std::string text;
  std::string csv;
};

namespace detail {

// Display width in code points (the em dash is three bytes).
inline std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s + std::string(width - std::min(width, display_width(s)), ' ');
}

inline std::string pad_left(const std::string& s, std::size_t width) {
  return std::string(width - std::min(width, display_width(s)), ' ') + s;
}

inline std::string csv_metric(const std::optional<double>& value) {
  if (!value) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *value);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Aligned text table with columns Method, Precision, Recall, Acc (always in
/// that order; rows keep insertion order) and its CSV companion.
inline ComparisonReport comparison_report(std::span<const ModelResult> results) {
  const std::vector<std::string> headers{"Method", "Precision", "Recall", "Acc"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : results) {
    cells.push_back({r.name, format_metric(r.precision), format_metric(r.recall),
                     format_metric(r.accuracy)});
  }
  std::vector<std::size_t> width(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) {
    width[c] = detail::display_width(headers[c]);
    for (const auto& row : cells) width[c] = std::max(width[c], detail::display_width(row[c]));
  }
  auto render = [&](const std::vector<std::string>& row) {
    std::string line = detail::pad_right(row[0], width[0]);
    for (std::size_t c = 1; c < row.size(); ++c) line += "  " + detail::pad_left(row[c], width[c]);
    return line + "\n";
  };

  ComparisonReport out;
  out.text = render(headers);
  for (const auto& row : cells) out.text += render(row);
  out.csv = "model,precision,recall,accuracy\n";
  for (const auto& r : results) {
    out.csv += detail::csv_field(r.name) + "," + detail::csv_metric(r.precision) + "," +
               detail::csv_metric(r.recall) + "," + detail::csv_metric(r.accuracy) + "\n";
  }
  return out;
}

}  // namespace toxseq
