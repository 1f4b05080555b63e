#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "advclust/common.hpp"
#include "advclust/matrix.hpp"

namespace advclust {

enum class TextFormat { csv, tsv };

inline char separator(TextFormat f) { return f == TextFormat::csv ? ',' : '\t'; }

namespace detail {

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline double parse_double(std::string_view field, int row, int col) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw Error("unparsable numeric field at row " + std::to_string(row) + ", column " +
                std::to_string(col));
  if (!std::isfinite(value))
    throw Error("non-finite entry at row " + std::to_string(row) + ", column " +
                std::to_string(col));
  return value;
}

}  // namespace detail

/// Reads a headerless delimiter-separated numeric matrix. Every row must have
/// the same field count; NaN/Inf entries are rejected.
inline FeatureMatrix load_matrix(const std::string& path, TextFormat format = TextFormat::csv) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open matrix file: " + path);

  const char sep = separator(format);
  FeatureMatrix m;
  std::string raw;
  int row = 0;
  while (std::getline(in, raw)) {
    const std::string_view line = detail::strip_cr(raw);
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    ++row;
    std::vector<double> fields;
    std::size_t start = 0;
    int col = 0;
    while (true) {
      const std::size_t end = line.find(sep, start);
      const std::string_view field =
          line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
      ++col;
      fields.push_back(detail::parse_double(field, row, col));
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
    if (m.d == 0) {
      m.d = static_cast<int>(fields.size());
    } else if (static_cast<int>(fields.size()) != m.d) {
      throw Error("ragged row at row " + std::to_string(row) + ": expected " +
                  std::to_string(m.d) + " fields, got " + std::to_string(fields.size()));
    }
    m.values.insert(m.values.end(), fields.begin(), fields.end());
    ++m.n;
  }
  if (in.bad()) throw Error("read failure on matrix file: " + path);
  if (m.n == 0) throw Error("empty matrix file: " + path);
  return m;
}

/// Writes with 17 significant digits so that save/load round-trips doubles
/// bit-faithfully (golden-file tests depend on this).
inline void save_matrix(const FeatureMatrix& m, const std::string& path,
                        TextFormat format = TextFormat::csv) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open matrix file for writing: " + path);
  const char sep = separator(format);
  for (int i = 0; i < m.n; ++i) {
    for (int j = 0; j < m.d; ++j) {
      if (j) out << sep;
      out << format_double(m.at(i, j));
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw Error("write failure on matrix file: " + path);
}

/// One non-negative integer per LF-terminated line.
inline LabelVector load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open label file: " + path);
  std::vector<int> labels;
  std::string raw;
  int row = 0;
  while (std::getline(in, raw)) {
    const std::string_view line = detail::strip_cr(raw);
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    ++row;
    int value = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc{} || ptr != line.data() + line.size())
      throw Error("non-integer label at line " + std::to_string(row));
    if (value < 0) throw Error("negative label at line " + std::to_string(row));
    labels.push_back(value);
  }
  if (in.bad()) throw Error("read failure on label file: " + path);
  if (labels.empty()) throw Error("empty label file: " + path);
  return LabelVector{std::move(labels)};
}

inline void save_labels(const LabelVector& l, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open label file for writing: " + path);
  for (int v : l.labels) out << v << '\n';
  out.flush();
  if (!out) throw Error("write failure on label file: " + path);
}

}  // namespace advclust
