#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_set>
#include <vector>

#include "advclust/common.hpp"

namespace advclust {

/// Dense row-major n x d real matrix. Feature units are dataset-specific
/// (pixel intensities, embedding coordinates, ...). All entries finite.
struct FeatureMatrix {
  int n = 0;
  int d = 0;
  std::vector<double> values;  // n * d, row-major

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * d + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * d + j]; }

  std::span<const double> row(int i) const {
    return {values.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
  }
  std::span<double> row(int i) {
    return {values.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)};
  }
};

inline FeatureMatrix make_matrix(int n, int d, double fill = 0.0) {
  if (n < 1 || d < 1) throw Error("matrix dimensions must be at least 1x1");
  FeatureMatrix m;
  m.n = n;
  m.d = d;
  m.values.assign(static_cast<std::size_t>(n) * d, fill);
  return m;
}

/// Throws if any entry is NaN/Inf, reporting the offending (row, column).
inline void ensure_finite(const FeatureMatrix& m) {
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.d; ++j)
      if (!std::isfinite(m.at(i, j)))
        throw Error("non-finite entry at row " + std::to_string(i + 1) + ", column " +
                    std::to_string(j + 1));
}

/// A clustering partition: one non-negative integer id per sample.
/// K is always recomputed from the data (the number of clusters can change
/// while a dataset is being perturbed, so cached counts are never trusted).
struct LabelVector {
  std::vector<int> labels;

  int n() const { return static_cast<int>(labels.size()); }

  int k() const {
    std::unordered_set<int> distinct(labels.begin(), labels.end());
    return static_cast<int>(distinct.size());
  }
};

inline LabelVector make_labels(std::vector<int> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0)
      throw Error("negative label at line " + std::to_string(i + 1));
  return LabelVector{std::move(labels)};
}

/// Per-dataset feature-value range; the domain X + eps is clamped to.
struct BoxBounds {
  double lo = 0.0;
  double hi = 1.0;
};

inline void validate_box(const BoxBounds& b) {
  if (!(b.lo < b.hi)) throw ConfigError("box bounds require lo < hi");
}

inline FeatureMatrix clamp_to_box(const FeatureMatrix& m, const BoxBounds& b) {
  FeatureMatrix out = m;
  for (double& v : out.values) v = std::clamp(v, b.lo, b.hi);
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

}  // namespace advclust
