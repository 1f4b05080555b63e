#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "advclust/assignment.hpp"
#include "advclust/common.hpp"
#include "advclust/matrix.hpp"

namespace advclust {

// ---------------------------------------------------------------------------
// Contingency table
// ---------------------------------------------------------------------------

struct Contingency {
  int rows = 0;  // clusters in a
  int cols = 0;  // clusters in b
  std::vector<long long> counts;  // rows * cols
  std::vector<long long> row_sums;
  std::vector<long long> col_sums;
  long long total = 0;

  long long at(int i, int j) const { return counts[static_cast<std::size_t>(i) * cols + j]; }
};

namespace detail {

// Compacts arbitrary non-negative ids to 0..K-1 in first-occurrence order.
inline std::vector<int> compact_ids(const std::vector<int>& labels, int& k_out) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  k_out = static_cast<int>(remap.size());
  return out;
}

}  // namespace detail

inline Contingency contingency_table(const LabelVector& a, const LabelVector& b) {
  if (a.n() != b.n()) throw Error("label vectors have different lengths");
  if (a.n() == 0) throw Error("label vectors are empty");
  Contingency c;
  const std::vector<int> ca = detail::compact_ids(a.labels, c.rows);
  const std::vector<int> cb = detail::compact_ids(b.labels, c.cols);
  c.counts.assign(static_cast<std::size_t>(c.rows) * c.cols, 0);
  c.row_sums.assign(c.rows, 0);
  c.col_sums.assign(c.cols, 0);
  for (int i = 0; i < a.n(); ++i) {
    ++c.counts[static_cast<std::size_t>(ca[i]) * c.cols + cb[i]];
    ++c.row_sums[ca[i]];
    ++c.col_sums[cb[i]];
  }
  c.total = a.n();
  return c;
}

// ---------------------------------------------------------------------------
// Information-theoretic partition similarity
// ---------------------------------------------------------------------------

inline double partition_entropy(std::span<const long long> sums, long long n) {
  double h = 0.0;
  for (long long s : sums) {
    if (s == 0) continue;
    const double p = static_cast<double>(s) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

inline double mutual_information(const Contingency& c) {
  double mi = 0.0;
  const double n = static_cast<double>(c.total);
  for (int i = 0; i < c.rows; ++i) {
    for (int j = 0; j < c.cols; ++j) {
      const long long nij = c.at(i, j);
      if (nij == 0) continue;
      const double pij = nij / n;
      mi += pij * std::log(n * nij / (static_cast<double>(c.row_sums[i]) * c.col_sums[j]));
    }
  }
  return std::max(mi, 0.0);
}

/// Expected mutual information under the permutation (hypergeometric) model,
/// with fixed marginals. Sums the standard closed form cell by cell; the
/// hypergeometric weights are evaluated through log-gamma to stay stable for
/// large counts.
inline double expected_mutual_information(const Contingency& c) {
  const long long n = c.total;
  const double logn = std::log(static_cast<double>(n));
  double emi = 0.0;
  for (int i = 0; i < c.rows; ++i) {
    const long long ai = c.row_sums[i];
    for (int j = 0; j < c.cols; ++j) {
      const long long bj = c.col_sums[j];
      const long long lo = std::max<long long>(1, ai + bj - n);
      const long long hi = std::min(ai, bj);
      for (long long nij = lo; nij <= hi; ++nij) {
        const double term =
            (static_cast<double>(nij) / n) *
            (logn + std::log(static_cast<double>(nij)) -
             std::log(static_cast<double>(ai) * static_cast<double>(bj)));
        const double log_weight =
            std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(n - ai + 1.0) +
            std::lgamma(n - bj + 1.0) - std::lgamma(n + 1.0) - std::lgamma(nij + 1.0) -
            std::lgamma(ai - nij + 1.0) - std::lgamma(bj - nij + 1.0) -
            std::lgamma(n - ai - bj + nij + 1.0);
        emi += term * std::exp(log_weight);
      }
    }
  }
  return emi;
}

enum class AmiNormalizer { mean, max, min };

/// Adjusted Mutual Information: (MI - E[MI]) / (norm(H_a, H_b) - E[MI]).
/// 1.0 for identical partitions, ~0 for independent ones, may be slightly
/// negative. Invariant under relabeling of either argument.
inline double ami(const LabelVector& a, const LabelVector& b,
                  AmiNormalizer norm = AmiNormalizer::mean) {
  const Contingency c = contingency_table(a, b);
  if (c.rows == 1 && c.cols == 1) return 1.0;

  const double ha = partition_entropy(c.row_sums, c.total);
  const double hb = partition_entropy(c.col_sums, c.total);
  const double mi = mutual_information(c);
  const double emi = expected_mutual_information(c);

  double normalizer = 0.0;
  switch (norm) {
    case AmiNormalizer::mean: normalizer = 0.5 * (ha + hb); break;
    case AmiNormalizer::max: normalizer = std::max(ha, hb); break;
    case AmiNormalizer::min: normalizer = std::min(ha, hb); break;
  }

  double denom = normalizer - emi;
  // Guard against cancellation when the normalizer and E[MI] agree.
  constexpr double kEps = 2.220446049250313e-16;
  if (denom < 0.0)
    denom = std::min(denom, -kEps);
  else
    denom = std::max(denom, kEps);
  return (mi - emi) / denom;
}

/// Adjusted Rand index from contingency pair counts. 1.0 for identical
/// partitions, ~0 for independent ones.
inline double ari(const LabelVector& a, const LabelVector& b) {
  const Contingency c = contingency_table(a, b);
  auto choose2 = [](long long x) { return 0.5 * static_cast<double>(x) * (x - 1); };

  double index = 0.0;
  for (long long nij : c.counts) index += choose2(nij);
  double sum_a = 0.0, sum_b = 0.0;
  for (long long s : c.row_sums) sum_a += choose2(s);
  for (long long s : c.col_sums) sum_b += choose2(s);
  const double pairs = choose2(c.total);
  const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);

  if (std::abs(max_index - expected) < 1e-300) return 1.0;  // both partitions degenerate
  return (index - expected) / (max_index - expected);
}

/// || Y Y^T - Y' Y'^T ||_F on one-hot partition encodings, computed from the
/// contingency table without materializing the n x n co-association matrices:
/// the squared norm counts ordered sample pairs co-clustered in exactly one
/// of the two partitions.
inline double frob_distance(const LabelVector& a, const LabelVector& b) {
  const Contingency c = contingency_table(a, b);
  double same_a = 0.0, same_b = 0.0, same_both = 0.0;
  for (long long s : c.row_sums) same_a += static_cast<double>(s) * s;
  for (long long s : c.col_sums) same_b += static_cast<double>(s) * s;
  for (long long nij : c.counts) same_both += static_cast<double>(nij) * nij;
  return std::sqrt(std::max(0.0, same_a + same_b - 2.0 * same_both));
}

enum class PhiKind { ami, ari, frob };

inline const char* phi_name(PhiKind k) {
  switch (k) {
    case PhiKind::ami: return "ami";
    case PhiKind::ari: return "ari";
    case PhiKind::frob: return "frob";
  }
  return "?";
}

/// The quantity the attacker minimizes: ami/ari directly (similarities), and
/// the NEGATED Frobenius distance for frob, so that smaller always means
/// "partitions are more different".
inline double phi_for_attack(PhiKind kind, const LabelVector& a, const LabelVector& b) {
  switch (kind) {
    case PhiKind::ami: return ami(a, b);
    case PhiKind::ari: return ari(a, b);
    case PhiKind::frob: return -frob_distance(a, b);
  }
  throw Error("unknown phi kind");
}

// ---------------------------------------------------------------------------
// Mask norms and the Power & Effort penalty
// ---------------------------------------------------------------------------

struct MaskNorms {
  long long l0 = 0;  // exact nonzero count (zero-mutation writes exact zeros)
  double l2 = 0.0;
  double linf = 0.0;
};

inline MaskNorms vector_norms(std::span<const double> values) {
  MaskNorms n;
  double sq = 0.0;
  for (double v : values) {
    if (v != 0.0) ++n.l0;
    sq += v * v;
    n.linf = std::max(n.linf, std::abs(v));
  }
  n.l2 = std::sqrt(sq);
  return n;
}

inline double pe_penalty(const MaskNorms& n, double lambda) {
  return lambda * static_cast<double>(n.l0) * n.linf;
}

inline double pe_penalty(std::span<const double> values, double lambda) {
  return pe_penalty(vector_norms(values), lambda);
}

/// ||x||_p for p in [1, inf].
inline double lp_norm(std::span<const double> x, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
  }
  if (p == 1.0) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
  }
  if (p == 2.0) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
  }
  double s = 0.0;
  for (double v : x) s += std::pow(std::abs(v), p);
  return std::pow(s, 1.0 / p);
}

/// Norm-equivalence bound ||x||_p <= ||x||_0 * ||x||_q for 1 <= p <= q.
/// Property-test oracle only; the tiny relative slack absorbs rounding in the
/// equality cases (e.g. a single nonzero entry).
inline bool check_lemma1(std::span<const double> x, double p, double q) {
  const double lhs = lp_norm(x, p);
  long long l0 = 0;
  for (double v : x) l0 += (v != 0.0);
  const double rhs = static_cast<double>(l0) * lp_norm(x, q);
  return lhs <= rhs * (1.0 + 1e-12) + 1e-300;
}

// ---------------------------------------------------------------------------
// Silhouette
// ---------------------------------------------------------------------------

/// Mean over samples of (b - a) / max(a, b) with Euclidean distances.
/// Convention: s = 0 for singleton-cluster samples and when a = b = 0
/// (identical points). Requires at least two clusters.
inline double silhouette(const FeatureMatrix& m, const LabelVector& l) {
  if (l.n() != m.n) throw Error("labels/matrix length mismatch");
  int k = 0;
  const std::vector<int> ids = detail::compact_ids(l.labels, k);
  if (k < 2) throw Error("silhouette requires at least 2 clusters");

  std::vector<long long> sizes(k, 0);
  for (int id : ids) ++sizes[id];

  double total = 0.0;
  std::vector<double> dist_sum(k);
  for (int i = 0; i < m.n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (int j = 0; j < m.n; ++j) {
      if (j == i) continue;
      dist_sum[ids[j]] += euclidean_distance(m.row(i), m.row(j));
    }
    const int own = ids[i];
    if (sizes[own] <= 1) continue;  // s(i) = 0
    const double a = dist_sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own || sizes[c] == 0) continue;
      b = std::min(b, dist_sum[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(m.n);
}

// ---------------------------------------------------------------------------
// Miss-clustered counts
// ---------------------------------------------------------------------------

namespace detail {

struct ClusterMatching {
  std::vector<int> match_for_row;  // before-cluster -> after-cluster (or >= cols: unmatched)
  long long agreement = 0;
};

inline ClusterMatching max_agreement_matching(const Contingency& c) {
  const int m = std::max(c.rows, c.cols);
  std::vector<std::vector<long long>> cost(m, std::vector<long long>(m, 0));
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) cost[i][j] = -c.at(i, j);
  ClusterMatching out;
  out.match_for_row = detail::min_cost_assignment(cost);
  out.match_for_row.resize(c.rows);
  for (int i = 0; i < c.rows; ++i) {
    const int j = out.match_for_row[i];
    if (j < c.cols) out.agreement += c.at(i, j);
  }
  return out;
}

}  // namespace detail

/// Samples whose cluster disagrees between the two partitions after the
/// after-clusters are optimally matched (maximum agreement assignment) to the
/// before-clusters, so any pure relabeling counts as zero.
inline long long miss_clustered(const LabelVector& before, const LabelVector& after) {
  const Contingency c = contingency_table(before, after);
  return c.total - detail::max_agreement_matching(c).agreement;
}

/// Alternative count: samples of one before-cluster that left its matched
/// after-cluster. `victim` is the raw label id used in `before`.
inline long long miss_clustered_victim(const LabelVector& before, const LabelVector& after,
                                       int victim) {
  int rows = 0;
  const std::vector<int> ca = detail::compact_ids(before.labels, rows);
  int victim_row = -1;
  for (int i = 0; i < before.n(); ++i)
    if (before.labels[i] == victim) {
      victim_row = ca[i];
      break;
    }
  if (victim_row < 0) throw Error("victim cluster id not present in labels");

  const Contingency c = contingency_table(before, after);
  const auto matching = detail::max_agreement_matching(c);
  const int matched_after = matching.match_for_row[victim_row];

  int cols = 0;
  const std::vector<int> cb = detail::compact_ids(after.labels, cols);
  long long missed = 0;
  for (int i = 0; i < before.n(); ++i)
    if (ca[i] == victim_row && cb[i] != matched_after) ++missed;
  return missed;
}

}  // namespace advclust
