#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "advclust/common.hpp"
#include "advclust/matrix.hpp"
#include "advclust/metrics.hpp"
#include "advclust/rng.hpp"

namespace advclust {

enum class ClusterAlgo { kmeanspp, ward, spectral, ensemble };
enum class SimilarityKind { self_tuning, cosine, pearson_sparsified, max_minus_euclidean };

/// A victim clustering algorithm. A Clusterer is a pure function of
/// (configuration, seed, input matrix): identical inputs give identical
/// labels, which is what makes attack runs reproducible.
struct Clusterer {
  ClusterAlgo kind = ClusterAlgo::kmeanspp;
  int k = 2;
  SimilarityKind similarity = SimilarityKind::self_tuning;  // spectral only
  std::vector<Clusterer> members;                           // ensemble only
  std::uint64_t seed = 0;
};

inline void validate_clusterer(const Clusterer& c) {
  if (c.k < 1) throw ConfigError("clusterer requires k >= 1");
  if (c.kind == ClusterAlgo::ensemble) {
    if (c.members.empty()) throw ConfigError("ensemble requires at least one member");
    for (const Clusterer& m : c.members) {
      if (m.kind == ClusterAlgo::ensemble) throw ConfigError("nested ensembles are not supported");
      validate_clusterer(m);
    }
  }
}

/// Counts cluster-assignment queries spent against the victim. One call to
/// cluster() is one query, ensembles included. Atomic so parallel sweep jobs
/// can share a counter.
class QueryCounter {
 public:
  void increment() { count_.fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t count() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

// ---------------------------------------------------------------------------
// K-means++
// ---------------------------------------------------------------------------

struct KMeansDiagnostics {
  std::vector<double> sse_per_iteration;  // after each Lloyd iteration
  int iterations = 0;
};

namespace detail {

constexpr int kLloydCap = 300;

inline std::vector<double> kmeanspp_seed_centers(const FeatureMatrix& m, int k, Rng& rng) {
  const int n = m.n, d = m.d;
  std::vector<double> centers(static_cast<std::size_t>(k) * d);
  auto center = [&](int c) {
    return std::span<double>(centers.data() + static_cast<std::size_t>(c) * d,
                             static_cast<std::size_t>(d));
  };

  const int first = static_cast<int>(rng.uniform_int(n));
  std::copy_n(m.row(first).data(), d, center(0).data());

  std::vector<double> dist2(n);
  for (int i = 0; i < n; ++i) dist2[i] = squared_distance(m.row(i), center(0));

  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.uniform_int(n));
    } else {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        cum += dist2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
    }
    std::copy_n(m.row(pick).data(), d, center(c).data());
    for (int i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], squared_distance(m.row(i), center(c)));
  }
  return centers;
}

}  // namespace detail

/// Lloyd iterations from D^2-weighted seeding until the assignment reaches a
/// fixpoint (or 300 iterations). Ties keep the current assignment; empty
/// clusters are reseeded at the point farthest from its own centroid. The
/// within-cluster SSE recorded in the diagnostics never increases.
inline LabelVector kmeanspp(const FeatureMatrix& m, int k, std::uint64_t seed,
                            KMeansDiagnostics* diag = nullptr) {
  const int n = m.n, d = m.d;
  if (k < 1) throw Error("kmeanspp requires k >= 1");
  if (k > n) throw Error("kmeanspp requires k <= n");
  if (k == n) {
    std::vector<int> singleton(n);
    std::iota(singleton.begin(), singleton.end(), 0);
    return LabelVector{std::move(singleton)};
  }

  Rng rng(seed);
  std::vector<double> centers = detail::kmeanspp_seed_centers(m, k, rng);
  auto center = [&](int c) {
    return std::span<const double>(centers.data() + static_cast<std::size_t>(c) * d,
                                   static_cast<std::size_t>(d));
  };

  std::vector<int> labels(n, -1);
  std::vector<long long> counts(k);

  for (int iter = 0; iter < detail::kLloydCap; ++iter) {
    bool changed = false;

    // Assignment; on ties the current cluster is kept so repaired singleton
    // clusters do not oscillate.
    for (int i = 0; i < n; ++i) {
      int best = labels[i];
      double best_d = best >= 0 ? squared_distance(m.row(i), center(best))
                                : std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        if (c == best) continue;
        const double dd = squared_distance(m.row(i), center(c));
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (best != labels[i]) {
        labels[i] = best;
        changed = true;
      }
    }

    // Empty-cluster repair: reseed at the point farthest from its centroid.
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) ++counts[labels[i]];
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;  // do not empty another cluster
        const double dd = squared_distance(m.row(i), center(labels[i]));
        if (dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      if (far < 0) throw Error("kmeanspp: unable to repair empty cluster");
      --counts[labels[far]];
      labels[far] = c;
      ++counts[c];
      std::copy_n(m.row(far).data(), d, centers.begin() + static_cast<std::size_t>(c) * d);
      changed = true;
    }

    if (!changed) break;

    // Means update.
    std::fill(centers.begin(), centers.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) centers[static_cast<std::size_t>(labels[i]) * d + j] += m.at(i, j);
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < d; ++j) centers[static_cast<std::size_t>(c) * d + j] /= counts[c];

    if (diag) {
      double sse = 0.0;
      for (int i = 0; i < n; ++i) sse += squared_distance(m.row(i), center(labels[i]));
      diag->sse_per_iteration.push_back(sse);
      diag->iterations = iter + 1;
    }
  }
  return LabelVector{std::move(labels)};
}

// ---------------------------------------------------------------------------
// Ward agglomerative clustering
// ---------------------------------------------------------------------------

/// Greedy agglomerative merging under the Lance-Williams Ward update, cut at
/// k clusters. Deterministic: equal merge costs break to the lowest (i, j)
/// pair of active cluster ids. Quadratic memory; intended for desk-scale n.
inline LabelVector ward(const FeatureMatrix& m, int k) {
  const int n = m.n;
  if (k < 1) throw Error("ward requires k >= 1");
  if (k > n) throw Error("ward requires k <= n");

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);

  if (k < n) {
    // D starts as squared Euclidean distances, which makes the Lance-Williams
    // Ward recurrence exact (values are twice the variance increase).
    std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
    auto at = [&](int i, int j) -> double& { return dist[static_cast<std::size_t>(i) * n + j]; };
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) at(i, j) = at(j, i) = squared_distance(m.row(i), m.row(j));

    std::vector<char> active(n, 1);
    std::vector<double> size(n, 1.0);

    for (int merge = 0; merge < n - k; ++merge) {
      int bi = -1, bj = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        if (!active[i]) continue;
        for (int j = i + 1; j < n; ++j) {
          if (!active[j]) continue;
          if (at(i, j) < best) {
            best = at(i, j);
            bi = i;
            bj = j;
          }
        }
      }
      const double si = size[bi], sj = size[bj], dij = at(bi, bj);
      for (int t = 0; t < n; ++t) {
        if (!active[t] || t == bi || t == bj) continue;
        const double st = size[t];
        at(bi, t) = at(t, bi) =
            ((si + st) * at(bi, t) + (sj + st) * at(bj, t) - st * dij) / (si + sj + st);
      }
      size[bi] += size[bj];
      active[bj] = 0;
      parent[bj] = bi;
    }
  }

  auto root = [&](int i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  std::vector<int> compact(n, -1);
  std::vector<int> labels(n);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int r = root(i);
    if (compact[r] < 0) compact[r] = next++;
    labels[i] = compact[r];
  }
  return LabelVector{std::move(labels)};
}

// ---------------------------------------------------------------------------
// Similarity measures and spectral clustering
// ---------------------------------------------------------------------------

/// Pairwise similarity matrix (n x n, symmetric). Kinds:
///   self_tuning          exp(-d_ij^2 / (sigma_i sigma_j)), sigma_i = distance
///                        to the 7th nearest neighbor
///   cosine               x_i . x_j / (|x_i| |x_j|)
///   pearson_sparsified   correlation around the sample mean, negatives
///                        clamped to 0
///   max_minus_euclidean  d_max - d_ij
inline FeatureMatrix similarity_matrix(const FeatureMatrix& m, SimilarityKind kind) {
  const int n = m.n, d = m.d;
  FeatureMatrix s = make_matrix(n, n, 0.0);

  switch (kind) {
    case SimilarityKind::cosine: {
      std::vector<double> norm(n);
      for (int i = 0; i < n; ++i) {
        norm[i] = lp_norm(m.row(i), 2.0);
        if (norm[i] == 0.0)
          throw Error("cosine similarity undefined: zero-norm row " + std::to_string(i + 1));
      }
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          double dot = 0.0;
          for (int t = 0; t < d; ++t) dot += m.at(i, t) * m.at(j, t);
          s.at(i, j) = s.at(j, i) = dot / (norm[i] * norm[j]);
        }
      break;
    }
    case SimilarityKind::pearson_sparsified: {
      std::vector<double> mean(d, 0.0);
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < d; ++t) mean[t] += m.at(i, t);
      for (double& v : mean) v /= n;
      FeatureMatrix centered = m;
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < d; ++t) centered.at(i, t) -= mean[t];
      std::vector<double> norm(n);
      for (int i = 0; i < n; ++i) {
        norm[i] = lp_norm(centered.row(i), 2.0);
        if (norm[i] == 0.0)
          throw Error("pearson similarity undefined: centered row " + std::to_string(i + 1) +
                      " has zero norm");
      }
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          double dot = 0.0;
          for (int t = 0; t < d; ++t) dot += centered.at(i, t) * centered.at(j, t);
          s.at(i, j) = s.at(j, i) = std::max(0.0, dot / (norm[i] * norm[j]));
        }
      break;
    }
    case SimilarityKind::max_minus_euclidean: {
      double dmax = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          dmax = std::max(dmax, euclidean_distance(m.row(i), m.row(j)));
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
          s.at(i, j) = s.at(j, i) = dmax - euclidean_distance(m.row(i), m.row(j));
      break;
    }
    case SimilarityKind::self_tuning: {
      // Local scale: distance to the 7th nearest neighbor (Zelnik-Manor and
      // Perona's convention), capped at n - 1 neighbors.
      const int kth = std::min(7, n - 1);
      std::vector<double> sigma(n, 1.0);
      if (kth >= 1) {
        std::vector<double> drow(n);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) drow[j] = euclidean_distance(m.row(i), m.row(j));
          drow[i] = std::numeric_limits<double>::infinity();
          std::nth_element(drow.begin(), drow.begin() + (kth - 1), drow.end());
          sigma[i] = drow[kth - 1];
        }
      }
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          const double d2 = squared_distance(m.row(i), m.row(j));
          const double ss = sigma[i] * sigma[j];
          double v;
          if (ss > 0.0)
            v = std::exp(-d2 / ss);
          else
            v = d2 == 0.0 ? 1.0 : 0.0;  // duplicate-heavy data: sigma collapses
          s.at(i, j) = s.at(j, i) = v;
        }
      break;
    }
  }
  return s;
}

/// Normalized spectral clustering: symmetric-normalized Laplacian, rows of
/// the K bottom eigenvectors renormalized, then k-means++ in the embedded
/// space. Randomized only through that final k-means++ stage.
inline LabelVector spectral(const FeatureMatrix& m, int k, SimilarityKind kind,
                            std::uint64_t seed) {
  const int n = m.n;
  if (k < 1) throw Error("spectral requires k >= 1");
  if (k > n) throw Error("spectral requires k <= n");
  if (n == 1) return LabelVector{{0}};

  const FeatureMatrix w = similarity_matrix(m, kind);

  Eigen::MatrixXd W(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) W(i, j) = w.at(i, j);

  Eigen::VectorXd deg = W.rowwise().sum();
  for (int i = 0; i < n; ++i)
    if (!(deg(i) > 0.0))
      throw Error("spectral clustering: non-positive degree at row " + std::to_string(i + 1));

  const Eigen::VectorXd dinv_sqrt = deg.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n) -
                      dinv_sqrt.asDiagonal() * W * dinv_sqrt.asDiagonal();
  L = 0.5 * (L + L.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
  if (es.info() != Eigen::Success) throw Error("spectral clustering: eigensolver failed");

  FeatureMatrix embedding = make_matrix(n, k, 0.0);
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int j = 0; j < k; ++j) norm += es.eigenvectors()(i, j) * es.eigenvectors()(i, j);
    norm = std::sqrt(norm);
    for (int j = 0; j < k; ++j)
      embedding.at(i, j) = norm > 0.0 ? es.eigenvectors()(i, j) / norm : 0.0;
  }
  return kmeanspp(embedding, k, seed);
}

// ---------------------------------------------------------------------------
// Silhouette ensemble
// ---------------------------------------------------------------------------

struct EnsembleReport {
  int chosen = -1;
  std::vector<double> silhouettes;  // NaN for skipped members
  std::vector<int> skipped;         // members whose output had a single cluster
};

inline LabelVector cluster_once(const Clusterer& c, const FeatureMatrix& m);

/// Runs every member and returns the partition with the maximum silhouette.
/// Ties break to the earliest member. Members that collapse to one cluster
/// are skipped (silhouette undefined); if all collapse, this is an error.
inline LabelVector ensemble_best(std::span<const Clusterer> members, const FeatureMatrix& m,
                                 std::uint64_t seed, EnsembleReport* report = nullptr) {
  if (members.empty()) throw Error("ensemble requires at least one member");

  EnsembleReport local;
  LabelVector best_labels;
  double best_score = -std::numeric_limits<double>::infinity();
  int chosen = -1;

  for (std::size_t i = 0; i < members.size(); ++i) {
    Clusterer member = members[i];
    member.seed = derive_seed(seed, "member/" + std::to_string(i)) ^ member.seed;
    LabelVector labels = cluster_once(member, m);
    double score;
    if (labels.k() < 2 && m.n > 1) {
      local.skipped.push_back(static_cast<int>(i));
      local.silhouettes.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    score = m.n > 1 ? silhouette(m, labels) : 0.0;
    local.silhouettes.push_back(score);
    if (score > best_score) {
      best_score = score;
      best_labels = std::move(labels);
      chosen = static_cast<int>(i);
    }
  }
  if (chosen < 0) throw Error("all ensemble members produced a single cluster");
  local.chosen = chosen;
  if (report) *report = std::move(local);
  return best_labels;
}

// ---------------------------------------------------------------------------
// The opaque "query the clusterer" interface
// ---------------------------------------------------------------------------

inline LabelVector cluster_once(const Clusterer& c, const FeatureMatrix& m) {
  if (m.n < c.k) throw Error("cluster: requested k exceeds sample count");
  switch (c.kind) {
    case ClusterAlgo::kmeanspp: return kmeanspp(m, c.k, c.seed);
    case ClusterAlgo::ward: return ward(m, c.k);
    case ClusterAlgo::spectral: return spectral(m, c.k, c.similarity, c.seed);
    case ClusterAlgo::ensemble: return ensemble_best(c.members, m, c.seed);
  }
  throw Error("unknown clusterer kind");
}

/// One black-box query: returns the partition of `m` and increments the query
/// counter by exactly 1 (an ensemble counts as one query).
inline LabelVector cluster(const Clusterer& c, const FeatureMatrix& m, QueryCounter& q) {
  q.increment();
  return cluster_once(c, m);
}

}  // namespace advclust
