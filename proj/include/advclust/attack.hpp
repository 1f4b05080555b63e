#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "advclust/clustering.hpp"
#include "advclust/common.hpp"
#include "advclust/matrix.hpp"
#include "advclust/metrics.hpp"
#include "advclust/rng.hpp"

namespace advclust {

// ---------------------------------------------------------------------------
// Attack space
// ---------------------------------------------------------------------------

/// Capability constraints defining the adversarial attack space: masks with
/// max-norm at most delta (closed ball) whose rows vanish outside the target
/// set. delta may be +inf (unbounded power). The effort bound gamma is always
/// |T| * d, never stored.
struct AttackerConstraints {
  double delta = 1.0;
  std::vector<int> targets;  // sorted ascending, unique
  std::optional<BoxBounds> box;  // data domain; applied to X + eps at evaluation

  long long gamma(int d) const { return static_cast<long long>(targets.size()) * d; }

  void validate(int n) const {
    if (!(delta > 0.0)) throw ConfigError("attacker constraints require delta > 0");
    if (targets.empty()) throw ConfigError("attacker constraints require a non-empty target set");
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] < 0 || targets[i] >= n)
        throw ConfigError("target index out of range: " + std::to_string(targets[i]));
      if (i > 0 && targets[i] <= targets[i - 1])
        throw ConfigError("target indices must be strictly increasing");
    }
    if (box) validate_box(*box);
  }
};

/// Column signs of (target centroid - victim centroid). The paper's psi is an
/// n x d matrix, but its entries do not depend on the row, so one sign per
/// feature represents it exactly.
class DirectionMatrix {
 public:
  DirectionMatrix() = default;
  explicit DirectionMatrix(std::vector<std::int8_t> col_signs) : col_signs_(std::move(col_signs)) {}

  int sign(int j) const { return col_signs_[j]; }
  int dims() const { return static_cast<int>(col_signs_.size()); }

 private:
  std::vector<std::int8_t> col_signs_;
};

/// psi_j = sgn(c_target_j - c_victim_j) with sgn(0) = 0, centroids being the
/// arithmetic means of the members of the two clusters in `labels`.
inline DirectionMatrix direction_matrix(const FeatureMatrix& x, const LabelVector& labels,
                                        int victim, int target) {
  if (labels.n() != x.n) throw Error("labels/matrix length mismatch");
  std::vector<double> cv(x.d, 0.0), ct(x.d, 0.0);
  long long nv = 0, nt = 0;
  for (int i = 0; i < x.n; ++i) {
    if (labels.labels[i] == victim) {
      ++nv;
      for (int j = 0; j < x.d; ++j) cv[j] += x.at(i, j);
    } else if (labels.labels[i] == target) {
      ++nt;
      for (int j = 0; j < x.d; ++j) ct[j] += x.at(i, j);
    }
  }
  if (nv == 0) throw Error("direction matrix: empty victim cluster");
  if (nt == 0) throw Error("direction matrix: empty target cluster");
  std::vector<std::int8_t> signs(x.d);
  for (int j = 0; j < x.d; ++j) {
    const double diff = ct[j] / nt - cv[j] / nv;
    signs[j] = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
  }
  return DirectionMatrix(std::move(signs));
}

/// The `count` victim-cluster samples closest (Euclidean) to the target
/// cluster centroid; ties break to the lower index.
inline std::vector<int> select_targets_count(const FeatureMatrix& x, const LabelVector& labels,
                                             int victim, int target, int count) {
  if (labels.n() != x.n) throw Error("labels/matrix length mismatch");
  std::vector<double> ct(x.d, 0.0);
  long long nt = 0;
  std::vector<int> victims;
  for (int i = 0; i < x.n; ++i) {
    if (labels.labels[i] == target) {
      ++nt;
      for (int j = 0; j < x.d; ++j) ct[j] += x.at(i, j);
    } else if (labels.labels[i] == victim) {
      victims.push_back(i);
    }
  }
  if (victims.empty()) throw Error("select_targets: empty victim cluster");
  if (nt == 0) throw Error("select_targets: empty target cluster");
  if (count < 1 || count > static_cast<int>(victims.size()))
    throw Error("select_targets: count out of range");
  for (double& v : ct) v /= nt;

  std::vector<std::pair<double, int>> order;
  order.reserve(victims.size());
  for (int i : victims)
    order.emplace_back(squared_distance(x.row(i), std::span<const double>(ct)), i);
  std::sort(order.begin(), order.end());

  std::vector<int> t(count);
  for (int i = 0; i < count; ++i) t[i] = order[i].second;
  std::sort(t.begin(), t.end());
  return t;
}

/// T = the ceil(s * |C_victim|) victim samples nearest to the target centroid.
inline std::vector<int> select_targets(const FeatureMatrix& x, const LabelVector& labels,
                                       int victim, int target, double s) {
  if (!(s > 0.0) || s > 1.0) throw Error("select_targets: s must be in (0, 1]");
  long long nv = 0;
  for (int l : labels.labels) nv += (l == victim);
  if (nv == 0) throw Error("select_targets: empty victim cluster");
  const int count = static_cast<int>(std::ceil(s * static_cast<double>(nv)));
  return select_targets_count(x, labels, victim, target, count);
}

// ---------------------------------------------------------------------------
// Adversarial mask
// ---------------------------------------------------------------------------

/// An n x d noise mask stored as the dense block over its target rows; rows
/// outside T are identically zero by construction.
struct AdversarialMask {
  int n = 0;
  int d = 0;
  std::vector<int> targets;
  std::vector<double> block;  // targets.size() * d, row-major

  double& at_block(int t, int j) { return block[static_cast<std::size_t>(t) * d + j]; }
  double at_block(int t, int j) const { return block[static_cast<std::size_t>(t) * d + j]; }

  /// X + eps, optionally clamped to the data-domain box. Clamping happens at
  /// evaluation time only; the stored mask keeps its attack-space semantics.
  FeatureMatrix add_to(const FeatureMatrix& x,
                       const std::optional<BoxBounds>& box = std::nullopt) const {
    FeatureMatrix out = x;
    for (std::size_t t = 0; t < targets.size(); ++t)
      for (int j = 0; j < d; ++j) out.at(targets[t], j) += at_block(static_cast<int>(t), j);
    if (box)
      for (double& v : out.values) v = std::clamp(v, box->lo, box->hi);
    return out;
  }

  FeatureMatrix to_dense() const {
    FeatureMatrix out = make_matrix(n, d, 0.0);
    for (std::size_t t = 0; t < targets.size(); ++t)
      for (int j = 0; j < d; ++j) out.at(targets[t], j) = at_block(static_cast<int>(t), j);
    return out;
  }
};

inline AdversarialMask zero_mask(int n, int d, std::vector<int> targets) {
  AdversarialMask e;
  e.n = n;
  e.d = d;
  e.targets = std::move(targets);
  e.block.assign(e.targets.size() * static_cast<std::size_t>(d), 0.0);
  return e;
}

inline MaskNorms mask_norms(const AdversarialMask& e) { return vector_norms(e.block); }

inline double pe_penalty(const AdversarialMask& e, double lambda) {
  return pe_penalty(mask_norms(e), lambda);
}

/// Membership check for E_{T,delta} (and E'_{T,delta} when psi is given).
/// A violation is a programming error in the operators, not a recoverable
/// state, hence logic_error.
inline void check_mask_constraints(const AdversarialMask& e, const AttackerConstraints& cons,
                                   const DirectionMatrix* psi = nullptr) {
  if (e.targets != cons.targets) throw std::logic_error("mask target set mismatch");
  for (std::size_t t = 0; t < e.targets.size(); ++t) {
    for (int j = 0; j < e.d; ++j) {
      const double v = e.at_block(static_cast<int>(t), j);
      if (!std::isfinite(v)) throw std::logic_error("mask entry is non-finite");
      if (std::abs(v) > cons.delta) throw std::logic_error("mask entry exceeds delta");
      if (psi && v != 0.0) {
        const int s = v > 0.0 ? 1 : -1;
        if (s != psi->sign(j)) throw std::logic_error("mask entry violates the direction sign");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Genetic search
// ---------------------------------------------------------------------------

/// Generation budget and operator probabilities of the growing-population
/// search. `heuristic` switches the sign-restricted space E'_{T,delta} on.
struct GAParams {
  int generations = 100;  // G: also the offspring query budget
  double lambda = 0.0;    // P&E penalty weight
  double p_c = 0.85;      // crossover probability (gate and per-entry swap)
  double p_m = 0.05;      // per-entry mutation probability
  double p_z = 0.001;     // per-entry zero-mutation probability
  std::uint64_t seed = 0;
  bool heuristic = false;
  bool zero_init = false;  // start from the zero mask instead of a random one

  void validate() const {
    if (generations < 1) throw ConfigError("ga requires generations >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("ga requires lambda >= 0");
    for (double p : {p_c, p_m, p_z})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("ga probabilities must be in [0, 1]");
  }
};

struct PopulationEntry {
  AdversarialMask mask;
  double loss = 0.0;
};

/// The ordered archive of every mask ever generated. Nothing is ever removed:
/// selection keeps the whole extended population, so |archive| = g + 1 after
/// generation g.
struct Population {
  std::vector<PopulationEntry> archive;
  std::uint64_t query_count = 0;
};

/// Program (2): phi(C(X), C(X + eps)) + lambda * ||eps||_0 * ||eps||_inf.
/// The baseline partition is computed once by the caller and reused; each
/// call spends exactly one query on C(X + eps). `out_labels`, when given,
/// receives the poisoned partition so callers can reuse it without a second
/// query.
inline double objective(const AdversarialMask& e, const LabelVector& baseline,
                        const Clusterer& c, const FeatureMatrix& x, PhiKind phi, double lambda,
                        QueryCounter& q, const std::optional<BoxBounds>& box = std::nullopt,
                        LabelVector* out_labels = nullptr) {
  const FeatureMatrix poisoned = e.add_to(x, box);
  LabelVector labels = cluster(c, poisoned, q);
  const double value = phi_for_attack(phi, baseline, labels) + pe_penalty(e, lambda);
  if (out_labels) *out_labels = std::move(labels);
  return value;
}

/// Roulette-wheel choice: one archive member sampled with softmax(-loss)
/// probabilities, stabilized by subtracting the best exponent. Every member
/// keeps strictly positive probability (the generous-choice property).
inline std::size_t choice_index(const Population& pop, Rng& rng) {
  if (pop.archive.empty()) throw Error("choice on an empty population");
  double best = -std::numeric_limits<double>::infinity();
  for (const PopulationEntry& p : pop.archive) best = std::max(best, -p.loss);
  std::vector<double> weights(pop.archive.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pop.archive.size(); ++i) {
    weights[i] = std::exp(-pop.archive[i].loss - best);
    total += weights[i];
  }
  const double r = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (cum > r) return i;
  }
  return weights.size() - 1;
}

inline const AdversarialMask& choice(const Population& pop, Rng& rng) {
  return pop.archive[choice_index(pop, rng)].mask;
}

/// Selection probabilities of every archive member under Eq.-(4) softmax;
/// exposed for the audit and for tests.
inline std::vector<double> choice_probabilities(const Population& pop) {
  double best = -std::numeric_limits<double>::infinity();
  for (const PopulationEntry& p : pop.archive) best = std::max(best, -p.loss);
  std::vector<double> w(pop.archive.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pop.archive.size(); ++i) {
    w[i] = std::exp(-pop.archive[i].loss - best);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Entrywise crossover. With probability 1 - p_c the operator does not fire
/// and `a` is returned verbatim; otherwise each entry of the copy of `a` is
/// independently replaced by b's entry with probability p_c.
inline AdversarialMask crossover(const AdversarialMask& a, const AdversarialMask& b, double p_c,
                                 Rng& rng) {
  if (a.targets != b.targets || a.n != b.n || a.d != b.d)
    throw std::logic_error("crossover parents live in different constraint spaces");
  if (!rng.bernoulli(p_c)) return a;
  AdversarialMask out = a;
  for (std::size_t i = 0; i < out.block.size(); ++i)
    if (rng.bernoulli(p_c)) out.block[i] = b.block[i];
  return out;
}

/// Entrywise mutation over the target rows: with probability p_m add
/// U(-range, range) noise, then clip to preserve the space. In the base space
/// the clip is to [-delta, delta]; in the restricted space (heuristic) the
/// noise lands on the entry magnitude, which is clipped to [0, delta] before
/// the psi sign is reapplied. Afterwards each entry is reset to exact zero
/// with probability p_z. `noise_range` is the finite draw range standing in
/// for delta when the constraint is unbounded.
inline AdversarialMask mutation(const AdversarialMask& e, const AttackerConstraints& cons,
                                double p_m, double p_z, Rng& rng, bool heuristic,
                                const DirectionMatrix* psi, double noise_range) {
  if (heuristic && (!psi || psi->dims() != e.d))
    throw std::logic_error("heuristic mutation requires a direction matrix");
  AdversarialMask out = e;
  for (std::size_t t = 0; t < out.targets.size(); ++t) {
    for (int j = 0; j < out.d; ++j) {
      double v = out.at_block(static_cast<int>(t), j);
      if (rng.bernoulli(p_m)) {
        const double noise = rng.uniform(-noise_range, noise_range);
        if (heuristic) {
          const int s = psi->sign(j);
          const double mag = std::clamp(std::abs(v) + noise, 0.0, cons.delta);
          v = s * mag;
        } else {
          v = std::clamp(v + noise, -cons.delta, cons.delta);
        }
      }
      if (rng.bernoulli(p_z)) v = 0.0;
      out.at_block(static_cast<int>(t), j) = v;
    }
  }
  return out;
}

namespace detail {

inline double observed_range(const FeatureMatrix& x) {
  const auto [lo, hi] = std::minmax_element(x.values.begin(), x.values.end());
  const double r = *hi - *lo;
  return r > 0.0 ? r : 1.0;
}

inline AdversarialMask initial_mask(const FeatureMatrix& x, const AttackerConstraints& cons,
                                    const GAParams& params, Rng& rng, const DirectionMatrix* psi,
                                    double noise_range) {
  AdversarialMask e = zero_mask(x.n, x.d, cons.targets);
  if (params.zero_init) return e;
  for (std::size_t t = 0; t < e.targets.size(); ++t) {
    for (int j = 0; j < e.d; ++j) {
      double v;
      if (params.heuristic) {
        v = psi->sign(j) * rng.uniform(0.0, noise_range);
      } else {
        v = rng.uniform(-noise_range, noise_range);
      }
      if (rng.bernoulli(params.p_z)) v = 0.0;  // start sparse
      e.at_block(static_cast<int>(t), j) = v;
    }
  }
  return e;
}

}  // namespace detail

struct AttackResult {
  AdversarialMask best_mask;
  double best_loss = 0.0;
  int best_generation = 0;     // 0 = the initial mask
  LabelVector best_labels;     // C(X + best_mask), no extra query
  std::vector<double> trace;   // best-so-far loss after each generation (length G)
  Population population;
};

/// The black-box poisoning loop. Starting from a random mask in the attack
/// space, each generation produces exactly one offspring:
///
///   donor  = roulette choice over the archive
///   child  = mutation(crossover(most recent member, donor))
///
/// and appends it to the archive. Returns the archive argmin (ties: earliest
/// generation). Queries spent: 1 for the initial mask plus G offspring, plus
/// 1 for the baseline when it is not supplied.
inline AttackResult attack(const FeatureMatrix& x, const Clusterer& c,
                           const AttackerConstraints& cons, const GAParams& params, PhiKind phi,
                           QueryCounter& q, const DirectionMatrix* psi = nullptr,
                           const LabelVector* baseline = nullptr) {
  cons.validate(x.n);
  params.validate();
  if (params.heuristic && (!psi || psi->dims() != x.d))
    throw ConfigError("heuristic attack requires a direction matrix over d features");

  const double noise_range = std::isfinite(cons.delta)
                                 ? cons.delta
                                 : (cons.box ? cons.box->hi - cons.box->lo
                                             : detail::observed_range(x));

  const std::uint64_t q_start = q.count();
  LabelVector base = baseline ? *baseline : cluster(c, x, q);

  Rng rng(params.seed);
  const DirectionMatrix* dir = params.heuristic ? psi : nullptr;

  AttackResult result;
  Population& pop = result.population;

  AdversarialMask e0 = detail::initial_mask(x, cons, params, rng, dir, noise_range);
  check_mask_constraints(e0, cons, dir);
  LabelVector labels;
  double loss = objective(e0, base, c, x, phi, params.lambda, q, cons.box, &labels);
  pop.archive.push_back({std::move(e0), loss});
  result.best_loss = loss;
  result.best_generation = 0;
  result.best_labels = std::move(labels);

  result.trace.reserve(params.generations);
  for (int g = 0; g < params.generations; ++g) {
    const std::size_t donor = choice_index(pop, rng);
    AdversarialMask child =
        crossover(pop.archive.back().mask, pop.archive[donor].mask, params.p_c, rng);
    child = mutation(child, cons, params.p_m, params.p_z, rng, params.heuristic, dir, noise_range);
    check_mask_constraints(child, cons, dir);

    loss = objective(child, base, c, x, phi, params.lambda, q, cons.box, &labels);
    pop.archive.push_back({std::move(child), loss});
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.best_generation = g + 1;
      result.best_labels = std::move(labels);
    }
    result.trace.push_back(result.best_loss);
  }

  result.best_mask = pop.archive[result.best_generation].mask;
  pop.query_count = q.count() - q_start;
  return result;
}

// ---------------------------------------------------------------------------
// AGA convergence-condition audit
// ---------------------------------------------------------------------------

struct AgaCondition {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct AgaReport {
  std::vector<AgaCondition> conditions;
  bool all_pass = true;
};

/// Checks the configured run against the hypotheses of the almost-sure
/// convergence theorem for the abstract genetic algorithm: connective
/// neighborhood (mutation support covers the whole space), generous choice
/// (softmax positivity), generous production, and generous + conservative
/// selection (the archive only ever grows). Report only; never throws.
inline AgaReport aga_condition_audit(const GAParams& params, const AttackerConstraints& cons) {
  AgaReport r;
  auto add = [&](std::string name, bool pass, std::string detail) {
    r.conditions.push_back({std::move(name), pass, std::move(detail)});
    r.all_pass = r.all_pass && pass;
  };

  const bool connective = params.p_m > 0.0 && cons.delta > 0.0;
  add("connective neighborhood", connective,
      connective ? "mutation support covers the attack space"
                 : (params.p_m <= 0.0 ? "violated: p_m = 0 gives the mutation empty support"
                                      : "violated: delta = 0 collapses the attack space"));
  add("generous choice", true,
      "softmax selection assigns strictly positive probability to every archive member");
  add("generous production", connective,
      connective ? "crossover+mutation reach every neighbor (see connective neighborhood)"
                 : "violated: production support collapses with the mutation's");
  add("generous selection", true, "all candidates survive with probability 1 (archive-only growth)");
  add("conservative selection", true, "the archive retains its loss minimizer");
  return r;
}

}  // namespace advclust
