#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "advclust/attack.hpp"
#include "advclust/clustering.hpp"
#include "advclust/common.hpp"
#include "advclust/io.hpp"
#include "advclust/matrix.hpp"
#include "advclust/metrics.hpp"
#include "advclust/rng.hpp"

namespace advclust {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Isotropic Gaussian blobs, one per center, `per_center` samples each.
/// Normal deviates come from Box-Muller over the deterministic Rng so the
/// dataset is reproducible across platforms.
inline FeatureMatrix make_blobs(const std::vector<std::vector<double>>& centers, double stddev,
                                int per_center, std::uint64_t seed,
                                LabelVector* truth = nullptr) {
  if (centers.empty() || per_center < 1) throw Error("make_blobs: empty spec");
  const int d = static_cast<int>(centers.front().size());
  const int n = static_cast<int>(centers.size()) * per_center;
  FeatureMatrix m = make_matrix(n, d, 0.0);
  std::vector<int> labels(n);
  Rng rng(seed);

  bool have_spare = false;
  double spare = 0.0;
  auto gauss = [&]() {
    if (have_spare) {
      have_spare = false;
      return spare;
    }
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare = r * std::sin(kTwoPi * u2);
    have_spare = true;
    return r * std::cos(kTwoPi * u2);
  };

  int row = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (static_cast<int>(centers[c].size()) != d) throw Error("make_blobs: ragged centers");
    for (int i = 0; i < per_center; ++i, ++row) {
      labels[row] = static_cast<int>(c);
      for (int j = 0; j < d; ++j) m.at(row, j) = centers[c][j] + stddev * gauss();
    }
  }
  if (truth) *truth = LabelVector{std::move(labels)};
  return m;
}

// ---------------------------------------------------------------------------
// Enum <-> name plumbing
// ---------------------------------------------------------------------------

inline PhiKind parse_phi(const std::string& s) {
  if (s == "ami") return PhiKind::ami;
  if (s == "ari") return PhiKind::ari;
  if (s == "frob") return PhiKind::frob;
  throw ConfigError("unknown phi kind: " + s + " (expected ami|ari|frob)");
}

inline const char* similarity_name(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::self_tuning: return "self-tuning";
    case SimilarityKind::cosine: return "cosine";
    case SimilarityKind::pearson_sparsified: return "pearson-sparsified";
    case SimilarityKind::max_minus_euclidean: return "max-minus-euclidean";
  }
  return "?";
}

inline SimilarityKind parse_similarity(const std::string& s) {
  if (s == "self-tuning") return SimilarityKind::self_tuning;
  if (s == "cosine") return SimilarityKind::cosine;
  if (s == "pearson-sparsified") return SimilarityKind::pearson_sparsified;
  if (s == "max-minus-euclidean") return SimilarityKind::max_minus_euclidean;
  throw ConfigError("unknown similarity: " + s);
}

inline const char* algo_name(ClusterAlgo a) {
  switch (a) {
    case ClusterAlgo::kmeanspp: return "kmeanspp";
    case ClusterAlgo::ward: return "ward";
    case ClusterAlgo::spectral: return "spectral";
    case ClusterAlgo::ensemble: return "ensemble";
  }
  return "?";
}

inline std::string clusterer_name(const Clusterer& c) {
  if (c.kind == ClusterAlgo::spectral)
    return std::string("spectral:") + similarity_name(c.similarity);
  return algo_name(c.kind);
}

inline TextFormat parse_format(const std::string& s) {
  if (s == "csv") return TextFormat::csv;
  if (s == "tsv") return TextFormat::tsv;
  throw ConfigError("unknown text format: " + s + " (expected csv|tsv)");
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string dataset_path;
  TextFormat format = TextFormat::csv;
  std::optional<std::string> labels_path;

  Clusterer clusterer;
  std::vector<Clusterer> clusterers;  // convergence runs; empty means {clusterer}

  // Victim/target selection: by ground-truth class (requires labels) or by
  // baseline cluster id.
  std::optional<int> victim_class, target_class;
  std::optional<int> victim_cluster, target_cluster;

  std::vector<double> s_grid;   // fractions in (0, 1]
  std::optional<int> t_count;   // explicit |T|; spill-over uses 1

  std::vector<double> delta_grid;  // entries > 0, +inf allowed

  PhiKind phi = PhiKind::ami;
  GAParams ga;                            // seed field unused; runs derive their own
  std::optional<double> lambda_alpha;     // lambda = 1 / (alpha * n * d) when set

  std::optional<BoxBounds> box;
  int repetitions = 1;
  std::uint64_t master_seed = 0;
  std::string out_dir = "out";

  double effective_lambda(int n, int d) const {
    if (lambda_alpha)
      return 1.0 / (*lambda_alpha * static_cast<double>(n) * static_cast<double>(d));
    return ga.lambda;
  }
};

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("config error at dataset: missing path");
  if (!std::filesystem::exists(cfg.dataset_path))
    throw ConfigError("config error at dataset: file not found: " + cfg.dataset_path);
  if (cfg.labels_path && !std::filesystem::exists(*cfg.labels_path))
    throw ConfigError("config error at labels: file not found: " + *cfg.labels_path);
  validate_clusterer(cfg.clusterer);
  for (const Clusterer& c : cfg.clusterers) validate_clusterer(c);

  const bool by_class = cfg.victim_class || cfg.target_class;
  const bool by_cluster = cfg.victim_cluster || cfg.target_cluster;
  if (by_class && by_cluster)
    throw ConfigError("config error: specify victim/target by class or by cluster, not both");
  if (by_class && (!cfg.victim_class || !cfg.target_class))
    throw ConfigError("config error: victim_class and target_class must both be set");
  if (by_cluster && (!cfg.victim_cluster || !cfg.target_cluster))
    throw ConfigError("config error: victim_cluster and target_cluster must both be set");
  if (!by_class && !by_cluster)
    throw ConfigError("config error: victim/target selection is required");
  if (by_class && !cfg.labels_path)
    throw ConfigError("config error at labels: class-based selection requires a label file");

  if (cfg.s_grid.empty() && !cfg.t_count)
    throw ConfigError("config error at s: either s/s_grid or t_count is required");
  if (!cfg.s_grid.empty() && cfg.t_count)
    throw ConfigError("config error at s: s and t_count are mutually exclusive");
  for (double s : cfg.s_grid)
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("config error at s: values must be in (0, 1]");
  if (cfg.t_count && *cfg.t_count < 1)
    throw ConfigError("config error at t_count: must be >= 1");

  if (cfg.delta_grid.empty()) throw ConfigError("config error at delta: grid must be non-empty");
  for (double dl : cfg.delta_grid)
    if (!(dl > 0.0)) throw ConfigError("config error at delta: values must be > 0");

  if (cfg.repetitions < 1) throw ConfigError("config error at repetitions: must be >= 1");
  if (cfg.lambda_alpha && !(*cfg.lambda_alpha > 0.0))
    throw ConfigError("config error at ga.lambda_alpha: must be > 0");
  cfg.ga.validate();
  if (cfg.box) validate_box(*cfg.box);
}

// ---------------------------------------------------------------------------
// JSON config parsing
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_delta_value(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError("config error at " + path + ": expected a positive number or \"inf\"");
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError("config error at " + path + ": missing field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config error at " + path + ": wrong type");
  }
}

template <typename T>
T get_field_or(const json& j, const char* key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config error at " + path + ": wrong type");
  }
}

}  // namespace detail

inline Clusterer parse_clusterer(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config error at " + path + ": expected an object");
  Clusterer c;
  const std::string kind = detail::get_field<std::string>(j, "kind", path + ".kind");
  if (kind == "kmeanspp")
    c.kind = ClusterAlgo::kmeanspp;
  else if (kind == "ward")
    c.kind = ClusterAlgo::ward;
  else if (kind == "spectral")
    c.kind = ClusterAlgo::spectral;
  else if (kind == "ensemble")
    c.kind = ClusterAlgo::ensemble;
  else
    throw ConfigError("config error at " + path + ".kind: unknown kind " + kind);

  c.k = detail::get_field_or<int>(j, "k", path + ".k", 2);
  c.seed = detail::get_field_or<std::uint64_t>(j, "seed", path + ".seed", 0);
  if (j.contains("similarity"))
    c.similarity = parse_similarity(detail::get_field<std::string>(j, "similarity", path + ".similarity"));

  if (c.kind == ClusterAlgo::ensemble) {
    if (j.contains("members")) {
      const json& members = j.at("members");
      if (!members.is_array())
        throw ConfigError("config error at " + path + ".members: expected an array");
      for (std::size_t i = 0; i < members.size(); ++i)
        c.members.push_back(
            parse_clusterer(members[i], path + ".members[" + std::to_string(i) + "]"));
    } else if (j.contains("template")) {
      // Shorthand for "count instances of the same algorithm with random
      // initializations": the member streams are separated by the ensemble.
      const int count = detail::get_field<int>(j, "count", path + ".count");
      if (count < 1) throw ConfigError("config error at " + path + ".count: must be >= 1");
      const Clusterer tmpl = parse_clusterer(j.at("template"), path + ".template");
      c.members.assign(count, tmpl);
      if (c.k == 2 && tmpl.k != 2) c.k = tmpl.k;
    } else {
      throw ConfigError("config error at " + path + ": ensemble needs members or template+count");
    }
  }
  return c;
}

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config error: top level must be an object");
  ExperimentConfig cfg;
  cfg.dataset_path = detail::get_field<std::string>(j, "dataset", "dataset");
  cfg.format = parse_format(detail::get_field_or<std::string>(j, "format", "format", "csv"));
  if (j.contains("labels")) cfg.labels_path = detail::get_field<std::string>(j, "labels", "labels");

  if (j.contains("clusterer")) cfg.clusterer = parse_clusterer(j.at("clusterer"), "clusterer");
  if (j.contains("clusterers")) {
    const json& arr = j.at("clusterers");
    if (!arr.is_array()) throw ConfigError("config error at clusterers: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      cfg.clusterers.push_back(parse_clusterer(arr[i], "clusterers[" + std::to_string(i) + "]"));
    if (!cfg.clusterers.empty() && !j.contains("clusterer")) cfg.clusterer = cfg.clusterers.front();
  }

  if (j.contains("victim_class")) cfg.victim_class = detail::get_field<int>(j, "victim_class", "victim_class");
  if (j.contains("target_class")) cfg.target_class = detail::get_field<int>(j, "target_class", "target_class");
  if (j.contains("victim_cluster")) cfg.victim_cluster = detail::get_field<int>(j, "victim_cluster", "victim_cluster");
  if (j.contains("target_cluster")) cfg.target_cluster = detail::get_field<int>(j, "target_cluster", "target_cluster");

  if (j.contains("s")) cfg.s_grid = {detail::get_field<double>(j, "s", "s")};
  if (j.contains("s_grid")) cfg.s_grid = detail::get_field<std::vector<double>>(j, "s_grid", "s_grid");
  if (j.contains("t_count")) cfg.t_count = detail::get_field<int>(j, "t_count", "t_count");

  if (j.contains("delta")) cfg.delta_grid = {detail::parse_delta_value(j.at("delta"), "delta")};
  if (j.contains("delta_grid")) {
    const json& arr = j.at("delta_grid");
    if (!arr.is_array()) throw ConfigError("config error at delta_grid: expected an array");
    cfg.delta_grid.clear();
    for (std::size_t i = 0; i < arr.size(); ++i)
      cfg.delta_grid.push_back(
          detail::parse_delta_value(arr[i], "delta_grid[" + std::to_string(i) + "]"));
  }

  if (j.contains("phi")) cfg.phi = parse_phi(detail::get_field<std::string>(j, "phi", "phi"));

  if (j.contains("ga")) {
    const json& g = j.at("ga");
    cfg.ga.generations = detail::get_field_or<int>(g, "generations", "ga.generations", cfg.ga.generations);
    cfg.ga.lambda = detail::get_field_or<double>(g, "lambda", "ga.lambda", cfg.ga.lambda);
    cfg.ga.p_c = detail::get_field_or<double>(g, "p_c", "ga.p_c", cfg.ga.p_c);
    cfg.ga.p_m = detail::get_field_or<double>(g, "p_m", "ga.p_m", cfg.ga.p_m);
    cfg.ga.p_z = detail::get_field_or<double>(g, "p_z", "ga.p_z", cfg.ga.p_z);
    cfg.ga.heuristic = detail::get_field_or<bool>(g, "heuristic", "ga.heuristic", cfg.ga.heuristic);
    cfg.ga.zero_init = detail::get_field_or<bool>(g, "zero_init", "ga.zero_init", cfg.ga.zero_init);
    if (g.contains("lambda_alpha"))
      cfg.lambda_alpha = detail::get_field<double>(g, "lambda_alpha", "ga.lambda_alpha");
  }

  if (j.contains("box")) {
    const json& b = j.at("box");
    cfg.box = BoxBounds{detail::get_field<double>(b, "lo", "box.lo"),
                        detail::get_field<double>(b, "hi", "box.hi")};
  }

  cfg.repetitions = detail::get_field_or<int>(j, "repetitions", "repetitions", 1);
  cfg.master_seed = detail::get_field_or<std::uint64_t>(j, "seed", "seed", 0);
  cfg.out_dir = detail::get_field_or<std::string>(j, "out", "out", "out");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ConfigError("config parse error in " + path + ": " + ex.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Canonical config hash
// ---------------------------------------------------------------------------

namespace detail {

inline json clusterer_to_json(const Clusterer& c) {
  json j;
  j["kind"] = algo_name(c.kind);
  j["k"] = c.k;
  j["seed"] = c.seed;
  if (c.kind == ClusterAlgo::spectral) j["similarity"] = similarity_name(c.similarity);
  if (c.kind == ClusterAlgo::ensemble) {
    json members = json::array();
    for (const Clusterer& m : c.members) members.push_back(clusterer_to_json(m));
    j["members"] = members;
  }
  return j;
}

inline json delta_to_json(double delta) {
  if (std::isinf(delta)) return "inf";
  return delta;
}

}  // namespace detail

/// Canonical JSON of the semantic config fields. The master seed and output
/// directory are excluded: they identify a run, not an experiment. nlohmann
/// objects serialize with sorted keys, so the dump is key-order insensitive.
inline json semantic_config_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = cfg.dataset_path;
  j["format"] = cfg.format == TextFormat::csv ? "csv" : "tsv";
  if (cfg.labels_path) j["labels"] = *cfg.labels_path;
  j["clusterer"] = detail::clusterer_to_json(cfg.clusterer);
  if (!cfg.clusterers.empty()) {
    json arr = json::array();
    for (const Clusterer& c : cfg.clusterers) arr.push_back(detail::clusterer_to_json(c));
    j["clusterers"] = arr;
  }
  if (cfg.victim_class) j["victim_class"] = *cfg.victim_class;
  if (cfg.target_class) j["target_class"] = *cfg.target_class;
  if (cfg.victim_cluster) j["victim_cluster"] = *cfg.victim_cluster;
  if (cfg.target_cluster) j["target_cluster"] = *cfg.target_cluster;
  if (!cfg.s_grid.empty()) j["s_grid"] = cfg.s_grid;
  if (cfg.t_count) j["t_count"] = *cfg.t_count;
  json deltas = json::array();
  for (double dl : cfg.delta_grid) deltas.push_back(detail::delta_to_json(dl));
  j["delta_grid"] = deltas;
  j["phi"] = phi_name(cfg.phi);
  j["ga"] = {{"generations", cfg.ga.generations}, {"lambda", cfg.ga.lambda},
             {"p_c", cfg.ga.p_c},                 {"p_m", cfg.ga.p_m},
             {"p_z", cfg.ga.p_z},                 {"heuristic", cfg.ga.heuristic},
             {"zero_init", cfg.ga.zero_init}};
  if (cfg.lambda_alpha) j["lambda_alpha"] = *cfg.lambda_alpha;
  if (cfg.box) j["box"] = {{"lo", cfg.box->lo}, {"hi", cfg.box->hi}};
  j["repetitions"] = cfg.repetitions;
  return j;
}

inline std::string config_hash_hex(const ExperimentConfig& cfg) {
  const std::uint64_t h = fnv1a64(semantic_config_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Single attack run
// ---------------------------------------------------------------------------

struct Workspace {
  FeatureMatrix x;
  std::optional<LabelVector> truth;
};

inline Workspace load_workspace(const ExperimentConfig& cfg) {
  Workspace ws;
  ws.x = load_matrix(cfg.dataset_path, cfg.format);
  ensure_finite(ws.x);
  if (cfg.labels_path) {
    ws.truth = load_labels(*cfg.labels_path);
    if (ws.truth->n() != ws.x.n)
      throw ConfigError("config error at labels: length " + std::to_string(ws.truth->n()) +
                        " does not match dataset rows " + std::to_string(ws.x.n));
  }
  return ws;
}

struct Cell {
  std::optional<double> s;
  std::optional<int> t_count;
  double delta = 1.0;
  PhiKind phi = PhiKind::ami;
  Clusterer clusterer;
};

struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string clusterer;
  std::string phi;
  std::optional<double> s;
  std::optional<int> t_count;
  double delta = 0.0;
  std::vector<double> trace;
  MaskNorms norms;
  long long miss_clustered = 0;
  double final_ami = 0.0, final_ari = 0.0, final_frob = 0.0;
  std::uint64_t query_count = 0;
  double wall_time_sec = 0.0;
};

struct RunOutput {
  RunRecord record;
  AttackResult result;
  LabelVector baseline;
};

namespace detail {

/// The baseline cluster with maximum overlap with a ground-truth class
/// (ties: lowest cluster id).
inline int cluster_for_class(const LabelVector& truth, const LabelVector& baseline, int cls) {
  std::map<int, long long> overlap;
  for (int i = 0; i < truth.n(); ++i)
    if (truth.labels[i] == cls) ++overlap[baseline.labels[i]];
  if (overlap.empty()) throw Error("class " + std::to_string(cls) + " not present in labels");
  int best_id = -1;
  long long best = -1;
  for (const auto& [id, count] : overlap)
    if (count > best) {
      best = count;
      best_id = id;
    }
  return best_id;
}

}  // namespace detail

/// One seeded attack run: baseline partition, victim/target resolution,
/// target selection, the genetic search, and the summary record. The derived
/// run seed re-seeds both the clusterer and the search so repetitions are
/// seed-only variations.
inline RunOutput run_attack_once(const Workspace& ws, const ExperimentConfig& cfg,
                                 const Cell& cell, std::uint64_t run_seed) {
  const auto t0 = std::chrono::steady_clock::now();

  Clusterer c = cell.clusterer;
  c.seed = derive_seed(run_seed, "clusterer") ^ c.seed;

  QueryCounter q;
  const LabelVector baseline = cluster(c, ws.x, q);

  int victim, target;
  if (cfg.victim_class) {
    victim = detail::cluster_for_class(*ws.truth, baseline, *cfg.victim_class);
    target = detail::cluster_for_class(*ws.truth, baseline, *cfg.target_class);
    if (victim == target)
      throw Error("victim and target classes resolve to the same baseline cluster");
  } else {
    victim = *cfg.victim_cluster;
    target = *cfg.target_cluster;
    if (victim == target) throw Error("victim and target clusters coincide");
  }

  const std::vector<int> t_set =
      cell.t_count ? select_targets_count(ws.x, baseline, victim, target, *cell.t_count)
                   : select_targets(ws.x, baseline, victim, target, *cell.s);

  AttackerConstraints cons;
  cons.delta = cell.delta;
  cons.targets = t_set;
  cons.box = cfg.box;

  GAParams ga = cfg.ga;
  ga.seed = derive_seed(run_seed, "ga");
  ga.lambda = cfg.effective_lambda(ws.x.n, ws.x.d);

  std::optional<DirectionMatrix> psi;
  if (ga.heuristic) psi = direction_matrix(ws.x, baseline, victim, target);

  RunOutput out;
  out.result = attack(ws.x, c, cons, ga, cell.phi, q, psi ? &*psi : nullptr, &baseline);
  out.baseline = baseline;

  RunRecord& rec = out.record;
  rec.config_hash = config_hash_hex(cfg);
  rec.seed = run_seed;
  rec.clusterer = clusterer_name(cell.clusterer);
  rec.phi = phi_name(cell.phi);
  rec.s = cell.s;
  rec.t_count = cell.t_count;
  rec.delta = cell.delta;
  rec.trace = out.result.trace;
  rec.norms = mask_norms(out.result.best_mask);
  rec.miss_clustered = miss_clustered(baseline, out.result.best_labels);
  rec.final_ami = ami(baseline, out.result.best_labels);
  rec.final_ari = ari(baseline, out.result.best_labels);
  rec.final_frob = frob_distance(baseline, out.result.best_labels);
  rec.query_count = q.count();
  rec.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline json record_to_json(const RunRecord& r) {
  json j;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["clusterer"] = r.clusterer;
  j["phi"] = r.phi;
  j["s"] = r.s ? json(*r.s) : json(nullptr);
  j["t_count"] = r.t_count ? json(*r.t_count) : json(nullptr);
  j["delta"] = detail::delta_to_json(r.delta);
  j["trace"] = r.trace;
  j["norms"] = {{"l0", r.norms.l0}, {"l2", r.norms.l2}, {"linf", r.norms.linf}};
  j["miss_clustered"] = r.miss_clustered;
  j["final_ami"] = r.final_ami;
  j["final_ari"] = r.final_ari;
  j["final_frob"] = r.final_frob;
  j["query_count"] = r.query_count;
  j["wall_time_sec"] = r.wall_time_sec;
  return j;
}

inline RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.clusterer = j.at("clusterer").get<std::string>();
  r.phi = j.at("phi").get<std::string>();
  if (!j.at("s").is_null()) r.s = j.at("s").get<double>();
  if (!j.at("t_count").is_null()) r.t_count = j.at("t_count").get<int>();
  r.delta = detail::parse_delta_value(j.at("delta"), "delta");
  r.trace = j.at("trace").get<std::vector<double>>();
  r.norms.l0 = j.at("norms").at("l0").get<long long>();
  r.norms.l2 = j.at("norms").at("l2").get<double>();
  r.norms.linf = j.at("norms").at("linf").get<double>();
  r.miss_clustered = j.at("miss_clustered").get<long long>();
  r.final_ami = j.at("final_ami").get<double>();
  r.final_ari = j.at("final_ari").get<double>();
  r.final_frob = j.at("final_frob").get<double>();
  r.query_count = j.at("query_count").get<std::uint64_t>();
  r.wall_time_sec = j.at("wall_time_sec").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// Job pool and aggregation helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Runs `count` independent jobs on up to `jobs` worker threads. Per-job
/// exceptions are captured and returned (empty string = success); shared
/// state is the caller's responsibility.
inline std::vector<std::string> run_jobs(int jobs, std::size_t count,
                                         const std::function<void(std::size_t)>& fn) {
  std::vector<std::string> errors(count);
  auto work = [&](std::size_t i) {
    try {
      fn(i);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    } catch (...) {
      errors[i] = "unknown error";
    }
  };
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int width = std::min<std::size_t>(jobs, count);
  pool.reserve(width);
  for (int t = 0; t < width; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
    });
  for (std::thread& t : pool) t.join();
  return errors;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample std (ddof = 1), 0 for a single value
  double stderr_mean = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    out.stderr_mean = out.stddev / std::sqrt(static_cast<double>(xs.size()));
  }
  return out;
}

inline std::string delta_text(double delta) {
  return std::isinf(delta) ? "inf" : format_double(delta);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw Error("write failure: " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CommandOptions {
  int jobs = 1;
};

/// `attack`: one seeded run. Writes record.json, poisoned.csv (clamped
/// X + eps*), and mask.csv into the output directory.
inline RunOutput cmd_attack(const ExperimentConfig& cfg) {
  validate_config(cfg);
  if (cfg.delta_grid.size() != 1 || (cfg.s_grid.size() > 1))
    throw ConfigError("config error: the attack command needs a single s and a single delta");
  const Workspace ws = load_workspace(cfg);

  Cell cell;
  cell.delta = cfg.delta_grid.front();
  if (cfg.t_count)
    cell.t_count = cfg.t_count;
  else
    cell.s = cfg.s_grid.front();
  cell.phi = cfg.phi;
  cell.clusterer = cfg.clusterer;

  // Same derivation as the first cell of a degenerate 1x1 sweep, so a sweep
  // over a single cell reproduces this command exactly.
  RunOutput out = run_attack_once(ws, cfg, cell, derive_seed(cfg.master_seed, "cell/s0_d0/rep=0"));

  std::filesystem::create_directories(cfg.out_dir);
  detail::write_text_file(cfg.out_dir + "/record.json", record_to_json(out.record).dump(2) + "\n");
  save_matrix(out.result.best_mask.add_to(ws.x, cfg.box), cfg.out_dir + "/poisoned.csv");
  save_matrix(out.result.best_mask.to_dense(), cfg.out_dir + "/mask.csv");
  return out;
}

namespace detail {

struct CellRuns {
  std::vector<RunRecord> records;  // successful repetitions
  std::vector<std::string> errors;
};

/// Grid runner shared by sweep/ablation/spillover/convergence. One output
/// JSON per (cell, repetition) under <out>/cells/; existing files with a
/// matching config hash are reused, which makes interrupted sweeps
/// resumable and keeps aggregates independent of scheduling order.
///
/// `stream_ids` feed the seed derivation and deliberately exclude phi, so
/// that sweeps which differ only in the optimized phi share seeds cell by
/// cell (the ablation contract). `file_ids` name the per-repetition records
/// and do include phi to keep them collision-free.
inline std::vector<CellRuns> run_grid(const Workspace& ws, const ExperimentConfig& cfg,
                                      const std::vector<Cell>& cells,
                                      const std::vector<std::string>& stream_ids,
                                      const std::vector<std::string>& file_ids,
                                      const CommandOptions& opt) {
  const std::string cells_dir = cfg.out_dir + "/cells";
  std::filesystem::create_directories(cells_dir);
  const std::string hash = config_hash_hex(cfg);

  struct Job {
    std::size_t cell;
    int rep;
    std::uint64_t seed;
    std::string path;
  };
  std::vector<Job> jobs;
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (int r = 0; r < cfg.repetitions; ++r) {
      const std::string stream = "cell/" + stream_ids[ci] + "/rep=" + std::to_string(r);
      jobs.push_back({ci, r, derive_seed(cfg.master_seed, stream),
                      cells_dir + "/" + file_ids[ci] + "_r" + std::to_string(r) + ".json"});
    }

  std::vector<CellRuns> out(cells.size());
  std::mutex mu;
  const auto errors = run_jobs(opt.jobs, jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    RunRecord rec;
    bool reused = false;
    if (std::filesystem::exists(job.path)) {
      std::ifstream in(job.path);
      json j;
      in >> j;
      rec = record_from_json(j);
      // A hash mismatch means the file belongs to a different experiment;
      // recompute and overwrite instead of reusing it.
      reused = rec.config_hash == hash;
    }
    if (!reused) {
      rec = run_attack_once(ws, cfg, cells[job.cell], job.seed).record;
      write_text_file(job.path, record_to_json(rec).dump(2) + "\n");
    }
    std::lock_guard<std::mutex> lock(mu);
    out[job.cell].records.push_back(rec);
  });

  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (!errors[i].empty()) out[jobs[i].cell].errors.push_back(errors[i]);

  // Aggregation order must not depend on completion order.
  for (CellRuns& runs : out)
    std::sort(runs.records.begin(), runs.records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
  return out;
}

}  // namespace detail

/// `sweep`: mean +- stderr of the final AMI over an (s, delta) grid.
/// Emits long-format sweep.csv with the fixed column order
/// s,delta,mean_ami,stderr,clusterer.
inline std::string cmd_sweep(const ExperimentConfig& cfg, const CommandOptions& opt = {}) {
  validate_config(cfg);
  const Workspace ws = load_workspace(cfg);

  std::vector<Cell> cells;
  std::vector<std::string> stream_ids, file_ids;
  const std::size_t s_count = cfg.t_count ? 1 : cfg.s_grid.size();
  for (std::size_t si = 0; si < s_count; ++si)
    for (std::size_t di = 0; di < cfg.delta_grid.size(); ++di) {
      Cell cell;
      if (cfg.t_count)
        cell.t_count = cfg.t_count;
      else
        cell.s = cfg.s_grid[si];
      cell.delta = cfg.delta_grid[di];
      cell.phi = cfg.phi;
      cell.clusterer = cfg.clusterer;
      cells.push_back(cell);
      stream_ids.push_back("s" + std::to_string(si) + "_d" + std::to_string(di));
      file_ids.push_back(stream_ids.back() + "_" + phi_name(cfg.phi));
    }

  const auto runs = detail::run_grid(ws, cfg, cells, stream_ids, file_ids, opt);

  std::string csv = "s,delta,mean_ami,stderr,clusterer\n";
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (const std::string& err : runs[ci].errors)
      std::fprintf(stderr, "sweep cell %s: %s\n", file_ids[ci].c_str(), err.c_str());
    if (runs[ci].records.empty()) continue;
    std::vector<double> amis;
    for (const RunRecord& r : runs[ci].records) amis.push_back(r.final_ami);
    const auto agg = detail::mean_std(amis);
    csv += (cells[ci].s ? format_double(*cells[ci].s) : std::to_string(*cells[ci].t_count)) + "," +
           detail::delta_text(cells[ci].delta) + "," + format_double(agg.mean) + "," +
           format_double(agg.stderr_mean) + "," + clusterer_name(cfg.clusterer) + "\n";
  }
  std::filesystem::create_directories(cfg.out_dir);
  detail::write_text_file(cfg.out_dir + "/sweep.csv", csv);
  return csv;
}

/// `spillover`: |T| = 1 attacks per delta, aggregated mask norms and
/// miss-clustered counts in the paper's table column order.
inline std::string cmd_spillover(const ExperimentConfig& cfg, const CommandOptions& opt = {}) {
  ExperimentConfig c = cfg;
  c.t_count = 1;
  c.s_grid.clear();
  validate_config(c);
  const Workspace ws = load_workspace(c);

  std::vector<Cell> cells;
  std::vector<std::string> stream_ids, file_ids;
  for (std::size_t di = 0; di < c.delta_grid.size(); ++di) {
    Cell cell;
    cell.t_count = 1;
    cell.delta = c.delta_grid[di];
    cell.phi = c.phi;
    cell.clusterer = c.clusterer;
    cells.push_back(cell);
    stream_ids.push_back("spill_d" + std::to_string(di));
    file_ids.push_back(stream_ids.back() + "_" + phi_name(c.phi));
  }

  const auto runs = detail::run_grid(ws, c, cells, stream_ids, file_ids, opt);

  std::string csv =
      "delta,l0_mean,l0_std,l2_mean,l2_std,linf_mean,linf_std,missclust_mean,missclust_std\n";
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (const std::string& err : runs[ci].errors)
      std::fprintf(stderr, "spillover cell %s: %s\n", file_ids[ci].c_str(), err.c_str());
    if (runs[ci].records.empty()) continue;
    std::vector<double> l0, l2, linf, miss;
    for (const RunRecord& r : runs[ci].records) {
      l0.push_back(static_cast<double>(r.norms.l0));
      l2.push_back(r.norms.l2);
      linf.push_back(r.norms.linf);
      miss.push_back(static_cast<double>(r.miss_clustered));
    }
    const auto a0 = detail::mean_std(l0), a2 = detail::mean_std(l2),
               ai = detail::mean_std(linf), am = detail::mean_std(miss);
    csv += detail::delta_text(cells[ci].delta) + "," + format_double(a0.mean) + "," +
           format_double(a0.stddev) + "," + format_double(a2.mean) + "," +
           format_double(a2.stddev) + "," + format_double(ai.mean) + "," +
           format_double(ai.stddev) + "," + format_double(am.mean) + "," +
           format_double(am.stddev) + "\n";
  }
  std::filesystem::create_directories(c.out_dir);
  detail::write_text_file(c.out_dir + "/spillover.csv", csv);
  return csv;
}

/// `ablation`: the sweep once per phi in {ami, ari, frob} with shared
/// per-cell seeds (phi is not part of the seed derivation), reported side by
/// side. The reported metric stays AMI regardless of the optimized phi.
inline std::string cmd_ablation(const ExperimentConfig& cfg, const CommandOptions& opt = {}) {
  validate_config(cfg);
  const Workspace ws = load_workspace(cfg);

  constexpr PhiKind kPhis[] = {PhiKind::ami, PhiKind::ari, PhiKind::frob};

  struct GridResult {
    std::vector<Cell> cells;
    std::vector<detail::CellRuns> runs;
  };
  std::vector<GridResult> per_phi;

  for (PhiKind phi : kPhis) {
    GridResult g;
    std::vector<std::string> stream_ids, file_ids;
    const std::size_t s_count = cfg.t_count ? 1 : cfg.s_grid.size();
    for (std::size_t si = 0; si < s_count; ++si)
      for (std::size_t di = 0; di < cfg.delta_grid.size(); ++di) {
        Cell cell;
        if (cfg.t_count)
          cell.t_count = cfg.t_count;
        else
          cell.s = cfg.s_grid[si];
        cell.delta = cfg.delta_grid[di];
        cell.phi = phi;
        cell.clusterer = cfg.clusterer;
        g.cells.push_back(cell);
        // phi is absent from the stream id, so the three sweeps share seeds
        // cell by cell.
        stream_ids.push_back("s" + std::to_string(si) + "_d" + std::to_string(di));
        file_ids.push_back(stream_ids.back() + "_" + phi_name(phi));
      }
    ExperimentConfig phi_cfg = cfg;
    phi_cfg.phi = phi;
    auto runs = detail::run_grid(ws, phi_cfg, g.cells, stream_ids, file_ids, opt);
    g.runs = std::move(runs);
    per_phi.push_back(std::move(g));
  }

  std::string csv =
      "s,delta,clusterer,ami_mean,ami_stderr,ari_mean,ari_stderr,frob_mean,frob_stderr\n";
  const std::size_t n_cells = per_phi[0].cells.size();
  for (std::size_t ci = 0; ci < n_cells; ++ci) {
    const Cell& cell = per_phi[0].cells[ci];
    std::string row = (cell.s ? format_double(*cell.s) : std::to_string(*cell.t_count)) + "," +
                      detail::delta_text(cell.delta) + "," + clusterer_name(cfg.clusterer);
    for (const GridResult& g : per_phi) {
      std::vector<double> amis;
      for (const RunRecord& r : g.runs[ci].records) amis.push_back(r.final_ami);
      const auto agg = detail::mean_std(amis);
      row += "," + format_double(agg.mean) + "," + format_double(agg.stderr_mean);
    }
    csv += row + "\n";
  }
  std::filesystem::create_directories(cfg.out_dir);
  detail::write_text_file(cfg.out_dir + "/ablation.csv", csv);
  return csv;
}

/// `convergence`: per-generation best-so-far loss per clusterer, averaged
/// over repetitions, at the first configured (s, delta) cell.
inline std::string cmd_convergence(const ExperimentConfig& cfg, const CommandOptions& opt = {}) {
  validate_config(cfg);
  const Workspace ws = load_workspace(cfg);

  const std::vector<Clusterer> clusterers =
      cfg.clusterers.empty() ? std::vector<Clusterer>{cfg.clusterer} : cfg.clusterers;

  std::vector<Cell> cells;
  std::vector<std::string> stream_ids, file_ids;
  for (std::size_t ki = 0; ki < clusterers.size(); ++ki) {
    Cell cell;
    if (cfg.t_count)
      cell.t_count = cfg.t_count;
    else
      cell.s = cfg.s_grid.front();
    cell.delta = cfg.delta_grid.front();
    cell.phi = cfg.phi;
    cell.clusterer = clusterers[ki];
    cells.push_back(cell);
    stream_ids.push_back("conv_c" + std::to_string(ki));
    file_ids.push_back(stream_ids.back() + "_" + phi_name(cfg.phi));
  }

  const auto runs = detail::run_grid(ws, cfg, cells, stream_ids, file_ids, opt);

  std::string csv = "clusterer,generation,mean_loss,stderr_loss\n";
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (const std::string& err : runs[ci].errors)
      std::fprintf(stderr, "convergence cell %s: %s\n", file_ids[ci].c_str(), err.c_str());
    if (runs[ci].records.empty()) continue;
    const std::size_t g_count = runs[ci].records.front().trace.size();
    for (std::size_t g = 0; g < g_count; ++g) {
      std::vector<double> losses;
      for (const RunRecord& r : runs[ci].records) losses.push_back(r.trace[g]);
      const auto agg = detail::mean_std(losses);
      csv += clusterer_name(cells[ci].clusterer) + "," + std::to_string(g + 1) + "," +
             format_double(agg.mean) + "," + format_double(agg.stderr_mean) + "\n";
    }
  }
  std::filesystem::create_directories(cfg.out_dir);
  detail::write_text_file(cfg.out_dir + "/convergence.csv", csv);
  return csv;
}

struct ClusterCommandResult {
  LabelVector labels;
  std::optional<double> silhouette_score;  // unset when K < 2
  std::optional<double> ami_vs_truth;
};

/// `cluster`: run a clusterer once, write the labels file, report silhouette
/// and (when ground truth is available) AMI against it.
inline ClusterCommandResult cmd_cluster(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty() || !std::filesystem::exists(cfg.dataset_path))
    throw ConfigError("config error at dataset: file not found: " + cfg.dataset_path);
  validate_clusterer(cfg.clusterer);
  const Workspace ws = load_workspace(cfg);

  Clusterer c = cfg.clusterer;
  c.seed = derive_seed(cfg.master_seed, "clusterer") ^ c.seed;
  QueryCounter q;
  ClusterCommandResult out;
  out.labels = cluster(c, ws.x, q);
  if (out.labels.k() >= 2) out.silhouette_score = silhouette(ws.x, out.labels);
  if (ws.truth) out.ami_vs_truth = ami(*ws.truth, out.labels);

  std::filesystem::create_directories(cfg.out_dir);
  save_labels(out.labels, cfg.out_dir + "/labels.txt");
  return out;
}

/// `audit`: the AGA convergence-condition report for every delta in the
/// config grid.
inline std::vector<std::pair<double, AgaReport>> cmd_audit(const ExperimentConfig& cfg) {
  if (cfg.delta_grid.empty()) throw ConfigError("config error at delta: grid must be non-empty");
  cfg.ga.validate();
  std::vector<std::pair<double, AgaReport>> out;
  for (double delta : cfg.delta_grid) {
    AttackerConstraints cons;
    cons.delta = delta;
    cons.targets = {0};
    out.emplace_back(delta, aga_condition_audit(cfg.ga, cons));
  }
  return out;
}

}  // namespace advclust
