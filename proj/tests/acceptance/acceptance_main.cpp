// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Slow criteria print their wall time; stated runtime budgets are
// part of the checks.
//
// Usage: advclust_acceptance --data-dir <dir with digits csv>
//                            [--out <scratch dir>] [--jobs N] [--only K]

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "../oracles.hpp"
#include "advclust/experiment.hpp"

using namespace advclust;

namespace {

struct Args {
  std::string data_dir = ".";
  std::string configs_dir = "configs";
  std::string out_dir = "acceptance_out";
  int jobs = 1;
  int only = 0;  // 0 = all
};

double now_sec() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared two-blob benchmark (criteria 6, 7, 8, 10)
// ---------------------------------------------------------------------------

constexpr double kBenchDeltas[] = {0.1, 0.5, 1.0, 2.0, 5.0};
constexpr int kBenchSeeds = 5;
constexpr int kConvergenceDeltaIndex = 2;  // delta = 1.0, the mid-grid cell

struct BenchRun {
  double final_ami = 0.0;
  std::vector<double> trace;
};

struct Benchmark {
  FeatureMatrix x;
  LabelVector truth;
  Workspace ws;
  ExperimentConfig base_cfg;
  // runs[phi][clusterer][delta][seed]
  std::map<std::string, std::map<std::string, std::vector<std::vector<BenchRun>>>> runs;
  bool ready = false;
  double elapsed = 0.0;
};

std::vector<std::pair<std::string, Clusterer>> bench_clusterers() {
  return {
      {"kmeanspp", Clusterer{ClusterAlgo::kmeanspp, 2, SimilarityKind::self_tuning, {}, 0}},
      {"ward", Clusterer{ClusterAlgo::ward, 2, SimilarityKind::self_tuning, {}, 0}},
      {"spectral", Clusterer{ClusterAlgo::spectral, 2, SimilarityKind::self_tuning, {}, 0}},
  };
}

void build_benchmark(Benchmark& bench, const Args& args) {
  if (bench.ready) return;
  const double t0 = now_sec();

  bench.x = make_blobs({{0.0, 0.0}, {4.0, 0.0}}, 0.5, 100, 20220101, &bench.truth);
  std::filesystem::create_directories(args.out_dir);
  const std::string data_path = args.out_dir + "/bench_blobs.csv";
  const std::string labels_path = args.out_dir + "/bench_blobs_labels.txt";
  save_matrix(bench.x, data_path);
  save_labels(bench.truth, labels_path);

  ExperimentConfig cfg;
  cfg.dataset_path = data_path;
  cfg.labels_path = labels_path;
  cfg.victim_class = 0;
  cfg.target_class = 1;
  cfg.s_grid = {0.25};
  cfg.ga.generations = 110;
  cfg.ga.p_c = 0.85;
  cfg.ga.p_m = 0.05;
  cfg.ga.p_z = 0.001;
  cfg.ga.heuristic = true;
  cfg.lambda_alpha = 255.0;  // lambda = 1/(255 n d)
  cfg.repetitions = kBenchSeeds;
  cfg.master_seed = 1;
  cfg.out_dir = args.out_dir + "/bench";
  bench.base_cfg = cfg;
  bench.ws = Workspace{bench.x, bench.truth};

  struct Job {
    PhiKind phi;
    std::string phi_name;
    std::string clu_name;
    Clusterer clusterer;
    int delta_idx;
    int rep;
  };
  std::vector<Job> jobs;
  for (PhiKind phi : {PhiKind::ami, PhiKind::ari, PhiKind::frob})
    for (const auto& [clu_name, clu] : bench_clusterers())
      for (int di = 0; di < 5; ++di)
        for (int rep = 0; rep < kBenchSeeds; ++rep)
          jobs.push_back({phi, phi_name(phi), clu_name, clu, di, rep});

  for (const auto& [clu_name, clu] : bench_clusterers())
    for (PhiKind phi : {PhiKind::ami, PhiKind::ari, PhiKind::frob})
      bench.runs[phi_name(phi)][clu_name].assign(5, std::vector<BenchRun>(kBenchSeeds));

  std::mutex mu;
  const auto errors = detail::run_jobs(args.jobs, jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    Cell cell;
    cell.s = 0.25;
    cell.delta = kBenchDeltas[job.delta_idx];
    cell.phi = job.phi;
    cell.clusterer = job.clusterer;
    ExperimentConfig cfg_local = bench.base_cfg;
    cfg_local.phi = job.phi;
    cfg_local.clusterer = job.clusterer;
    // phi excluded from the stream so the three phis share seeds
    const std::uint64_t seed = derive_seed(
        bench.base_cfg.master_seed, "bench/" + job.clu_name + "/d" +
                                        std::to_string(job.delta_idx) + "/rep=" +
                                        std::to_string(job.rep));
    const RunOutput out = run_attack_once(bench.ws, cfg_local, cell, seed);
    std::lock_guard<std::mutex> lock(mu);
    BenchRun& slot = bench.runs[job.phi_name][job.clu_name][job.delta_idx][job.rep];
    slot.final_ami = out.record.final_ami;
    slot.trace = out.record.trace;
  });
  for (const std::string& e : errors)
    if (!e.empty()) throw Error("benchmark run failed: " + e);

  bench.elapsed = now_sec() - t0;
  bench.ready = true;
}

double mean_of(const std::vector<BenchRun>& runs) {
  double s = 0.0;
  for (const BenchRun& r : runs) s += r.final_ami;
  return s / static_cast<double>(runs.size());
}

// ---------------------------------------------------------------------------
// Criterion 1: exhaustive metric oracle equivalence
// ---------------------------------------------------------------------------

void criterion_metric_oracles(std::string& detail) {
  long long pairs_checked = 0, unique_tables = 0;
  std::unordered_map<std::uint64_t, char> seen;
  seen.reserve(1 << 16);

  for (int n = 1; n <= 8; ++n) {
    int pow3 = 1;
    for (int i = 0; i < n; ++i) pow3 *= 3;

    // canonical labels (first occurrence order) and K per code
    std::vector<std::array<std::int8_t, 8>> canon(pow3);
    std::vector<std::int8_t> kof(pow3);
    for (int code = 0; code < pow3; ++code) {
      int c = code;
      std::int8_t remap[3] = {-1, -1, -1};
      std::int8_t next = 0;
      for (int i = 0; i < n; ++i) {
        const int digit = c % 3;
        c /= 3;
        if (remap[digit] < 0) remap[digit] = next++;
        canon[code][i] = remap[digit];
      }
      kof[code] = next;
    }

    for (int a = 0; a < pow3; ++a) {
      for (int b = 0; b < pow3; ++b) {
        ++pairs_checked;
        int cells[9] = {0};
        const int cols = kof[b];
        for (int i = 0; i < n; ++i) ++cells[canon[a][i] * cols + canon[b][i]];
        std::uint64_t key = static_cast<std::uint64_t>(kof[a]) |
                            (static_cast<std::uint64_t>(cols) << 2) |
                            (static_cast<std::uint64_t>(n) << 4);
        for (int i = 0; i < kof[a] * cols; ++i)
          key |= static_cast<std::uint64_t>(cells[i]) << (8 + 4 * i);
        auto [it, inserted] = seen.try_emplace(key, 0);
        if (!inserted) continue;
        ++unique_tables;

        std::vector<int> va(canon[a].begin(), canon[a].begin() + n);
        std::vector<int> vb(canon[b].begin(), canon[b].begin() + n);
        const LabelVector la{va}, lb{vb};
        const double d_ami = std::abs(ami(la, lb) - oracles::brute_ami(va, vb));
        const double d_ari = std::abs(ari(la, lb) - oracles::brute_ari(va, vb));
        if (d_ami > 1e-10) throw Error(fmt("ami deviates by %.3e (n=%d)", d_ami, n));
        if (d_ari > 1e-10) throw Error(fmt("ari deviates by %.3e (n=%d)", d_ari, n));
      }
    }
  }
  detail = fmt("%lld pairs, %lld distinct contingency tables, max deviation <= 1e-10",
               pairs_checked, unique_tables);
}

// ---------------------------------------------------------------------------
// Criterion 2: norm-bound property suite
// ---------------------------------------------------------------------------

void criterion_lemma_suite(std::string& detail) {
  Rng rng(271828);
  const std::pair<double, double> pqs[] = {
      {1.0, 2.0}, {1.0, INFINITY}, {2.0, INFINITY}, {2.0, 2.0}};
  const int rounds = 100000;
  for (int round = 0; round < rounds; ++round) {
    const int dim = 1 + static_cast<int>(rng.uniform_int(64));
    std::vector<double> x(dim);
    const double sparsity = rng.uniform();
    for (double& v : x) v = rng.bernoulli(sparsity) ? 0.0 : rng.uniform(-100.0, 100.0);
    for (const auto& [p, q] : pqs)
      if (!check_lemma1(x, p, q))
        throw Error(fmt("violation at round %d (p=%g q=%g dim=%d)", round, p, q, dim));
  }
  detail = fmt("%d vectors x 4 (p,q) pairs, zero violations", rounds);
}

// ---------------------------------------------------------------------------
// Criterion 3: constraint and budget invariants
// ---------------------------------------------------------------------------

void criterion_invariants(std::string& detail) {
  Rng rng(31337);
  const FeatureMatrix x = make_blobs({{0.0, 0.0}, {4.0, 0.0}}, 0.5, 12, 99);

  // 10^4 fuzzed operator applications
  LabelVector two;
  two.labels.assign(24, 0);
  std::fill(two.labels.begin() + 12, two.labels.end(), 1);
  const DirectionMatrix psi = direction_matrix(x, two, 0, 1);
  long long applications = 0;
  for (int round = 0; round < 2500; ++round) {
    AttackerConstraints cons;
    cons.delta = rng.uniform(0.05, 4.0);
    cons.targets.clear();
    for (int i = 0; i < x.n; ++i)
      if (rng.bernoulli(0.3)) cons.targets.push_back(i);
    if (cons.targets.empty()) cons.targets.push_back(static_cast<int>(rng.uniform_int(x.n)));
    const bool heuristic = rng.bernoulli(0.5);

    AdversarialMask e = zero_mask(x.n, x.d, cons.targets);
    for (std::size_t t = 0; t < cons.targets.size(); ++t)
      for (int j = 0; j < x.d; ++j) {
        const double raw = rng.uniform(-cons.delta, cons.delta);
        e.at_block(static_cast<int>(t), j) = heuristic ? psi.sign(j) * std::abs(raw) : raw;
      }
    AdversarialMask f = e;
    for (int op = 0; op < 4; ++op) {
      f = crossover(f, e, rng.uniform(), rng);
      f = mutation(f, cons, rng.uniform(), rng.uniform(), rng, heuristic,
                   heuristic ? &psi : nullptr, cons.delta);
      check_mask_constraints(f, cons, heuristic ? &psi : nullptr);
      // structural claim: rows outside T are identically zero when dense
      const FeatureMatrix dense = f.to_dense();
      std::size_t ti = 0;
      for (int i = 0; i < dense.n; ++i) {
        const bool in_t = ti < cons.targets.size() && cons.targets[ti] == i;
        if (in_t) {
          ++ti;
          continue;
        }
        for (int j = 0; j < dense.d; ++j)
          if (dense.at(i, j) != 0.0) throw Error("nonzero row outside T");
      }
      ++applications;
    }
  }

  // 100 full attack runs with randomized configurations
  for (int run = 0; run < 100; ++run) {
    LabelVector truth;
    const FeatureMatrix data =
        make_blobs({{0.0, 0.0}, {4.0, 0.0}}, 0.5, 12, 1000 + run, &truth);
    Clusterer c{ClusterAlgo::kmeanspp, 2, SimilarityKind::self_tuning, {},
                static_cast<std::uint64_t>(run)};
    QueryCounter q;
    const LabelVector baseline = cluster(c, data, q);
    const int victim = baseline.labels[0];
    const int target = 1 - victim;

    AttackerConstraints cons;
    cons.delta = rng.uniform(0.5, 6.0);
    cons.targets = select_targets(data, baseline, victim, target, rng.uniform(0.1, 1.0));

    GAParams params;
    params.generations = 5 + static_cast<int>(rng.uniform_int(26));
    params.p_c = rng.uniform();
    params.p_m = rng.uniform();
    params.p_z = rng.uniform(0.0, 0.5);
    params.heuristic = rng.bernoulli(0.5);
    params.seed = rng.uniform_int(1u << 30);
    params.lambda = rng.uniform(0.0, 1e-4);

    std::optional<DirectionMatrix> dir;
    if (params.heuristic) dir = direction_matrix(data, baseline, victim, target);

    QueryCounter qa;
    const AttackResult res =
        attack(data, c, cons, params, PhiKind::ami, qa, dir ? &*dir : nullptr);
    if (qa.count() != static_cast<std::uint64_t>(params.generations) + 2)
      throw Error(fmt("query count %llu != G+2", (unsigned long long)qa.count()));
    if (res.population.archive.size() != static_cast<std::size_t>(params.generations) + 1)
      throw Error("archive size != G+1");
    for (std::size_t g = 1; g < res.trace.size(); ++g)
      if (res.trace[g] > res.trace[g - 1]) throw Error("best-so-far trace increased");
    for (const PopulationEntry& p : res.population.archive)
      check_mask_constraints(p.mask, cons, dir ? &*dir : nullptr);
  }
  detail = fmt("%lld operator applications + 100 attack runs, zero violations", applications);
}

// ---------------------------------------------------------------------------
// Criterion 4: determinism of runs and result files
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void criterion_determinism(const Args& args, std::string& detail) {
  LabelVector truth;
  const FeatureMatrix m = make_blobs({{0.0, 0.0}, {4.0, 0.0}}, 0.5, 20, 606, &truth);
  const std::string base = args.out_dir + "/determinism";
  std::filesystem::create_directories(base);
  save_matrix(m, base + "/data.csv");
  save_labels(truth, base + "/labels.txt");

  ExperimentConfig cfg;
  cfg.dataset_path = base + "/data.csv";
  cfg.labels_path = base + "/labels.txt";
  cfg.clusterer = Clusterer{ClusterAlgo::ward, 2, SimilarityKind::self_tuning, {}, 0};
  cfg.victim_class = 0;
  cfg.target_class = 1;
  cfg.s_grid = {0.3};
  cfg.delta_grid = {2.0};
  cfg.ga.generations = 40;
  cfg.ga.p_m = 0.2;
  cfg.ga.p_z = 0.05;
  cfg.master_seed = 12345;

  cfg.out_dir = base + "/run1";
  const RunOutput r1 = cmd_attack(cfg);
  cfg.out_dir = base + "/run2";
  const RunOutput r2 = cmd_attack(cfg);

  if (r1.result.best_mask.block != r2.result.best_mask.block)
    throw Error("best mask differs between reruns");
  if (r1.record.trace != r2.record.trace) throw Error("trace differs between reruns");

  if (slurp(base + "/run1/poisoned.csv") != slurp(base + "/run2/poisoned.csv"))
    throw Error("poisoned.csv differs between reruns");
  if (slurp(base + "/run1/mask.csv") != slurp(base + "/run2/mask.csv"))
    throw Error("mask.csv differs between reruns");

  json j1 = json::parse(slurp(base + "/run1/record.json"));
  json j2 = json::parse(slurp(base + "/run2/record.json"));
  j1.erase("wall_time_sec");
  j2.erase("wall_time_sec");
  if (j1.dump() != j2.dump()) throw Error("record.json differs beyond wall time");
  detail = "mask, trace, poisoned.csv, mask.csv byte-identical; record identical modulo wall time";
}

// ---------------------------------------------------------------------------
// Criterion 5: spill-over reproduction on UCI Digits 8&9
// ---------------------------------------------------------------------------

void criterion_spillover(const Args& args, std::string& detail) {
  const double t0 = now_sec();
  const std::string data = args.data_dir + "/digits_8v9.csv";
  const std::string labels = args.data_dir + "/digits_8v9_labels.txt";
  if (!std::filesystem::exists(data))
    throw Error("missing " + data + " (run tests/data/export_digits.py)");

  ExperimentConfig cfg;
  cfg.dataset_path = data;
  cfg.labels_path = labels;
  cfg.clusterer = Clusterer{ClusterAlgo::ward, 2, SimilarityKind::self_tuning, {}, 0};
  cfg.victim_class = 8;
  cfg.target_class = 9;
  cfg.t_count = 1;
  cfg.delta_grid = {4.72};
  cfg.phi = PhiKind::frob;
  cfg.ga.generations = 150;
  cfg.ga.lambda = 1.0;
  cfg.ga.p_c = 0.85;
  cfg.ga.p_m = 0.2;
  cfg.ga.p_z = 0.35;
  cfg.ga.heuristic = true;
  cfg.box = BoxBounds{0.0, 16.0};
  cfg.repetitions = 20;
  cfg.master_seed = 8009;
  cfg.out_dir = args.out_dir + "/digits_spillover";

  const std::string csv = cmd_spillover(cfg, {args.jobs});
  const std::string row = csv.substr(csv.find('\n') + 1);
  std::vector<double> fields;
  std::size_t start = 0;
  while (start <= row.size()) {
    const auto pos = row.find(',', start);
    fields.push_back(std::stod(row.substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  const double l0_mean = fields[1], miss_mean = fields[7];
  const double elapsed = now_sec() - t0;
  detail = fmt("delta=4.72: mean miss_clustered=%.2f (>=15), mean l0=%.2f (<=30), %.0fs (<=600)",
               miss_mean, l0_mean, elapsed);
  if (miss_mean < 15.0) throw Error(detail);
  if (l0_mean > 30.0) throw Error(detail);
  if (elapsed > 600.0) throw Error(detail);
}

// ---------------------------------------------------------------------------
// Criteria 6-8 on the shared two-blob benchmark
// ---------------------------------------------------------------------------

void criterion_robustness_decay(Benchmark& bench, const Args& args, std::string& detail) {
  build_benchmark(bench, args);
  std::string summary;
  for (const auto& [clu_name, clu] : bench_clusterers()) {
    const auto& grid = bench.runs.at("ami").at(clu_name);
    summary += clu_name + ":";
    double prev = 2.0;
    for (int di = 0; di < 5; ++di) {
      const double mean = mean_of(grid[di]);
      summary += fmt(" %.3f", mean);
      if (mean > prev + 0.05)
        throw Error(fmt("%s: mean AMI rose from %.3f to %.3f at delta=%g", clu_name.c_str(),
                        prev, mean, kBenchDeltas[di]));
      prev = mean;
    }
    summary += "; ";
  }
  if (bench.elapsed > 300.0 * 3)
    throw Error(fmt("benchmark took %.0fs, over budget", bench.elapsed));
  detail = summary + fmt("(shared benchmark %.0fs)", bench.elapsed);
}

void criterion_phi_ablation(Benchmark& bench, const Args& args, std::string& detail) {
  build_benchmark(bench, args);
  std::string summary;
  for (const auto& [clu_name, clu] : bench_clusterers()) {
    double lo = 2.0, hi = -2.0;
    for (const char* phi : {"ami", "ari", "frob"}) {
      const auto& grid = bench.runs.at(phi).at(clu_name);
      double total = 0.0;
      for (int di = 0; di < 5; ++di) total += mean_of(grid[di]);
      const double grid_mean = total / 5.0;
      lo = std::min(lo, grid_mean);
      hi = std::max(hi, grid_mean);
    }
    summary += fmt("%s spread=%.3f; ", clu_name.c_str(), hi - lo);
    if (hi - lo >= 0.15)
      throw Error(fmt("%s: mean final AMI spreads %.3f across phi (>= 0.15)", clu_name.c_str(),
                      hi - lo));
  }
  detail = summary + "(< 0.15 across phi)";
}

void criterion_convergence(Benchmark& bench, const Args& args, std::string& detail) {
  build_benchmark(bench, args);
  int best_count = 0;
  std::string best_name;
  for (const auto& [clu_name, clu] : bench_clusterers()) {
    const auto& runs = bench.runs.at("ami").at(clu_name)[kConvergenceDeltaIndex];
    int improved = 0;
    for (const BenchRun& r : runs) {
      if (r.trace.size() < 110) throw Error("trace shorter than G");
      if (r.trace[9] - r.trace[109] >= 0.05) ++improved;
    }
    if (improved > best_count) {
      best_count = improved;
      best_name = clu_name;
    }
  }
  detail = fmt("best clusterer %s improves >= 0.05 from g=10 to g=110 in %d/5 seeds (delta=%g)",
               best_name.c_str(), best_count, kBenchDeltas[kConvergenceDeltaIndex]);
  if (best_count < 4) throw Error(detail);
}

// ---------------------------------------------------------------------------
// Criterion 9: AGA audit on shipped presets and degenerate settings
// ---------------------------------------------------------------------------

void criterion_aga_audit(const Args& args, std::string& detail) {
  int configs_checked = 0;
  if (!std::filesystem::is_directory(args.configs_dir))
    throw Error("configs directory not found: " + args.configs_dir);

  for (const auto& entry : std::filesystem::directory_iterator(args.configs_dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    json j;
    in >> j;
    const ExperimentConfig cfg = parse_config(j);
    for (const auto& [delta, report] : cmd_audit(cfg)) {
      if (!report.all_pass)
        throw Error("preset " + entry.path().filename().string() + " fails the audit at delta=" +
                    detail::delta_text(delta));
    }
    ++configs_checked;
  }
  if (configs_checked == 0) throw Error("no preset configs found in " + args.configs_dir);

  // the audit must fail (connectivity) exactly for p_m = 0 and for delta = 0
  GAParams params;
  params.p_c = 0.85;
  params.p_m = 0.05;
  params.p_z = 0.001;
  AttackerConstraints cons;
  cons.delta = 1.0;
  cons.targets = {0};

  GAParams dead = params;
  dead.p_m = 0.0;
  AgaReport r1 = aga_condition_audit(dead, cons);
  if (r1.all_pass || r1.conditions[0].pass) throw Error("p_m=0 must fail connectivity");

  AttackerConstraints collapsed = cons;
  collapsed.delta = 0.0;
  AgaReport r2 = aga_condition_audit(params, collapsed);
  if (r2.all_pass || r2.conditions[0].pass) throw Error("delta=0 must fail connectivity");

  AgaReport r3 = aga_condition_audit(params, cons);
  if (!r3.all_pass) throw Error("valid settings must pass all conditions");

  detail = fmt("%d shipped presets pass; p_m=0 and delta=0 fail connectivity as required",
               configs_checked);
}

// ---------------------------------------------------------------------------
// Criterion 10: clustering sanity
// ---------------------------------------------------------------------------

void criterion_clustering_sanity(std::string& detail) {
  LabelVector truth;
  const FeatureMatrix blobs = make_blobs({{0.0, 0.0}, {4.0, 0.0}}, 0.5, 100, 20220101, &truth);

  for (const auto& [clu_name, clu] : bench_clusterers()) {
    QueryCounter q;
    const LabelVector out = cluster(clu, blobs, q);
    const double score = ami(out, truth);
    if (score < 1.0 - 1e-9)
      throw Error(fmt("%s reaches AMI %.6f on separated blobs", clu_name.c_str(), score));
  }

  Rng rng(5150);
  for (int round = 0; round < 20; ++round) {
    FeatureMatrix m = make_matrix(50, 3);
    for (double& v : m.values) v = rng.uniform(-5.0, 5.0);
    KMeansDiagnostics diag;
    kmeanspp(m, 5, round, &diag);
    for (std::size_t i = 1; i < diag.sse_per_iteration.size(); ++i)
      if (diag.sse_per_iteration[i] > diag.sse_per_iteration[i - 1] + 1e-9)
        throw Error("kmeanspp SSE increased across Lloyd iterations");
  }

  FeatureMatrix tri = make_matrix(3, 1);
  tri.values = {0.0, 1.0, 10.0};
  const LabelVector cut = ward(tri, 2);
  if (cut.labels[0] != cut.labels[1] || cut.labels[0] == cut.labels[2])
    throw Error("ward deviates from the 3-point merge oracle");

  detail = "AMI=1.0 for all three clusterers; SSE monotone on 20 datasets; ward oracle matched";
}

}  // namespace

int main(int argc, char** argv) {
  Args args;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--data-dir") && i + 1 < argc) args.data_dir = argv[++i];
    else if (!std::strcmp(argv[i], "--configs-dir") && i + 1 < argc) args.configs_dir = argv[++i];
    else if (!std::strcmp(argv[i], "--out") && i + 1 < argc) args.out_dir = argv[++i];
    else if (!std::strcmp(argv[i], "--jobs") && i + 1 < argc) args.jobs = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) args.only = std::atoi(argv[++i]);
  }
  std::filesystem::create_directories(args.out_dir);

  Benchmark bench;
  struct Criterion {
    int id;
    const char* name;
    std::function<void(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "metric oracle equivalence", [&](std::string& d) { criterion_metric_oracles(d); }},
      {2, "norm-bound property suite", [&](std::string& d) { criterion_lemma_suite(d); }},
      {3, "constraint & budget invariants", [&](std::string& d) { criterion_invariants(d); }},
      {4, "determinism", [&](std::string& d) { criterion_determinism(args, d); }},
      {5, "spill-over reproduction (Digits 8&9)",
       [&](std::string& d) { criterion_spillover(args, d); }},
      {6, "robustness decay over delta",
       [&](std::string& d) { criterion_robustness_decay(bench, args, d); }},
      {7, "phi ablation insensitivity",
       [&](std::string& d) { criterion_phi_ablation(bench, args, d); }},
      {8, "convergence trace descent", [&](std::string& d) { criterion_convergence(bench, args, d); }},
      {9, "AGA condition audit", [&](std::string& d) { criterion_aga_audit(args, d); }},
      {10, "clustering sanity", [&](std::string& d) { criterion_clustering_sanity(d); }},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (args.only != 0 && c.id != args.only) continue;
    std::string detail;
    const double t0 = now_sec();
    bool pass = true;
    try {
      c.run(detail);
    } catch (const std::exception& ex) {
      pass = false;
      detail = ex.what();
    }
    const double dt = now_sec() - t0;
    std::printf("[%s] criterion %2d: %s (%.1fs) - %s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                dt, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  if (failures) std::printf("%d criterion(s) FAILED\n", failures);
  else std::printf("all criteria passed\n");
  return failures;
}
