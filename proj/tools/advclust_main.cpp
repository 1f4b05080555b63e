// advclust: craft and evaluate black-box adversarial noise against clustering
// algorithms. Subcommands mirror the experiment layer: attack, sweep,
// spillover, ablation, convergence, cluster, metrics, audit.

#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "advclust/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int jobs = 1;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  auto* opt = cmd->add_option("--config", flags.config_path, "JSON experiment config");
  if (config_required) opt->required();
  cmd->add_option("--seed", flags.seed, "override the config master seed");
  cmd->add_option("--out", flags.out, "override the config output directory");
  cmd->add_option("--jobs", flags.jobs, "worker threads for grid runs")->check(CLI::PositiveNumber);
  cmd->add_option("--format", flags.format, "metrics output format")
      ->check(CLI::IsMember({"csv", "json"}));
}

advclust::ExperimentConfig load_with_overrides(const CommonFlags& flags) {
  advclust::ExperimentConfig cfg = advclust::load_config(flags.config_path);
  if (flags.seed) cfg.master_seed = *flags.seed;
  if (flags.out) cfg.out_dir = *flags.out;
  return cfg;
}

void print_record_summary(const advclust::RunRecord& r) {
  std::printf("clusterer=%s phi=%s delta=%s queries=%llu\n", r.clusterer.c_str(), r.phi.c_str(),
              advclust::detail::delta_text(r.delta).c_str(),
              static_cast<unsigned long long>(r.query_count));
  std::printf("final: ami=%.6f ari=%.6f frob=%.6f miss_clustered=%lld\n", r.final_ami, r.final_ari,
              r.final_frob, r.miss_clustered);
  std::printf("mask:  l0=%lld l2=%.6f linf=%.6f\n", r.norms.l0, r.norms.l2, r.norms.linf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"black-box, derivative-free adversarial attacks on clustering"};
  app.require_subcommand(1);

  CommonFlags attack_f, sweep_f, spill_f, ablation_f, convergence_f, audit_f;
  auto* attack_cmd = app.add_subcommand("attack", "run one seeded attack");
  add_common(attack_cmd, attack_f);
  auto* sweep_cmd = app.add_subcommand("sweep", "mean AMI over an (s, delta) grid");
  add_common(sweep_cmd, sweep_f);
  auto* spill_cmd = app.add_subcommand("spillover", "|T|=1 comparison table over deltas");
  add_common(spill_cmd, spill_f);
  auto* ablation_cmd = app.add_subcommand("ablation", "sweep once per phi with shared seeds");
  add_common(ablation_cmd, ablation_f);
  auto* convergence_cmd = app.add_subcommand("convergence", "best-so-far loss traces");
  add_common(convergence_cmd, convergence_f);
  auto* audit_cmd = app.add_subcommand("audit", "AGA convergence-condition report");
  add_common(audit_cmd, audit_f);

  // cluster: config file or direct flags
  CommonFlags cluster_f;
  std::string cluster_dataset, cluster_labels, cluster_kind = "kmeanspp";
  std::string cluster_similarity = "self-tuning";
  int cluster_k = 2;
  auto* cluster_cmd = app.add_subcommand("cluster", "run a clusterer and write labels");
  add_common(cluster_cmd, cluster_f, /*config_required=*/false);
  cluster_cmd->add_option("--dataset", cluster_dataset, "CSV/TSV feature matrix");
  cluster_cmd->add_option("--labels", cluster_labels, "ground-truth labels for AMI");
  cluster_cmd->add_option("--kind", cluster_kind, "kmeanspp|ward|spectral")
      ->check(CLI::IsMember({"kmeanspp", "ward", "spectral"}));
  cluster_cmd->add_option("--k", cluster_k, "cluster count");
  cluster_cmd->add_option("--similarity", cluster_similarity, "spectral similarity kind");

  // metrics: compare two label files
  std::string metrics_a, metrics_b, metrics_norm = "mean", metrics_format = "csv";
  std::optional<int> metrics_victim;
  auto* metrics_cmd = app.add_subcommand("metrics", "compare two label files");
  metrics_cmd->add_option("a", metrics_a, "first label file")->required();
  metrics_cmd->add_option("b", metrics_b, "second label file")->required();
  metrics_cmd->add_option("--ami-normalizer", metrics_norm, "mean|max|min")
      ->check(CLI::IsMember({"mean", "max", "min"}));
  metrics_cmd->add_option("--victim", metrics_victim,
                          "also count departures from this cluster of `a`");
  metrics_cmd->add_option("--format", metrics_format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*attack_cmd) {
      const auto cfg = load_with_overrides(attack_f);
      const auto out = advclust::cmd_attack(cfg);
      print_record_summary(out.record);
      std::printf("wrote %s/{record.json,poisoned.csv,mask.csv}\n", cfg.out_dir.c_str());
    } else if (*sweep_cmd) {
      const auto cfg = load_with_overrides(sweep_f);
      std::fputs(advclust::cmd_sweep(cfg, {sweep_f.jobs}).c_str(), stdout);
    } else if (*spill_cmd) {
      const auto cfg = load_with_overrides(spill_f);
      std::fputs(advclust::cmd_spillover(cfg, {spill_f.jobs}).c_str(), stdout);
    } else if (*ablation_cmd) {
      const auto cfg = load_with_overrides(ablation_f);
      std::fputs(advclust::cmd_ablation(cfg, {ablation_f.jobs}).c_str(), stdout);
    } else if (*convergence_cmd) {
      const auto cfg = load_with_overrides(convergence_f);
      std::fputs(advclust::cmd_convergence(cfg, {convergence_f.jobs}).c_str(), stdout);
    } else if (*audit_cmd) {
      const auto cfg = load_with_overrides(audit_f);
      bool all = true;
      for (const auto& [delta, report] : advclust::cmd_audit(cfg)) {
        std::printf("delta=%s\n", advclust::detail::delta_text(delta).c_str());
        for (const auto& cond : report.conditions) {
          std::printf("  [%s] %s: %s\n", cond.pass ? "pass" : "FAIL", cond.name.c_str(),
                      cond.detail.c_str());
          all = all && cond.pass;
        }
      }
      std::printf("audit: %s\n", all ? "all conditions satisfied" : "conditions violated");
    } else if (*cluster_cmd) {
      advclust::ExperimentConfig cfg;
      if (!cluster_f.config_path.empty()) {
        cfg = load_with_overrides(cluster_f);
      } else {
        cfg.dataset_path = cluster_dataset;
        if (!cluster_labels.empty()) cfg.labels_path = cluster_labels;
        advclust::Clusterer c;
        if (cluster_kind == "kmeanspp") c.kind = advclust::ClusterAlgo::kmeanspp;
        if (cluster_kind == "ward") c.kind = advclust::ClusterAlgo::ward;
        if (cluster_kind == "spectral") c.kind = advclust::ClusterAlgo::spectral;
        c.k = cluster_k;
        c.similarity = advclust::parse_similarity(cluster_similarity);
        cfg.clusterer = c;
        if (cluster_f.seed) cfg.master_seed = *cluster_f.seed;
        if (cluster_f.out) cfg.out_dir = *cluster_f.out;
      }
      const auto res = advclust::cmd_cluster(cfg);
      std::printf("k=%d\n", res.labels.k());
      if (res.silhouette_score)
        std::printf("silhouette=%.6f\n", *res.silhouette_score);
      else
        std::printf("silhouette: undefined (single cluster)\n");
      if (res.ami_vs_truth) std::printf("ami_vs_truth=%.6f\n", *res.ami_vs_truth);
      std::printf("wrote %s/labels.txt\n", cfg.out_dir.c_str());
    } else if (*metrics_cmd) {
      const auto a = advclust::load_labels(metrics_a);
      const auto b = advclust::load_labels(metrics_b);
      advclust::AmiNormalizer norm = advclust::AmiNormalizer::mean;
      if (metrics_norm == "max") norm = advclust::AmiNormalizer::max;
      if (metrics_norm == "min") norm = advclust::AmiNormalizer::min;
      const double v_ami = advclust::ami(a, b, norm);
      const double v_ari = advclust::ari(a, b);
      const double v_frob = advclust::frob_distance(a, b);
      const long long miss = advclust::miss_clustered(a, b);
      if (metrics_format == "json") {
        nlohmann::json j{{"ami", v_ami}, {"ari", v_ari}, {"frob", v_frob},
                         {"miss_clustered", miss}};
        if (metrics_victim)
          j["miss_clustered_victim"] = advclust::miss_clustered_victim(a, b, *metrics_victim);
        std::printf("%s\n", j.dump(2).c_str());
      } else {
        std::printf("ami,ari,frob,miss_clustered\n%s,%s,%s,%lld\n",
                    advclust::format_double(v_ami).c_str(),
                    advclust::format_double(v_ari).c_str(),
                    advclust::format_double(v_frob).c_str(), miss);
        if (metrics_victim)
          std::printf("miss_clustered_victim\n%lld\n",
                      advclust::miss_clustered_victim(a, b, *metrics_victim));
      }
    }
  } catch (const advclust::ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return 2;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 3;
  }
  return 0;
}
