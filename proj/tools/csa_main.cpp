// Command-line experiment runner.
//
//   csa run --config <path> --out <dir> [--seed N] [--jobs N]
//   csa compare <report...> --out <dir>
//   csa gradcheck --seed <n> [--seeds 20]
//   csa generate --config <path> --out <file>
//   csa evaluate --detections <json> --ground-truth <json> [--tiou ...]
//
// Exit codes: 0 success, 1 failure, 2 invalid config or arguments,
// 3 training divergence.

#include <cstdio>
#include <fstream>
#include <optional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "csa/errors.hpp"
#include "csa/experiment.hpp"
#include "csa/gradcheck.hpp"
#include "csa/metrics.hpp"
#include "csa/synthdata.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw csa::ConfigError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw csa::ConfigError(path + ": " + e.what());
  }
}

int cmd_run(const std::string& config_path, std::string out, const std::optional<std::uint64_t>& seed,
            std::size_t jobs) {
  nlohmann::json raw = read_json(config_path);
  if (seed) {
    if (!raw.is_object()) throw csa::ConfigError("config: expected an object");
    raw["training"]["seed"] = *seed;
  }
  const csa::ExperimentConfig cfg = csa::parse_config(raw);
  if (out.empty()) out = cfg.output_dir;
  if (out.empty()) throw csa::ConfigError("output_dir: missing (pass --out or set output_dir)");

  if (!cfg.sweep.empty()) {
    const auto reports = csa::run_sweep(cfg, out, jobs);
    for (const auto& r : reports) {
      std::printf("%-24s avg mAP %.4f  AUC %.2f  params %zu\n", r.config.name.c_str(),
                  r.map.average, r.ar.auc, r.parameter_count);
    }
    return 0;
  }
  const auto r = csa::run_experiment(cfg, out);
  for (const auto& h : r.history) {
    std::printf("epoch %2zu  train %.5f  val %.5f  val mAP %.4f\n", h.epoch, h.train_loss,
                h.val_loss, h.val_map_avg);
  }
  std::printf("avg mAP %.4f  AUC %.2f  params %zu (attention %zu)  %.1fs\n", r.map.average,
              r.ar.auc, r.parameter_count, r.attention_parameter_count, r.wall_clock_seconds);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds) {
  const auto results = csa::run_gradcheck_suite(seed, seeds);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-4s %-26s max rel err %.3e  (%zu probes, %zu at kinks)\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.max_rel_error, r.entries, r.kink_skipped);
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_generate(const std::string& config_path, const std::string& out) {
  nlohmann::json raw = read_json(config_path);
  // Accepts either a bare gen_spec or a full experiment config.
  const csa::GenSpec spec = raw.contains("training") ? csa::parse_config(raw).gen_spec
                                                     : csa::gen_spec_from_json(raw);
  csa::save_dataset(out, spec, csa::generate(spec));
  return 0;
}

int cmd_evaluate(const std::string& dets_path, const std::string& gts_path,
                 std::vector<double> thresholds) {
  const auto dets = csa::metrics::detections_from_json(read_json(dets_path));
  const auto gts = csa::metrics::ground_truth_from_json(read_json(gts_path));
  if (thresholds.empty()) thresholds = csa::metrics::thumos_thresholds();
  const auto table = csa::metrics::map_at_tious(dets, gts, thresholds);
  const auto ar = csa::metrics::ar_at_an(dets, gts, csa::metrics::default_an_values(),
                                         csa::metrics::activitynet_thresholds());
  std::printf("method");
  for (double t : thresholds) std::printf(",%g", t);
  std::printf(",Avg mAP,AUC\ndetections");
  for (double v : table.map) std::printf(",%.6f", v);
  std::printf(",%.6f,%.4f\n", table.average, ar.auc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-semantics attention experiments on synthetic temporal detection data"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Train and evaluate one config (or a sweep)");
  std::string config_path, out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (defaults to output_dir)");
  run->add_option("--seed", seed, "Override training.seed");
  run->add_option("--jobs", jobs, "Parallel runs for sweep configs")->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "Align several reports into one table");
  std::vector<std::string> reports;
  std::string compare_out;
  compare->add_option("reports", reports, "report.json files or run directories")->required();
  compare->add_option("--out", compare_out, "Output directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 20;
  gradcheck->add_option("--seed", gc_seed, "Base seed")->required();
  gradcheck->add_option("--seeds", gc_seeds, "Seeds per case");

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset as JSON");
  std::string gen_config, gen_out;
  generate->add_option("--config", gen_config, "gen_spec or experiment config")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", gen_out, "Dataset file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "mAP and AR@AN for JSON detections");
  std::string dets_path, gts_path;
  std::vector<double> tious;
  evaluate->add_option("--detections", dets_path, "Detections JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ground-truth", gts_path, "Ground truth JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--tiou", tious, "tIoU thresholds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, out, seed, jobs);
    if (*compare) {
      std::vector<std::filesystem::path> paths(reports.begin(), reports.end());
      csa::compare_reports(paths, compare_out);
      return 0;
    }
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_seeds);
    if (*generate) return cmd_generate(gen_config, gen_out);
    if (*evaluate) return cmd_evaluate(dets_path, gts_path, tious);
  } catch (const csa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const csa::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
