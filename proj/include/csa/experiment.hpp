#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/attention.hpp"
#include "csa/pipeline.hpp"
#include "csa/synthdata.hpp"

namespace csa {

struct EvalConfig {
  std::vector<double> tiou_thresholds = metrics::thumos_thresholds();
  std::vector<std::size_t> an_values = metrics::default_an_values();
  std::vector<double> ar_tiou_set = metrics::activitynet_thresholds();
  std::size_t max_proposals = 100;
  std::size_t d_max = 0;  // 0 means T / 2
  bool operator==(const EvalConfig&) const = default;
};

struct TrainingConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t step_epoch = 7;
  std::size_t batch_size = 16;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
  bool operator==(const TrainingConfig&) const = default;
};

struct SweepRun {
  std::string label;
  nlohmann::json override_patch;  // RFC 7396 merge patch over the base config
  bool operator==(const SweepRun&) const = default;
};

struct ExperimentConfig {
  std::string name = "run";
  GenSpec gen_spec;
  ModelShape model;
  CsaConfig csa;
  TrainingConfig training;
  EvalConfig eval;
  std::string output_dir;
  // Present only on sweep configs; expanded by expand_sweep.
  std::string sweep_name;
  std::vector<SweepRun> sweep;

  bool operator==(const ExperimentConfig&) const = default;
};

// Parses and validates. Unknown fields and bad values raise ConfigError with
// the dotted field path. training.seed is mandatory; gen_spec.seed defaults
// to it.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

// One config per sweep entry (base merged with the entry's patch, name set to
// the entry label). A config without a sweep yields itself.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg);

struct RunReport {
  ExperimentConfig config;
  std::vector<EpochRecord> history;
  metrics::MapTable map;
  metrics::ArCurve ar;
  std::size_t parameter_count = 0;
  std::size_t attention_parameter_count = 0;
  double wall_clock_seconds = 0.0;
};

nlohmann::json to_json(const RunReport& r);

// Trains and evaluates one config and writes report.json, history.jsonl,
// metrics.csv, losses.csv and checkpoint.json into out_dir.
RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Runs every expanded config of a sweep in its own subdirectory (jobs > 1
// runs them on worker threads) and writes <sweep_name>.csv with one row per
// run in sweep order. Returns the reports in sweep order.
std::vector<RunReport> run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 std::size_t jobs = 1);

// Aligned table: one row per report (input order), columns = thresholds,
// "Avg mAP", "AUC". Throws ComparisonError if thresholds differ.
std::string comparison_csv(const std::vector<nlohmann::json>& reports);
// Per-epoch losses: run,epoch,train_loss,val_loss.
std::string losses_csv(const std::vector<nlohmann::json>& reports);

// Loads each report (a report.json path or a directory holding one) and
// writes comparison.csv and losses.csv into out_dir.
void compare_reports(const std::vector<std::filesystem::path>& reports,
                     const std::filesystem::path& out_dir);

// Filesystem-safe form of a run label.
std::string slug(const std::string& label);

}  // namespace csa
