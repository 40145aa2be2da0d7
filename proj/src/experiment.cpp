#include "csa/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "csa/checkpoint.hpp"
#include "csa/errors.hpp"

namespace csa {

namespace {

using nlohmann::json;

// Field reader that reports the dotted path of whatever went wrong.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    for (const auto& [key, _] : j_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
        throw ConfigError(field(key) + ": unknown field");
      }
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void read(const char* key, T& dst) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field(key) + ": expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(field(key) + ": expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
    }
    try {
      dst = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  const json& at(const char* key) const { return j_.at(key); }
  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

CsaConfig parse_csa(const json& j) {
  Section s(j, "csa");
  s.allow_only({"variant", "kernel_size", "conv_blocks", "use_temporal", "use_channel", "fusion",
                "location", "c_mid", "reduction"});
  CsaConfig c;
  std::string text;
  if (s.has("variant")) {
    s.read("variant", text);
    c.variant = parse_variant(text);
  }
  if (s.has("fusion")) {
    s.read("fusion", text);
    c.fusion = parse_fusion(text);
  }
  if (s.has("location")) {
    s.read("location", text);
    c.location = parse_location(text);
  }
  s.read("kernel_size", c.kernel_size);
  s.read("conv_blocks", c.conv_blocks);
  s.read("use_temporal", c.use_temporal);
  s.read("use_channel", c.use_channel);
  s.read("c_mid", c.c_mid);
  s.read("reduction", c.reduction);
  c.validate();
  return c;
}

json csa_to_json(const CsaConfig& c) {
  return {{"variant", to_string(c.variant)}, {"kernel_size", c.kernel_size},
          {"conv_blocks", c.conv_blocks},    {"use_temporal", c.use_temporal},
          {"use_channel", c.use_channel},    {"fusion", to_string(c.fusion)},
          {"location", to_string(c.location)}, {"c_mid", c.c_mid},
          {"reduction", c.reduction}};
}

TrainOptions train_options(const ExperimentConfig& cfg) {
  TrainOptions o;
  o.epochs = cfg.training.epochs;
  o.lr = cfg.training.lr;
  o.weight_decay = cfg.training.weight_decay;
  o.step_epoch = cfg.training.step_epoch;
  o.batch_size = cfg.training.batch_size;
  o.seed = cfg.training.seed;
  o.max_proposals = cfg.eval.max_proposals;
  o.d_max = cfg.eval.d_max;
  o.tiou_thresholds = cfg.eval.tiou_thresholds;
  return o;
}

std::string threshold_label(double t) { return fmt("%g", t); }

json history_line(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"val_mAP_avg", r.val_map_avg}};
}

std::string metrics_row(const std::string& name, const metrics::MapTable& map, double auc) {
  std::string row = name;
  for (double v : map.map) row += "," + fmt("%.6f", v);
  row += "," + fmt("%.6f", map.average) + "," + fmt("%.4f", auc) + "\n";
  return row;
}

std::string metrics_header(const std::vector<double>& thresholds) {
  std::string h = "method";
  for (double t : thresholds) h += "," + threshold_label(t);
  return h + ",Avg mAP,AUC\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig parse_config(const json& j) {
  Section root(j, "");
  root.allow_only({"name", "gen_spec", "model", "csa", "training", "eval", "output_dir", "sweep"});
  ExperimentConfig cfg;
  root.read("name", cfg.name);
  root.read("output_dir", cfg.output_dir);

  require(root.has("training"), "training: missing (training.seed is mandatory)");
  {
    Section s(root.at("training"), "training");
    s.allow_only({"epochs", "lr", "weight_decay", "step_epoch", "batch_size", "train_frac", "seed"});
    require(s.has("seed"), "training.seed: missing (mandatory)");
    auto& t = cfg.training;
    s.read("epochs", t.epochs);
    s.read("lr", t.lr);
    s.read("weight_decay", t.weight_decay);
    s.read("step_epoch", t.step_epoch);
    s.read("batch_size", t.batch_size);
    s.read("train_frac", t.train_frac);
    s.read("seed", t.seed);
    require(t.epochs >= 1, "training.epochs: must be at least 1");
    require(std::isfinite(t.lr) && t.lr >= 0, "training.lr: must be finite and non-negative");
    require(std::isfinite(t.weight_decay) && t.weight_decay >= 0,
            "training.weight_decay: must be finite and non-negative");
    require(t.batch_size >= 1, "training.batch_size: must be at least 1");
    require(t.train_frac > 0 && t.train_frac < 1, "training.train_frac: must be in (0, 1)");
  }

  json gen = root.has("gen_spec") ? root.at("gen_spec") : json::object();
  if (gen.is_object() && !gen.contains("seed")) gen["seed"] = cfg.training.seed;
  cfg.gen_spec = gen_spec_from_json(gen);
  cfg.model.c_in = cfg.gen_spec.channels;
  cfg.model.length = cfg.gen_spec.length;

  if (root.has("model")) {
    Section s(root.at("model"), "model");
    s.allow_only({"hidden", "C_out"});
    s.read("hidden", cfg.model.hidden);
    s.read("C_out", cfg.model.c_out);
    require(cfg.model.hidden >= 1, "model.hidden: must be positive");
    require(cfg.model.c_out >= 1, "model.C_out: must be positive");
  }
  if (root.has("csa")) cfg.csa = parse_csa(root.at("csa"));
  if (cfg.csa.variant == Variant::SE_BASELINE) {
    const std::size_t width = cfg.csa.location == Location::Start    ? cfg.model.c_in
                              : cfg.csa.location == Location::Middle ? cfg.model.hidden
                                                                     : cfg.model.c_out;
    require(width % cfg.csa.reduction == 0,
            "csa.reduction: SE needs the gated width (" + std::to_string(width) +
                ") divisible by r");
  }

  if (root.has("eval")) {
    Section s(root.at("eval"), "eval");
    s.allow_only({"tiou_thresholds", "an_values", "ar_tiou_set", "max_proposals", "d_max"});
    auto& e = cfg.eval;
    s.read("tiou_thresholds", e.tiou_thresholds);
    s.read("an_values", e.an_values);
    s.read("ar_tiou_set", e.ar_tiou_set);
    s.read("max_proposals", e.max_proposals);
    s.read("d_max", e.d_max);
    require(!e.tiou_thresholds.empty(), "eval.tiou_thresholds: must not be empty");
    for (double t : e.tiou_thresholds)
      require(t > 0 && t <= 1, "eval.tiou_thresholds: values must be in (0, 1]");
    require(!e.an_values.empty(), "eval.an_values: must not be empty");
    for (std::size_t a : e.an_values) require(a >= 1, "eval.an_values: AN must be at least 1");
    require(std::is_sorted(e.an_values.begin(), e.an_values.end()),
            "eval.an_values: must be ascending");
    require(!e.ar_tiou_set.empty(), "eval.ar_tiou_set: must not be empty");
    require(e.max_proposals >= 1, "eval.max_proposals: must be at least 1");
  }

  if (root.has("sweep")) {
    Section s(root.at("sweep"), "sweep");
    s.allow_only({"name", "runs"});
    s.read("name", cfg.sweep_name);
    require(s.has("runs") && s.at("runs").is_array() && !s.at("runs").empty(),
            "sweep.runs: expected a non-empty array");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < s.at("runs").size(); ++i) {
      Section r(s.at("runs")[i], "sweep.runs[" + std::to_string(i) + "]");
      r.allow_only({"label", "override"});
      SweepRun run;
      r.read("label", run.label);
      require(!run.label.empty(), r.field("label") + ": missing");
      require(labels.insert(run.label).second, r.field("label") + ": duplicate '" + run.label + "'");
      run.override_patch = r.has("override") ? r.at("override") : json::object();
      require(run.override_patch.is_object(), r.field("override") + ": expected an object");
      cfg.sweep.push_back(std::move(run));
    }
    if (cfg.sweep_name.empty()) cfg.sweep_name = cfg.name;
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json_file(path));
}

json to_json(const ExperimentConfig& cfg) {
  json j = {{"name", cfg.name},
            {"gen_spec", to_json(cfg.gen_spec)},
            {"model", {{"hidden", cfg.model.hidden}, {"C_out", cfg.model.c_out}}},
            {"csa", csa_to_json(cfg.csa)},
            {"training",
             {{"epochs", cfg.training.epochs},
              {"lr", cfg.training.lr},
              {"weight_decay", cfg.training.weight_decay},
              {"step_epoch", cfg.training.step_epoch},
              {"batch_size", cfg.training.batch_size},
              {"train_frac", cfg.training.train_frac},
              {"seed", cfg.training.seed}}},
            {"eval",
             {{"tiou_thresholds", cfg.eval.tiou_thresholds},
              {"an_values", cfg.eval.an_values},
              {"ar_tiou_set", cfg.eval.ar_tiou_set},
              {"max_proposals", cfg.eval.max_proposals},
              {"d_max", cfg.eval.d_max}}},
            {"output_dir", cfg.output_dir}};
  if (!cfg.sweep.empty()) {
    json runs = json::array();
    for (const auto& r : cfg.sweep) runs.push_back({{"label", r.label}, {"override", r.override_patch}});
    j["sweep"] = {{"name", cfg.sweep_name}, {"runs", runs}};
  }
  return j;
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep.empty()) return {cfg};
  json base = to_json(cfg);
  base.erase("sweep");
  std::vector<ExperimentConfig> out;
  for (const auto& run : cfg.sweep) {
    json merged = base;
    merged.merge_patch(run.override_patch);
    merged["name"] = run.label;
    try {
      out.push_back(parse_config(merged));
    } catch (const ConfigError& e) {
      throw ConfigError("sweep run '" + run.label + "': " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

json to_json(const RunReport& r) {
  json history = json::array();
  for (const auto& h : r.history) history.push_back(history_line(h));
  return {{"config", to_json(r.config)},
          {"history", history},
          {"metrics",
           {{"mAP", metrics::to_json(r.map)},
            {"AR@AN", metrics::to_json(r.ar)},
            {"AUC", r.ar.auc},
            {"conventions",
             {{"AP", "exact area under the stepwise precision/recall curve, no interpolation"},
              {"mAP_classes", "class-agnostic proposals; classes without ground truth excluded"},
              {"AR_tiou_set", r.config.eval.ar_tiou_set},
              {"AUC", "trapezoidal area under AR(AN) divided by the AN span, in percent"},
              {"units", "temporal index units"}}}}},
          {"parameter_count", r.parameter_count},
          {"attention_parameter_count", r.attention_parameter_count},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  if (!cfg.sweep.empty()) throw ConfigError("sweep: use run_sweep for configs with a sweep");
  const auto t0 = std::chrono::steady_clock::now();

  const auto videos = generate(cfg.gen_spec);
  const auto [train_set, val_set] =
      split(videos, cfg.training.train_frac, derive_seed(cfg.training.seed, 4));

  Model model(cfg.model, cfg.csa, cfg.training.seed);
  const TrainOptions opts = train_options(cfg);

  std::filesystem::create_directories(out_dir);
  RunReport report;
  report.config = cfg;
  report.history = train(model, train_set, val_set, opts);

  const Evaluation ev = evaluate(model, val_set, opts);
  report.map = ev.map;
  report.ar = metrics::ar_at_an(ev.detections, ev.ground_truth, cfg.eval.an_values,
                                cfg.eval.ar_tiou_set);
  report.parameter_count = model.parameter_count();
  report.attention_parameter_count = model.attention_parameter_count();
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::string history;
  for (const auto& h : report.history) history += history_line(h).dump() + "\n";
  const json report_json = to_json(report);
  write_file(out_dir / "report.json", report_json.dump(2) + "\n");
  write_file(out_dir / "history.jsonl", history);
  write_file(out_dir / "metrics.csv",
             metrics_header(report.map.thresholds) + metrics_row(cfg.name, report.map, report.ar.auc));
  write_file(out_dir / "losses.csv", losses_csv({report_json}));
  save_checkpoint(out_dir / "checkpoint.json", model.named_parameters());
  return report;
}

std::vector<RunReport> run_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                 std::size_t jobs) {
  const auto configs = expand_sweep(cfg);
  std::vector<RunReport> reports(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::filesystem::create_directories(out_dir);

  auto run_one = [&](std::size_t i) {
    try {
      reports[i] = run_experiment(configs[i], out_dir / slug(configs[i].name));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (jobs <= 1 || configs.size() == 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(jobs, configs.size()); ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(m);
            if (next >= configs.size()) return;
            i = next++;
          }
          run_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (!cfg.sweep.empty()) {
    std::vector<json> docs;
    for (const auto& r : reports) docs.push_back(to_json(r));
    const std::string name = slug(cfg.sweep_name.empty() ? cfg.name : cfg.sweep_name);
    write_file(out_dir / (name + ".csv"), comparison_csv(docs));
    write_file(out_dir / (name + "_losses.csv"), losses_csv(docs));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Comparison

std::string comparison_csv(const std::vector<json>& reports) {
  if (reports.empty()) throw ComparisonError("nothing to compare");
  std::vector<double> thresholds;
  std::string body;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const json& r = reports[i];
    try {
      const auto& map = r.at("metrics").at("mAP");
      const auto th = map.at("thresholds").get<std::vector<double>>();
      if (i == 0) {
        thresholds = th;
      } else if (th != thresholds) {
        throw ComparisonError("report " + std::to_string(i) +
                              " uses different tIoU thresholds than report 0");
      }
      metrics::MapTable t;
      t.thresholds = th;
      t.map = map.at("mAP").get<std::vector<double>>();
      t.average = map.at("avg_mAP").get<double>();
      body += metrics_row(r.at("config").at("name").get<std::string>(), t,
                          r.at("metrics").at("AUC").get<double>());
    } catch (const json::exception& e) {
      throw ComparisonError("report " + std::to_string(i) + " is malformed: " + e.what());
    }
  }
  return metrics_header(thresholds) + body;
}

std::string losses_csv(const std::vector<json>& reports) {
  std::string out = "run,epoch,train_loss,val_loss\n";
  for (const auto& r : reports) {
    const std::string name = r.at("config").at("name").get<std::string>();
    for (const auto& h : r.at("history")) {
      out += name + "," + std::to_string(h.at("epoch").get<std::size_t>()) + "," +
             fmt("%.8f", h.at("train_loss").get<double>()) + "," +
             fmt("%.8f", h.at("val_loss").get<double>()) + "\n";
    }
  }
  return out;
}

void compare_reports(const std::vector<std::filesystem::path>& reports,
                     const std::filesystem::path& out_dir) {
  if (reports.size() < 2) throw ComparisonError("compare needs at least two reports");
  std::vector<json> docs;
  for (auto p : reports) {
    if (std::filesystem::is_directory(p)) p /= "report.json";
    docs.push_back(read_json_file(p));
  }
  const std::string table = comparison_csv(docs);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "comparison.csv", table);
  write_file(out_dir / "losses.csv", losses_csv(docs));
}

std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      out += c;
    } else if (c == '=') {
      out += '-';
    } else {
      out += '_';
    }
  }
  return out.empty() ? "run" : out;
}

}  // namespace csa
