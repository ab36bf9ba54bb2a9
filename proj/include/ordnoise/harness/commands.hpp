#pragma once

// The experiment harness behind the command-line tool: data generation,
// the method x fold x seed grid, and plotting of finished runs.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ordnoise/dataset.hpp"
#include "ordnoise/error.hpp"
#include "ordnoise/harness/config.hpp"
#include "ordnoise/harness/io.hpp"
#include "ordnoise/harness/svg.hpp"
#include "ordnoise/metrics.hpp"
#include "ordnoise/noise.hpp"
#include "ordnoise/trainers.hpp"

namespace ordnoise::harness {

namespace fs = std::filesystem;

enum ExitCode : int { kSuccess = 0, kConfigError = 1, kAllFailed = 2, kPartialFailure = 3 };

// Clean dataset with noisy labels attached to every sample. Only the train
// and validation positions of a fold ever expose the noisy labels; test
// views read clean labels.
struct PreparedData {
  Dataset dataset;
  TransitionMatrix transition = TransitionMatrix::identity(2);
  NoiseReport report;
};

// Builds the dataset, resolves noise settings against it and injects noise.
inline PreparedData prepare_data(ExperimentConfig& cfg) {
  PreparedData out{build_dataset(cfg.dataset), TransitionMatrix::identity(2), {}};
  if (out.dataset.num_classes != cfg.dataset.num_classes && cfg.dataset.source == "synthetic")
    throw ConfigError("dataset class count mismatch");
  resolve_noise(cfg, out.dataset);
  out.transition = make_transition_matrix(cfg.noise.family, out.dataset.num_classes, *cfg.noise.rho);
  const auto clean = out.dataset.clean_labels();
  auto inj = inject_noise(clean, out.transition, cfg.noise.seed);
  out.dataset.set_noisy_labels(inj.noisy_labels);
  out.report = std::move(inj.report);
  return out;
}

inline TrainingData make_training_data(const Dataset& ds, const Fold& fold) {
  TrainingData d{make_noisy_view(ds, fold.train), std::nullopt, make_clean_view(ds, fold.test),
                 CleanFlags(ds, fold.train)};
  if (!fold.validation.empty()) d.validation = make_noisy_view(ds, fold.validation);
  return d;
}

inline json noise_report_json(const NoiseReport& r) {
  return {{"expected_rate", r.requested_rate},   {"realized_flip_fraction", r.realized_flip_fraction},
          {"total", r.total},                    {"flipped", r.flipped},
          {"flips_per_class", r.flips_per_class}, {"samples_per_class", r.samples_per_class}};
}

inline void log_line(const std::string& msg) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << msg << '\n';
}

// ---------------------------------------------------------------- gen-data

inline int cmd_gen_data(ExperimentConfig cfg, const fs::path& out_dir, std::ostream& out = std::cout) {
  auto data = prepare_data(cfg);
  const std::string hash = config_hash(cfg);
  std::ostringstream ds, side, mat;
  write_dataset_csv(ds, data.dataset);
  write_noise_sidecar(side, data.dataset);
  write_csv(mat, data.transition);
  write_file_atomic(out_dir / "dataset.csv", ds.str());
  write_file_atomic(out_dir / "noise_sidecar.csv", side.str());
  write_file_atomic(out_dir / "transition_matrix.csv", mat.str());
  json manifest = {{"config_hash", hash}, {"config", to_json(cfg)}, {"noise", noise_report_json(data.report)}};
  write_file_atomic(out_dir / "gen_data.json", manifest.dump(2) + "\n");
  out << "samples: " << data.dataset.size() << ", classes: " << data.dataset.num_classes << '\n';
  out << "noise: " << to_string(cfg.noise.family) << " rho=" << format_number(*cfg.noise.rho) << '\n';
  out << "expected noise rate: " << format_number(data.report.requested_rate) << '\n';
  out << "realized noise rate: " << format_number(data.report.realized_flip_fraction) << " ("
      << data.report.flipped << '/' << data.report.total << ")\n";
  return kSuccess;
}

// --------------------------------------------------------------------- run

struct Cell {
  std::size_t method_index = 0;
  int fold = 0;
  std::uint64_t seed = 0;
};

struct CellResult {
  bool ok = false;
  std::string error;
  MetricSummary summary;
};

inline std::string cell_id(const MethodEntry& m, const Cell& c) {
  return m.name + "__f" + std::to_string(c.fold) + "__s" + std::to_string(c.seed);
}

inline std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<int> folds = cfg.split.run_folds;
  if (folds.empty())
    for (int f = 0; f < cfg.split.folds; ++f) folds.push_back(f);
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < cfg.methods.size(); ++m)
    for (int f : folds)
      for (std::uint64_t s : cfg.seeds) cells.push_back({m, f, s});
  return cells;
}

// Runs `task(i)` for i in [0, n) on at most `jobs` threads.
inline void run_pool(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(jobs), 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) task(i);
  };
  if (workers == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> threads;
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
}

inline std::string grid_header() {
  return "method,selection_label,update_label,noise_family,epsilon,fold,seed,acc,mae,mf1,label_precision\n";
}

inline std::string method_columns(const MethodEntry& m, const ExperimentConfig& cfg) {
  const auto& c = m.config;
  const bool dual = is_dual_network(c.method);
  return m.name + ',' + (dual ? std::string(to_string(c.selection_label)) : std::string()) + ',' +
         std::string(to_string(c.update_label)) + ',' + std::string(to_string(cfg.noise.family)) + ',' +
         format_number(*cfg.noise.epsilon);
}

inline CellResult run_cell(const ExperimentConfig& cfg, const std::string& hash, const PreparedData& data,
                           const SplitPlan& plan, const Cell& cell, const fs::path& out_dir) {
  CellResult res;
  const auto& entry = cfg.methods[cell.method_index];
  try {
    MethodConfig mc = entry.config;
    mc.seed = derive_seed(cell.seed, "cell", static_cast<std::uint64_t>(cell.fold));
    const auto td = make_training_data(data.dataset, plan.folds[static_cast<std::size_t>(cell.fold)]);
    const RunTrace trace = train(mc, td);
    if (trace.epochs.empty()) throw EmptyTraceError("run produced no epochs");
    res.summary = trace.summary(cfg.last_k);
    const fs::path dir = out_dir / "runs" / cell_id(entry, cell);
    write_file_atomic(dir / "epochs.csv", epochs_csv(trace.epochs, hash));
    json s = {{"config_hash", hash},
              {"method_index", cell.method_index},
              {"method", method_to_json(entry)},
              {"fold", cell.fold},
              {"seed", cell.seed},
              {"noise_family", to_string(cfg.noise.family)},
              {"epsilon", *cfg.noise.epsilon},
              {"rho", *cfg.noise.rho},
              {"epochs", trace.epochs.size()},
              {"last_k", cfg.last_k},
              {"accuracy", res.summary.accuracy},
              {"mae", res.summary.mae},
              {"macro_f1", res.summary.macro_f1},
              {"label_precision", res.summary.label_precision ? json(*res.summary.label_precision) : json(nullptr)}};
    write_file_atomic(dir / "summary.json", s.dump(2) + "\n");
    res.ok = true;
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

inline std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

inline int cmd_run(ExperimentConfig cfg, const fs::path& out_dir, int jobs, std::ostream& out = std::cout) {
  auto data = prepare_data(cfg);
  const std::string hash = config_hash(cfg);
  const SplitPlan plan = make_folds(data.dataset, cfg.split.folds, cfg.split.seed);

  fs::create_directories(out_dir);
  json resolved = to_json(cfg);
  resolved["config_hash"] = hash;
  write_file_atomic(out_dir / "resolved_config.json", resolved.dump(2) + "\n");
  json noise = noise_report_json(data.report);
  noise["config_hash"] = hash;
  noise["rho"] = *cfg.noise.rho;
  noise["family"] = to_string(cfg.noise.family);
  write_file_atomic(out_dir / "noise_report.json", noise.dump(2) + "\n");
  std::ostringstream mat;
  write_csv(mat, data.transition);
  write_file_atomic(out_dir / "transition_matrix.csv", mat.str());

  const auto cells = enumerate_cells(cfg);
  std::vector<CellResult> results(cells.size());
  const int workers = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> done{0};
  run_pool(cells.size(), workers, [&](std::size_t i) {
    results[i] = run_cell(cfg, hash, data, plan, cells[i], out_dir);
    const std::string id = cell_id(cfg.methods[cells[i].method_index], cells[i]);
    log_line("[" + std::to_string(++done) + "/" + std::to_string(cells.size()) + "] " + id +
             (results[i].ok ? " ok" : " FAILED: " + results[i].error));
  });

  std::string grid = hash_comment(hash) + grid_header();
  std::size_t failures = 0;
  std::map<std::size_t, std::vector<MetricSummary>> per_method;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& m = cfg.methods[c.method_index];
    const auto& r = results[i];
    if (!r.ok) {
      ++failures;
      grid += "# error," + m.name + ",fold=" + std::to_string(c.fold) + ",seed=" + std::to_string(c.seed) + "," +
              csv_safe(r.error) + "\n";
      continue;
    }
    per_method[c.method_index].push_back(r.summary);
    grid += method_columns(m, cfg) + ',' + std::to_string(c.fold) + ',' + std::to_string(c.seed) + ',' +
            format_number(r.summary.accuracy) + ',' + format_number(r.summary.mae) + ',' +
            format_number(r.summary.macro_f1) + ',' + format_optional(r.summary.label_precision) + '\n';
  }
  write_file_atomic(out_dir / "grid.csv", grid);

  std::string summary = hash_comment(hash) +
                        "method,selection_label,update_label,noise_family,epsilon,runs,acc_mean,acc_std,mae_mean,"
                        "mae_std,mf1_mean,mf1_std,label_precision_mean,label_precision_std\n";
  for (const auto& [mi, runs] : per_method) {
    const auto row = aggregate_folds(runs);
    summary += method_columns(cfg.methods[mi], cfg) + ',' + std::to_string(row.fold_count) + ',' +
               format_number(row.accuracy.mean) + ',' + format_number(row.accuracy.std) + ',' +
               format_number(row.mae.mean) + ',' + format_number(row.mae.std) + ',' +
               format_number(row.macro_f1.mean) + ',' + format_number(row.macro_f1.std) + ',' +
               (row.label_precision ? format_number(row.label_precision->mean) + ',' +
                                          format_number(row.label_precision->std)
                                    : std::string(",")) +
               '\n';
  }
  write_file_atomic(out_dir / "summary.csv", summary);

  out << "config hash " << hash << ": " << cells.size() - failures << '/' << cells.size() << " cells succeeded\n";
  if (failures == 0) return kSuccess;
  return failures == cells.size() ? kAllFailed : kPartialFailure;
}

// -------------------------------------------------------------------- plot

struct PlotRun {
  std::size_t method_index = 0;
  std::string method;
  std::string family;
  double epsilon = 0.0;
  std::string hash;
  std::vector<EpochRow> rows;
};

inline std::vector<PlotRun> load_runs(const fs::path& results_dir) {
  const fs::path runs_dir = results_dir / "runs";
  if (!fs::is_directory(runs_dir)) throw IoError("no runs directory under " + results_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(runs_dir))
    if (e.is_directory() && fs::exists(e.path() / "epochs.csv") && fs::exists(e.path() / "summary.json"))
      dirs.push_back(e.path());
  if (dirs.empty()) throw IoError("no per-epoch CSVs under " + runs_dir.string());
  std::sort(dirs.begin(), dirs.end());
  std::vector<PlotRun> runs;
  for (const auto& d : dirs) {
    json s;
    try {
      s = json::parse(read_file(d / "summary.json"));
      PlotRun r;
      r.method_index = s.at("method_index").get<std::size_t>();
      r.method = s.at("method").at("name").get<std::string>();
      r.family = s.at("noise_family").get<std::string>();
      r.epsilon = s.at("epsilon").get<double>();
      r.hash = s.at("config_hash").get<std::string>();
      r.rows = parse_epochs_csv(read_file(d / "epochs.csv"));
      runs.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw IoError("malformed " + (d / "summary.json").string() + ": " + e.what());
    }
  }
  return runs;
}

struct PlotMetric {
  const char* key;
  const char* label;
  std::function<std::optional<double>(const EpochRow&)> get;
};

inline int cmd_plot(const fs::path& results_dir, const fs::path& plot_dir, std::ostream& out = std::cout) {
  const auto runs = load_runs(results_dir);
  const std::vector<PlotMetric> metrics = {
      {"accuracy", "test accuracy", [](const EpochRow& r) { return std::optional<double>(r.acc_mean); }},
      {"mae", "test MAE", [](const EpochRow& r) { return std::optional<double>(r.mae_mean); }},
      {"macro_f1", "test macro-F1", [](const EpochRow& r) { return std::optional<double>(r.mf1_mean); }},
      {"label_precision", "label precision", [](const EpochRow& r) { return r.label_precision; }},
  };

  std::map<std::pair<std::string, double>, std::map<std::pair<std::size_t, std::string>, std::vector<const PlotRun*>>>
      settings;
  for (const auto& r : runs) settings[{r.family, r.epsilon}][{r.method_index, r.method}].push_back(&r);

  std::size_t written = 0;
  for (const auto& [setting, methods] : settings) {
    const auto& [family, eps] = setting;
    for (const auto& metric : metrics) {
      Chart chart;
      chart.title = std::string(metric.label) + " (" + family + ", epsilon=" + format_number(eps) + ")";
      chart.y_label = metric.label;
      chart.comment = "config_hash=" + methods.begin()->second.front()->hash;
      for (const auto& [key, group] : methods) {
        std::size_t len = group.front()->rows.size();
        for (const auto* r : group) len = std::min(len, r->rows.size());
        ChartSeries s;
        s.name = key.second;
        bool usable = len > 0;
        for (std::size_t e = 0; e < len && usable; ++e) {
          std::vector<double> vals;
          for (const auto* r : group) {
            const auto v = metric.get(r->rows[e]);
            if (!v) {
              usable = false;
              break;
            }
            vals.push_back(*v);
          }
          if (!usable) break;
          const auto ms = mean_std(vals);
          s.x.push_back(group.front()->rows[e].epoch);
          s.y.push_back(ms.mean);
          if (group.size() > 1) s.spread.push_back(ms.std);
        }
        if (usable) chart.series.push_back(std::move(s));
      }
      if (chart.series.empty()) continue;
      if (std::string(metric.key) == "label_precision") chart.references.push_back({1.0 - eps, "1 - epsilon"});
      const fs::path file = plot_dir / (std::string(metric.key) + "_" + family + "_eps" + format_number(eps) + ".svg");
      write_file_atomic(file, render_svg(chart));
      out << "wrote " << file.string() << '\n';
      ++written;
    }
  }
  if (written == 0) throw IoError("nothing to plot");
  return kSuccess;
}

// --------------------------------------------------------- validate-config

inline int cmd_validate_config(ExperimentConfig cfg, std::ostream& out = std::cout) {
  auto data = prepare_data(cfg);
  json resolved = to_json(cfg);
  resolved["config_hash"] = config_hash(cfg);
  out << resolved.dump(2) << '\n';
  (void)data;
  return kSuccess;
}

}  // namespace ordnoise::harness
