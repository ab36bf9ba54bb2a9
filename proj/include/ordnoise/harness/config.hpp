#pragma once

// Experiment configuration: strict JSON schema, defaults, resolution and the
// resolved-config hash. The schema is documented in docs/config.md.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ordnoise/dataset.hpp"
#include "ordnoise/error.hpp"
#include "ordnoise/noise.hpp"
#include "ordnoise/trainers.hpp"

namespace ordnoise::harness {

using nlohmann::json;

struct DatasetBlock {
  std::string source = "synthetic";  // synthetic | csv
  std::string path;                  // csv only
  int num_classes = 4;
  int dim = 2;
  std::string preset = "uniform";  // uniform | limuc | custom
  int samples_per_class = 500;     // uniform preset
  std::vector<int> counts;         // custom preset
  double spacing = 1.0;
  double feature_scale = 0.6;
  std::uint64_t seed = 0;
};

struct NoiseBlock {
  NoiseFamily family = NoiseFamily::quasi_gaussian;
  std::optional<double> rho;
  std::optional<double> target_rate;  // calibrate rho to hit this expected rate
  std::optional<double> epsilon;      // nominal rate reported and used as the schedule default
  std::uint64_t seed = 0;
};

struct SplitBlock {
  int folds = 5;
  std::uint64_t seed = 0;
  std::vector<int> run_folds;  // empty = every fold
};

struct MethodEntry {
  std::string name;
  MethodConfig config;
  bool noise_rate_set = false;  // whether the entry or training block fixed epsilon
};

struct ExperimentConfig {
  DatasetBlock dataset;
  NoiseBlock noise;
  SplitBlock split;
  std::vector<MethodEntry> methods;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "results";
  int jobs = 0;  // 0 = hardware concurrency
  int last_k = 10;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& block) {
  if (!obj.is_object()) throw ConfigError("block '" + block + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in block '" + block + "'");
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& block) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + block + "." + key + "': " + e.what());
  }
}

template <typename T>
void maybe(const json& obj, const std::string& key, const std::string& block, T& out) {
  if (obj.contains(key)) out = get<T>(obj, key, block);
}

inline std::uint64_t get_seed(const json& obj, const std::string& key, const std::string& block) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError("'" + block + "." + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline const std::set<std::string>& method_keys() {
  static const std::set<std::string> keys = {
      "name",           "method",        "selection_label", "update_label",  "temperature",
      "lambda",         "noise_rate",    "warmup_epochs",   "max_epochs",    "batch_size",
      "learning_rate",  "weight_decay",  "lr_milestones",   "lr_gamma",      "smoothing",
      "hidden",         "jocor_divergence_in_selection",    "identical_init"};
  return keys;
}

// Applies keys present in `obj` over `cfg`.
inline bool apply_method_fields(const json& obj, const std::string& block, MethodConfig& cfg) {
  bool noise_rate_set = false;
  if (obj.contains("method")) cfg.method = parse_method(get<std::string>(obj, "method", block));
  try {
    if (obj.contains("selection_label"))
      cfg.selection_label = parse_label_kind(get<std::string>(obj, "selection_label", block));
    if (obj.contains("update_label")) cfg.update_label = parse_label_kind(get<std::string>(obj, "update_label", block));
  } catch (const InvalidParameterError& e) {
    throw ConfigError(block + ": " + e.what());
  }
  maybe(obj, "temperature", block, cfg.temperature);
  maybe(obj, "lambda", block, cfg.lambda);
  if (obj.contains("noise_rate")) {
    cfg.noise_rate = get<double>(obj, "noise_rate", block);
    noise_rate_set = true;
  }
  maybe(obj, "warmup_epochs", block, cfg.warmup_epochs);
  maybe(obj, "max_epochs", block, cfg.max_epochs);
  maybe(obj, "batch_size", block, cfg.batch_size);
  maybe(obj, "learning_rate", block, cfg.learning_rate);
  maybe(obj, "weight_decay", block, cfg.weight_decay);
  maybe(obj, "lr_milestones", block, cfg.lr_milestones);
  maybe(obj, "lr_gamma", block, cfg.lr_gamma);
  maybe(obj, "smoothing", block, cfg.smoothing);
  maybe(obj, "hidden", block, cfg.hidden);
  maybe(obj, "jocor_divergence_in_selection", block, cfg.jocor_divergence_in_selection);
  maybe(obj, "identical_init", block, cfg.identical_init);
  return noise_rate_set;
}

inline std::string default_method_name(const MethodConfig& c) {
  if (is_dual_network(c.method))
    return std::string(to_string(c.method)) + "_" + std::string(to_string(c.selection_label)) + "_" +
           std::string(to_string(c.update_label));
  return std::string(to_string(c.method));
}

}  // namespace detail

// Batch size 64, 150 epochs, temperature 0.1 and T' = 5 follow the reference
// experimental protocol; the learning rate suits the small MLP.
inline MethodConfig default_method_config() {
  MethodConfig c;
  c.batch_size = 64;
  c.max_epochs = 150;
  c.temperature = 0.1;
  c.warmup_epochs = 5;
  c.learning_rate = 1e-3;
  return c;
}

inline ExperimentConfig parse_config(const json& root) {
  detail::reject_unknown(root, {"dataset", "noise", "split", "training", "methods", "seeds", "output_dir", "jobs",
                                "last_k"},
                         "root");
  ExperimentConfig cfg;

  if (root.contains("dataset")) {
    const auto& d = root["dataset"];
    detail::reject_unknown(d, {"source", "path", "num_classes", "dim", "preset", "samples_per_class", "counts",
                               "spacing", "feature_scale", "seed"},
                           "dataset");
    auto& b = cfg.dataset;
    detail::maybe(d, "source", "dataset", b.source);
    detail::maybe(d, "path", "dataset", b.path);
    detail::maybe(d, "num_classes", "dataset", b.num_classes);
    detail::maybe(d, "dim", "dataset", b.dim);
    detail::maybe(d, "preset", "dataset", b.preset);
    detail::maybe(d, "samples_per_class", "dataset", b.samples_per_class);
    detail::maybe(d, "counts", "dataset", b.counts);
    detail::maybe(d, "spacing", "dataset", b.spacing);
    detail::maybe(d, "feature_scale", "dataset", b.feature_scale);
    if (d.contains("seed")) b.seed = detail::get_seed(d, "seed", "dataset");
    if (d.contains("counts") && !d.contains("preset")) b.preset = "custom";
    if (b.source != "synthetic" && b.source != "csv")
      throw ConfigError("dataset.source must be 'synthetic' or 'csv'");
    if (b.source == "csv" && b.path.empty()) throw ConfigError("dataset.path is required for csv source");
    if (b.preset != "uniform" && b.preset != "limuc" && b.preset != "custom")
      throw ConfigError("dataset.preset must be uniform, limuc or custom");
    if (b.preset == "custom" && b.counts.size() != static_cast<std::size_t>(b.num_classes))
      throw ConfigError("dataset.counts must list one count per class");
    if (b.preset == "limuc" && b.num_classes != 4) throw ConfigError("limuc preset has 4 classes");
    if (b.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (b.dim < 1) throw ConfigError("dataset.dim must be >= 1");
    if (b.samples_per_class < 1) throw ConfigError("dataset.samples_per_class must be >= 1");
    if (!(b.spacing > 0.0) || !(b.feature_scale > 0.0))
      throw ConfigError("dataset.spacing and dataset.feature_scale must be > 0");
  }

  if (root.contains("noise")) {
    const auto& n = root["noise"];
    detail::reject_unknown(n, {"family", "rho", "target_rate", "epsilon", "seed"}, "noise");
    auto& b = cfg.noise;
    if (n.contains("family")) {
      try {
        b.family = parse_noise_family(detail::get<std::string>(n, "family", "noise"));
      } catch (const InvalidParameterError& e) {
        throw ConfigError(e.what());
      }
    }
    if (n.contains("rho")) b.rho = detail::get<double>(n, "rho", "noise");
    if (n.contains("target_rate")) b.target_rate = detail::get<double>(n, "target_rate", "noise");
    if (n.contains("epsilon")) b.epsilon = detail::get<double>(n, "epsilon", "noise");
    if (n.contains("seed")) b.seed = detail::get_seed(n, "seed", "noise");
    if (b.rho && b.target_rate) throw ConfigError("noise: give either rho or target_rate, not both");
    if (b.rho && *b.rho < 0.0) throw ConfigError("noise.rho must be >= 0");
    if (b.target_rate && !(*b.target_rate >= 0.0 && *b.target_rate < 1.0))
      throw ConfigError("noise.target_rate must lie in [0, 1)");
    if (b.epsilon && !(*b.epsilon >= 0.0 && *b.epsilon < 1.0)) throw ConfigError("noise.epsilon must lie in [0, 1)");
  }

  if (root.contains("split")) {
    const auto& s = root["split"];
    detail::reject_unknown(s, {"folds", "seed", "run_folds"}, "split");
    detail::maybe(s, "folds", "split", cfg.split.folds);
    if (s.contains("seed")) cfg.split.seed = detail::get_seed(s, "seed", "split");
    detail::maybe(s, "run_folds", "split", cfg.split.run_folds);
    if (cfg.split.folds < 2) throw ConfigError("split.folds must be >= 2");
    for (int f : cfg.split.run_folds)
      if (f < 0 || f >= cfg.split.folds) throw ConfigError("split.run_folds entry out of range");
  }

  MethodConfig base = default_method_config();
  bool base_noise_rate = false;
  if (root.contains("training")) {
    auto keys = detail::method_keys();
    keys.erase("name");
    keys.erase("method");
    detail::reject_unknown(root["training"], keys, "training");
    base_noise_rate = detail::apply_method_fields(root["training"], "training", base);
  }

  if (!root.contains("methods")) throw ConfigError("'methods' list is required");
  const auto& ms = root["methods"];
  if (!ms.is_array() || ms.empty()) throw ConfigError("'methods' must be a non-empty list");
  std::set<std::string> names;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const std::string block = "methods[" + std::to_string(i) + "]";
    detail::reject_unknown(ms[i], detail::method_keys(), block);
    if (!ms[i].contains("method")) throw ConfigError(block + ": 'method' is required");
    MethodEntry e;
    e.config = base;
    e.noise_rate_set = detail::apply_method_fields(ms[i], block, e.config) || base_noise_rate;
    // Standard trains on hard labels unless its own entry says otherwise.
    if (e.config.method == Method::standard && !ms[i].contains("update_label"))
      e.config.update_label = LabelKind::hard;
    e.config = e.config.resolved();
    e.name = ms[i].contains("name") ? detail::get<std::string>(ms[i], "name", block)
                                    : detail::default_method_name(e.config);
    if (e.name.empty() || e.name.find_first_of("/\\,\n\"") != std::string::npos)
      throw ConfigError(block + ": name must be non-empty and free of / \\ , \" and newlines");
    if (!names.insert(e.name).second) throw ConfigError("duplicate method name '" + e.name + "'");
    e.config.validate();
    cfg.methods.push_back(std::move(e));
  }

  if (root.contains("seeds")) {
    const auto& s = root["seeds"];
    if (!s.is_array() || s.empty()) throw ConfigError("'seeds' must be a non-empty list");
    cfg.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError("seeds must be non-negative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  detail::maybe(root, "output_dir", "root", cfg.output_dir);
  detail::maybe(root, "jobs", "root", cfg.jobs);
  detail::maybe(root, "last_k", "root", cfg.last_k);
  if (cfg.jobs < 0) throw ConfigError("jobs must be >= 0");
  if (cfg.last_k < 1) throw ConfigError("last_k must be >= 1");
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json root;
  try {
    root = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(root);
}

inline std::vector<int> class_counts(const DatasetBlock& b) {
  if (b.preset == "limuc") return {kLimucClassCounts.begin(), kLimucClassCounts.end()};
  if (b.preset == "custom") return b.counts;
  return std::vector<int>(static_cast<std::size_t>(b.num_classes), b.samples_per_class);
}

// Generates or loads the clean dataset described by the block.
inline Dataset build_dataset(const DatasetBlock& b) {
  if (b.source == "csv") return load_csv(b.path);
  BlobSpec spec;
  spec.num_classes = b.num_classes;
  spec.dim = b.dim;
  spec.counts = class_counts(b);
  spec.spacing = b.spacing;
  spec.feature_scale = b.feature_scale;
  spec.seed = b.seed;
  return generate_ordinal_blobs(spec);
}

inline std::vector<double> class_priors(const Dataset& ds) {
  std::vector<double> p(static_cast<std::size_t>(ds.num_classes), 0.0);
  for (const auto& s : ds.samples) p[static_cast<std::size_t>(s.clean_label - 1)] += 1.0;
  for (double& v : p) v /= static_cast<double>(ds.size());
  return p;
}

// Smallest feasible rho whose expected flip rate under `priors` reaches
// `target`, found by bisection (the rate is increasing in rho).
inline double calibrate_rho(NoiseFamily family, int num_classes, std::span<const double> priors, double target) {
  auto rate = [&](double rho) {
    return realized_noise_rate(make_transition_matrix(family, num_classes, rho), priors);
  };
  double hi = family == NoiseFamily::truncated_gaussian ? 0.5 : 0.0;
  if (family == NoiseFamily::quasi_gaussian) {
    // Largest feasible rho: the row with the largest off-diagonal weight sum.
    double worst = 0.0;
    for (int i = 0; i < num_classes; ++i) {
      double w = 0.0;
      for (int j = 0; j < num_classes; ++j)
        if (j != i) w += 1.0 / std::abs(i - j);
      worst = std::max(worst, w);
    }
    hi = 1.0 / worst;
  }
  if (rate(hi) < target)
    throw ConfigError("noise.target_rate " + std::to_string(target) + " is not reachable (max " +
                      std::to_string(rate(hi)) + ")");
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate(mid) < target ? lo : hi) = mid;
  }
  return hi;
}

// Fills rho and epsilon from the data, and each method's schedule epsilon
// where the config left it unset.
inline void resolve_noise(ExperimentConfig& cfg, const Dataset& ds) {
  const auto priors = class_priors(ds);
  auto& n = cfg.noise;
  if (n.target_rate) {
    n.rho = calibrate_rho(n.family, ds.num_classes, priors, *n.target_rate);
    if (!n.epsilon) n.epsilon = n.target_rate;
    n.target_rate.reset();
  }
  if (!n.rho) n.rho = 0.0;
  if (!n.epsilon) n.epsilon = realized_noise_rate(make_transition_matrix(n.family, ds.num_classes, *n.rho), priors);
  for (auto& m : cfg.methods) {
    if (!m.noise_rate_set) {
      m.config.noise_rate = *n.epsilon;
      m.noise_rate_set = true;
    }
    m.config.validate();
  }
}

inline json method_to_json(const MethodEntry& e) {
  const auto& c = e.config;
  return json{{"name", e.name},
              {"method", to_string(c.method)},
              {"selection_label", to_string(c.selection_label)},
              {"update_label", to_string(c.update_label)},
              {"temperature", c.temperature},
              {"lambda", c.lambda},
              {"noise_rate", c.noise_rate},
              {"warmup_epochs", c.warmup_epochs},
              {"max_epochs", c.max_epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"weight_decay", c.weight_decay},
              {"lr_milestones", c.lr_milestones},
              {"lr_gamma", c.lr_gamma},
              {"smoothing", c.smoothing},
              {"hidden", c.hidden},
              {"jocor_divergence_in_selection", c.jocor_divergence_in_selection},
              {"identical_init", c.identical_init}};
}

// Every field explicit; parse_config(to_json(c)) reproduces c.
inline json to_json(const ExperimentConfig& c) {
  json j;
  const auto& d = c.dataset;
  j["dataset"] = {{"source", d.source},           {"num_classes", d.num_classes}, {"dim", d.dim},
                  {"preset", d.preset},           {"samples_per_class", d.samples_per_class},
                  {"spacing", d.spacing},         {"feature_scale", d.feature_scale},
                  {"seed", d.seed}};
  if (d.source == "csv") j["dataset"]["path"] = d.path;
  if (d.preset == "custom") j["dataset"]["counts"] = d.counts;
  json noise = {{"family", to_string(c.noise.family)}, {"seed", c.noise.seed}};
  if (c.noise.rho) noise["rho"] = *c.noise.rho;
  if (c.noise.target_rate) noise["target_rate"] = *c.noise.target_rate;
  if (c.noise.epsilon) noise["epsilon"] = *c.noise.epsilon;
  j["noise"] = noise;
  j["split"] = {{"folds", c.split.folds}, {"seed", c.split.seed}, {"run_folds", c.split.run_folds}};
  j["methods"] = json::array();
  for (const auto& m : c.methods) j["methods"].push_back(method_to_json(m));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["jobs"] = c.jobs;
  j["last_k"] = c.last_k;
  return j;
}

// Hash of the resolved config, excluding fields that cannot change results
// (output location and worker count).
inline std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("jobs");
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a64(j.dump());
  return os.str();
}

}  // namespace ordnoise::harness
