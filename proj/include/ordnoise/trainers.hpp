#pragma once

// Training loops: single-network baselines (Standard, Sord, Label-smooth)
// and the dual-network Co-teaching, JoCor and CoDis backbones, each with a
// configurable label representation for selection and for updating.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ordnoise/classifier.hpp"
#include "ordnoise/dataset.hpp"
#include "ordnoise/error.hpp"
#include "ordnoise/labels.hpp"
#include "ordnoise/metrics.hpp"
#include "ordnoise/rng.hpp"
#include "ordnoise/selection.hpp"

namespace ordnoise {

enum class Method { standard, sord, label_smooth, coteaching, jocor, codis };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::standard: return "standard";
    case Method::sord: return "sord";
    case Method::label_smooth: return "label_smooth";
    case Method::coteaching: return "coteaching";
    case Method::jocor: return "jocor";
    case Method::codis: return "codis";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::standard, Method::sord, Method::label_smooth, Method::coteaching, Method::jocor,
                   Method::codis})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

inline bool is_dual_network(Method m) {
  return m == Method::coteaching || m == Method::jocor || m == Method::codis;
}

struct MethodConfig {
  Method method = Method::coteaching;
  LabelKind selection_label = LabelKind::hard;
  LabelKind update_label = LabelKind::soft;
  double temperature = 0.1;
  double lambda = 0.1;
  double noise_rate = 0.2;  // assumed epsilon for the keep-rate schedule
  int warmup_epochs = 5;
  int max_epochs = 150;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::vector<int> lr_milestones;  // epochs after which the rate is multiplied by lr_gamma
  double lr_gamma = 0.1;
  double smoothing = 0.1;  // alpha for smoothed labels
  int hidden = 32;
  std::uint64_t seed = 0;
  bool jocor_divergence_in_selection = true;
  bool identical_init = false;     // both networks start from net 1's weights
  bool record_selections = false;  // keep every batch's selected positions in the trace

  // Applies method-implied settings: Sord trains on soft labels, Label-smooth
  // on smoothed labels. Standard keeps the configured update label.
  MethodConfig resolved() const {
    MethodConfig c = *this;
    if (c.method == Method::sord) c.update_label = LabelKind::soft;
    if (c.method == Method::label_smooth) c.update_label = LabelKind::smoothed;
    return c;
  }

  void validate() const {
    if (!(temperature > 0.0 && temperature <= 1.0)) throw ConfigError("temperature must lie in (0, 1]");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise_rate must lie in [0, 1)");
    if (warmup_epochs < 1) throw ConfigError("warmup_epochs must be >= 1");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(lr_gamma > 0.0)) throw ConfigError("lr_gamma must be > 0");
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("smoothing must lie in [0, 1)");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (method == Method::sord && update_label != LabelKind::soft)
      throw ConfigError("sord trains on soft labels; update_label must be soft");
    if (method == Method::label_smooth && update_label != LabelKind::smoothed)
      throw ConfigError("label_smooth trains on smoothed labels; update_label must be smoothed");
    if (is_dual_network(method) && selection_label == LabelKind::smoothed)
      throw ConfigError("selection_label must be hard or soft");
    if (is_dual_network(method) && max_epochs > 0 && warmup_epochs > max_epochs)
      throw ConfigError("warmup_epochs must not exceed max_epochs");
  }

  Schedule schedule() const { return {noise_rate, warmup_epochs, std::max(max_epochs, warmup_epochs)}; }

  SelectionOptions selection_options() const {
    SelectionOptions o;
    o.temperature = temperature;
    o.lambda = lambda;
    o.label_kind = selection_label;
    o.smoothing = smoothing;
    o.jocor_divergence = jocor_divergence_in_selection;
    return o;
  }

  double learning_rate_at(int epoch) const {
    double lr = learning_rate;
    for (int m : lr_milestones)
      if (epoch > m) lr *= lr_gamma;
    return lr;
  }
};

// Everything a run consumes. Clean training labels are present only inside
// `clean_flags`, which answers label-precision queries.
struct TrainingData {
  NoisyView train;
  std::optional<NoisyView> validation;
  LabeledView test;
  CleanFlags clean_flags;
};

// Selected positions (into the training split) for one mini-batch.
struct BatchSelectionLog {
  int epoch = 0;
  int iteration = 0;
  std::vector<std::size_t> picked_by_net1;  // JoCor: the shared set
  std::vector<std::size_t> picked_by_net2;  // JoCor: same as picked_by_net1
};

struct RunTrace {
  MethodConfig config;
  std::vector<EpochRecord> epochs;
  std::vector<BatchSelectionLog> selections;  // filled when record_selections is set
  MlpParams net1;
  std::optional<MlpParams> net2;

  MetricSummary summary(int k = 10) const { return last_k_average(epochs, k); }
};

inline MetricSummary last_k_average(const RunTrace& trace, int k = 10) { return last_k_average(trace.epochs, k); }

namespace detail {

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

inline std::vector<std::size_t> map_positions(std::span<const std::size_t> local, std::span<const std::size_t> batch) {
  std::vector<std::size_t> out;
  out.reserve(local.size());
  for (std::size_t i : local) out.push_back(batch[i]);
  return out;
}

inline void check_data(const TrainingData& data) {
  if (data.train.num_classes < 2) throw InvalidParameterError("training split: need C >= 2");
  if (static_cast<std::size_t>(data.train.features.rows()) != data.train.size())
    throw ShapeError("training split: feature rows differ from label count");
  if (data.test.size() == 0) throw InvalidParameterError("test split is empty");
  if (data.test.num_classes != data.train.num_classes) throw ShapeError("train/test class counts differ");
  if (data.test.features.cols() != data.train.features.cols()) throw ShapeError("train/test feature dims differ");
  if (data.clean_flags.size() != 0 && data.clean_flags.size() != data.train.size())
    throw ShapeError("clean flags do not match the training split");
}

// Accumulates one epoch's bookkeeping.
struct EpochTally {
  double loss_sum = 0.0;
  std::size_t iterations = 0;
  std::size_t selected = 0;  // all picks, both networks
  std::size_t clean = 0;
  std::size_t picks = 0;  // number of per-network picks

  void add_pick(const CleanFlags& flags, std::span<const std::size_t> positions) {
    selected += positions.size();
    ++picks;
    if (flags.size()) clean += flags.count_clean(positions);
  }
};

inline EpochRecord close_epoch(int epoch, const EpochTally& tally, const MlpParams& net1, const MlpParams* net2,
                               const TrainingData& data, double keep, bool selecting) {
  EpochRecord r;
  r.epoch = epoch;
  r.keep_rate = keep;
  r.train_loss = tally.iterations ? tally.loss_sum / static_cast<double>(tally.iterations) : 0.0;
  const int c = data.test.num_classes;
  r.net1 = evaluate_predictions(predict(net1, data.test.features), data.test.labels, c);
  r.mean = r.net1;
  if (net2) {
    r.net2 = evaluate_predictions(predict(*net2, data.test.features), data.test.labels, c);
    r.mean.accuracy = 0.5 * (r.net1.accuracy + r.net2->accuracy);
    r.mean.mae = 0.5 * (r.net1.mae + r.net2->mae);
    r.mean.macro_f1 = 0.5 * (r.net1.macro_f1 + r.net2->macro_f1);
  }
  if (data.validation && data.validation->size()) {
    const auto& v = *data.validation;
    double acc = accuracy(predict(net1, v.features), v.labels);
    if (net2) acc = 0.5 * (acc + accuracy(predict(*net2, v.features), v.labels));
    r.validation_accuracy = acc;
  }
  if (selecting) {
    r.selected_count = tally.selected / (net2 ? 2 : 1);
    if (data.clean_flags.size() && tally.selected)
      r.label_precision = static_cast<double>(tally.clean) / static_cast<double>(tally.selected);
  } else {
    r.selected_count = tally.selected;
  }
  return r;
}

}  // namespace detail

// Updates net1 on the samples net2 picked and net2 on the samples net1 picked.
// Both gradients are taken at the parameters held on entry. Returns the mean
// of the two update losses.
inline double cross_update(MlpParams& net1, MlpParams& net2, AdamState& opt1, AdamState& opt2,
                           const Eigen::MatrixXd& features, const Eigen::MatrixXd& update_targets,
                           std::span<const std::size_t> picked_by_net1, std::span<const std::size_t> picked_by_net2) {
  const auto g1 = backward(net1, detail::gather_rows(features, picked_by_net2),
                           detail::gather_rows(update_targets, picked_by_net2));
  const auto g2 = backward(net2, detail::gather_rows(features, picked_by_net1),
                           detail::gather_rows(update_targets, picked_by_net1));
  adam_step(net1, g1.grads, opt1);
  adam_step(net2, g2.grads, opt2);
  return 0.5 * (g1.loss + g2.loss);
}

namespace detail {

struct LoopState {
  Rng shuffle_rng;
  std::vector<std::size_t> order;
  std::size_t iterations_per_epoch;
};

inline LoopState start_loop(const MethodConfig& cfg, const TrainingData& data) {
  LoopState s{Rng(derive_seed(cfg.seed, "shuffle")), std::vector<std::size_t>(data.train.size()),
              data.train.size() / static_cast<std::size_t>(cfg.batch_size)};
  std::iota(s.order.begin(), s.order.end(), std::size_t{0});
  return s;
}

}  // namespace detail

// Single network on every sample of every full mini-batch (Standard, Sord,
// Label-smooth depending on update_label).
inline RunTrace train_standard(const MethodConfig& config, const TrainingData& data) {
  const MethodConfig cfg = config.resolved();
  cfg.validate();
  detail::check_data(data);
  const int c = data.train.num_classes;
  const int d = static_cast<int>(data.train.features.cols());

  RunTrace trace;
  trace.config = cfg;
  trace.net1 = init_mlp(d, cfg.hidden, c, derive_seed(cfg.seed, "net1"));
  AdamState opt = AdamState::for_params(trace.net1, cfg.learning_rate, cfg.weight_decay);
  const Eigen::MatrixXd targets = make_targets(cfg.update_label, data.train.labels, c, cfg.smoothing);
  auto loop = detail::start_loop(cfg, data);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt.learning_rate = cfg.learning_rate_at(epoch);
    loop.shuffle_rng.shuffle(std::span<std::size_t>(loop.order));
    detail::EpochTally tally;
    for (std::size_t t = 0; t < loop.iterations_per_epoch; ++t) {
      const std::span<const std::size_t> batch(loop.order.data() + t * bs, bs);
      const auto g = backward(trace.net1, detail::gather_rows(data.train.features, batch),
                              detail::gather_rows(targets, batch));
      adam_step(trace.net1, g.grads, opt);
      tally.loss_sum += g.loss;
      ++tally.iterations;
      tally.selected += bs;
    }
    trace.epochs.push_back(detail::close_epoch(epoch, tally, trace.net1, nullptr, data, 1.0, false));
  }
  return trace;
}

namespace detail {

// Shared body of Co-teaching and CoDis: per-network picks, cross-update.
template <typename Selector>
RunTrace train_cross_update(const MethodConfig& config, const TrainingData& data, Selector select) {
  const MethodConfig cfg = config.resolved();
  cfg.validate();
  check_data(data);
  const int c = data.train.num_classes;
  const int d = static_cast<int>(data.train.features.cols());

  RunTrace trace;
  trace.config = cfg;
  trace.net1 = init_mlp(d, cfg.hidden, c, derive_seed(cfg.seed, "net1"));
  trace.net2 = cfg.identical_init ? trace.net1 : init_mlp(d, cfg.hidden, c, derive_seed(cfg.seed, "net2"));
  MlpParams& net1 = trace.net1;
  MlpParams& net2 = *trace.net2;
  AdamState opt1 = AdamState::for_params(net1, cfg.learning_rate, cfg.weight_decay);
  AdamState opt2 = AdamState::for_params(net2, cfg.learning_rate, cfg.weight_decay);
  const Eigen::MatrixXd update_targets = make_targets(cfg.update_label, data.train.labels, c, cfg.smoothing);
  const Schedule schedule = cfg.schedule();
  const SelectionOptions sel_opt = cfg.selection_options();
  auto loop = start_loop(cfg, data);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt1.learning_rate = opt2.learning_rate = cfg.learning_rate_at(epoch);
    const double keep = keep_rate(schedule, epoch);
    loop.shuffle_rng.shuffle(std::span<std::size_t>(loop.order));
    EpochTally tally;
    for (std::size_t t = 0; t < loop.iterations_per_epoch; ++t) {
      const std::span<const std::size_t> batch(loop.order.data() + t * bs, bs);
      const Eigen::MatrixXd x = gather_rows(data.train.features, batch);
      std::vector<int> labels;
      labels.reserve(bs);
      for (std::size_t p : batch) labels.push_back(data.train.labels[p]);
      const SelectionBatch sb{x, labels, c};
      const PairSelection sel = select(net1, net2, sb, sel_opt, keep);

      const auto pick1 = map_positions(sel.by_net1.selected, batch);
      const auto pick2 = map_positions(sel.by_net2.selected, batch);
      tally.loss_sum += cross_update(net1, net2, opt1, opt2, data.train.features, update_targets, pick1, pick2);
      ++tally.iterations;
      tally.add_pick(data.clean_flags, pick1);
      tally.add_pick(data.clean_flags, pick2);
      if (cfg.record_selections)
        trace.selections.push_back({epoch, static_cast<int>(t), pick1, pick2});
    }
    trace.epochs.push_back(close_epoch(epoch, tally, net1, &net2, data, keep, true));
  }
  return trace;
}

}  // namespace detail

// Co-teaching backbone. update_label = hard is the original method, soft the
// relaxed-label variant; selection_label = soft gives the soft/soft ablation.
inline RunTrace train_coteaching(const MethodConfig& config, const TrainingData& data) {
  return detail::train_cross_update(config, data, [](const auto&... args) { return coteaching_select(args...); });
}

// CoDis backbone: discrepancy-adjusted per-network picks, cross-update.
inline RunTrace train_codis(const MethodConfig& config, const TrainingData& data) {
  return detail::train_cross_update(config, data, [](const auto&... args) { return codis_select(args...); });
}

// JoCor backbone: one shared pick, both networks descend the joint loss
// CE1 + CE2 + lambda * Jeffrey under the update label.
inline RunTrace train_jocor(const MethodConfig& config, const TrainingData& data) {
  const MethodConfig cfg = config.resolved();
  cfg.validate();
  detail::check_data(data);
  const int c = data.train.num_classes;
  const int d = static_cast<int>(data.train.features.cols());

  RunTrace trace;
  trace.config = cfg;
  trace.net1 = init_mlp(d, cfg.hidden, c, derive_seed(cfg.seed, "net1"));
  trace.net2 = cfg.identical_init ? trace.net1 : init_mlp(d, cfg.hidden, c, derive_seed(cfg.seed, "net2"));
  MlpParams& net1 = trace.net1;
  MlpParams& net2 = *trace.net2;
  AdamState opt1 = AdamState::for_params(net1, cfg.learning_rate, cfg.weight_decay);
  AdamState opt2 = AdamState::for_params(net2, cfg.learning_rate, cfg.weight_decay);
  const Eigen::MatrixXd update_targets = make_targets(cfg.update_label, data.train.labels, c, cfg.smoothing);
  const Schedule schedule = cfg.schedule();
  const SelectionOptions sel_opt = cfg.selection_options();
  auto loop = detail::start_loop(cfg, data);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    opt1.learning_rate = opt2.learning_rate = cfg.learning_rate_at(epoch);
    const double keep = keep_rate(schedule, epoch);
    loop.shuffle_rng.shuffle(std::span<std::size_t>(loop.order));
    detail::EpochTally tally;
    for (std::size_t t = 0; t < loop.iterations_per_epoch; ++t) {
      const std::span<const std::size_t> batch(loop.order.data() + t * bs, bs);
      const Eigen::MatrixXd x = detail::gather_rows(data.train.features, batch);
      std::vector<int> labels;
      labels.reserve(bs);
      for (std::size_t p : batch) labels.push_back(data.train.labels[p]);
      const SelectionBatch sb{x, labels, c};
      const SelectionOutcome sel = jocor_select(net1, net2, sb, sel_opt, keep);
      const auto pick = detail::map_positions(sel.selected, batch);

      const auto g = jocor_backward(net1, net2, detail::gather_rows(data.train.features, pick),
                                    detail::gather_rows(update_targets, pick), cfg.lambda);
      adam_step(net1, g.grads_1, opt1);
      adam_step(net2, g.grads_2, opt2);
      tally.loss_sum += g.loss;
      ++tally.iterations;
      tally.add_pick(data.clean_flags, pick);
      tally.add_pick(data.clean_flags, pick);
      if (cfg.record_selections) trace.selections.push_back({epoch, static_cast<int>(t), pick, pick});
    }
    trace.epochs.push_back(detail::close_epoch(epoch, tally, net1, &net2, data, keep, true));
  }
  return trace;
}

// Dispatches on config.method.
inline RunTrace train(const MethodConfig& config, const TrainingData& data) {
  switch (config.method) {
    case Method::standard:
    case Method::sord:
    case Method::label_smooth: return train_standard(config, data);
    case Method::coteaching: return train_coteaching(config, data);
    case Method::jocor: return train_jocor(config, data);
    case Method::codis: return train_codis(config, data);
  }
  throw ConfigError("unknown method");
}

struct AblationCell {
  LabelKind selection;
  LabelKind update;

  friend auto operator<=>(const AblationCell&, const AblationCell&) = default;
};

inline std::vector<AblationCell> ablation_cells(bool include_soft_hard = false) {
  std::vector<AblationCell> cells = {
      {LabelKind::hard, LabelKind::hard}, {LabelKind::soft, LabelKind::soft}, {LabelKind::hard, LabelKind::soft}};
  if (include_soft_hard) cells.push_back({LabelKind::soft, LabelKind::hard});
  return cells;
}

// Runs every selection x update cell on the same data with the same seed.
inline std::map<AblationCell, RunTrace> run_ablation_grid(const MethodConfig& base, const TrainingData& data,
                                                          bool include_soft_hard = false) {
  if (!is_dual_network(base.method)) throw ConfigError("ablation grid needs a dual-network method");
  std::map<AblationCell, RunTrace> out;
  for (const auto& cell : ablation_cells(include_soft_hard)) {
    MethodConfig cfg = base;
    cfg.selection_label = cell.selection;
    cfg.update_label = cell.update;
    out.emplace(cell, train(cfg, data));
  }
  return out;
}

}  // namespace ordnoise
