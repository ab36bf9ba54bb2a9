#pragma once

// Small-loss clean-sample selection and its epoch-dependent keep rate.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ordnoise/classifier.hpp"
#include "ordnoise/error.hpp"
#include "ordnoise/labels.hpp"

namespace ordnoise {

struct Schedule {
  double noise_rate = 0.2;  // assumed epsilon
  int warmup_epochs = 5;    // T'
  int max_epochs = 150;     // T_max

  void validate() const {
    if (!(noise_rate >= 0.0 && noise_rate < 1.0))
      throw InvalidParameterError("schedule: noise rate must lie in [0, 1)");
    if (warmup_epochs < 1) throw InvalidParameterError("schedule: warmup epochs must be >= 1");
    if (max_epochs < warmup_epochs) throw InvalidParameterError("schedule: T_max must be >= T'");
  }
};

// R(T) = 1 - min(T * eps / T', eps) for 1-based epoch T.
inline double keep_rate(const Schedule& s, int epoch) {
  if (epoch < 1) throw InvalidParameterError("keep_rate: epoch index is 1-based");
  return 1.0 - std::min(static_cast<double>(epoch) * s.noise_rate / s.warmup_epochs, s.noise_rate);
}

// max(1, floor(R * n)). The 1e-9 slack keeps products such as 0.8 * 10 from
// rounding down.
inline std::size_t selected_count(double keep, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::floor(keep * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

// Indices of the k smallest losses (ties by lower index), returned ascending.
inline std::vector<std::size_t> select_small_loss(std::span<const double> losses, double keep) {
  if (losses.empty()) throw EmptyBatchError("select_small_loss: empty loss list");
  if (!(keep > 0.0 && keep <= 1.0)) throw InvalidParameterError("select_small_loss: keep rate must lie in (0, 1]");
  for (double l : losses)
    if (std::isnan(l)) throw NumericError("select_small_loss: NaN loss");
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = selected_count(keep, losses.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return losses[a] < losses[b] || (losses[a] == losses[b] && a < b);
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

struct SelectionOptions {
  double temperature = 0.1;
  double lambda = 0.1;
  LabelKind label_kind = LabelKind::hard;  // labels behind the selection loss
  double smoothing = 0.0;
  bool jocor_divergence = true;  // include lambda * J in the JoCor score
};

// Batch presented to a selector: features and attached (noisy) labels.
struct SelectionBatch {
  const Eigen::MatrixXd& features;
  std::span<const int> labels;  // 1-based
  int num_classes;
};

struct SelectionOutcome {
  std::vector<std::size_t> selected;  // batch positions, ascending
  std::vector<double> scores;         // per-sample selection score
  double keep_rate = 1.0;
};

struct PairSelection {
  SelectionOutcome by_net1;  // net 1's small-loss pick (used to update net 2)
  SelectionOutcome by_net2;  // net 2's small-loss pick (used to update net 1)
};

namespace detail {

inline void check_batch(const SelectionBatch& b) {
  if (b.labels.empty()) throw EmptyBatchError("selection: empty batch");
  if (static_cast<std::size_t>(b.features.rows()) != b.labels.size())
    throw ShapeError("selection: feature rows and labels differ in count");
}

inline std::vector<double> per_sample_ce(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets) {
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double l = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c)
      if (targets(i, c) != 0.0) l -= targets(i, c) * std::log(std::max(probs(i, c), kProbFloor));
    out[static_cast<std::size_t>(i)] = l;
  }
  return out;
}

inline std::vector<double> per_sample_jeffrey(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  std::vector<double> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double j = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double x = std::max(a(i, c), kProbFloor);
      const double y = std::max(b(i, c), kProbFloor);
      j += (x - y) * (std::log(x) - std::log(y));
    }
    out[static_cast<std::size_t>(i)] = j;
  }
  return out;
}

inline Eigen::MatrixXd tempered_probs(const MlpParams& net, const SelectionBatch& b, double tau) {
  return softmax_rows(forward_batch(net, b.features), tau);
}

}  // namespace detail

// Per-sample selection loss of one network at temperature tau.
inline std::vector<double> selection_losses(const MlpParams& net, const SelectionBatch& batch,
                                            const SelectionOptions& opt) {
  detail::check_batch(batch);
  const auto targets = make_targets(opt.label_kind, batch.labels, batch.num_classes, opt.smoothing);
  return detail::per_sample_ce(detail::tempered_probs(net, batch, opt.temperature), targets);
}

// Each network picks its own small-loss set.
inline PairSelection coteaching_select(const MlpParams& net1, const MlpParams& net2, const SelectionBatch& batch,
                                       const SelectionOptions& opt, double keep) {
  PairSelection out;
  out.by_net1.scores = selection_losses(net1, batch, opt);
  out.by_net2.scores = selection_losses(net2, batch, opt);
  out.by_net1.selected = select_small_loss(out.by_net1.scores, keep);
  out.by_net2.selected = select_small_loss(out.by_net2.scores, keep);
  out.by_net1.keep_rate = out.by_net2.keep_rate = keep;
  return out;
}

// One shared pick scored by CE1 + CE2 + lambda * J(p1, p2).
inline SelectionOutcome jocor_select(const MlpParams& net1, const MlpParams& net2, const SelectionBatch& batch,
                                     const SelectionOptions& opt, double keep) {
  detail::check_batch(batch);
  if (opt.lambda < 0.0) throw InvalidParameterError("jocor_select: lambda must be >= 0");
  const auto targets = make_targets(opt.label_kind, batch.labels, batch.num_classes, opt.smoothing);
  const auto q1 = detail::tempered_probs(net1, batch, opt.temperature);
  const auto q2 = detail::tempered_probs(net2, batch, opt.temperature);
  auto scores = detail::per_sample_ce(q1, targets);
  const auto ce2 = detail::per_sample_ce(q2, targets);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += ce2[i];
  if (opt.jocor_divergence && opt.lambda > 0.0) {
    const auto j = detail::per_sample_jeffrey(q1, q2);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += opt.lambda * j[i];
  }
  SelectionOutcome out;
  out.selected = select_small_loss(scores, keep);
  out.scores = std::move(scores);
  out.keep_rate = keep;
  return out;
}

// Per-network score CE_n - lambda * J(p1, p2): low loss and high cross-network
// discrepancy both favour selection.
inline PairSelection codis_select(const MlpParams& net1, const MlpParams& net2, const SelectionBatch& batch,
                                  const SelectionOptions& opt, double keep) {
  detail::check_batch(batch);
  if (opt.lambda < 0.0) throw InvalidParameterError("codis_select: lambda must be >= 0");
  const auto targets = make_targets(opt.label_kind, batch.labels, batch.num_classes, opt.smoothing);
  const auto q1 = detail::tempered_probs(net1, batch, opt.temperature);
  const auto q2 = detail::tempered_probs(net2, batch, opt.temperature);
  PairSelection out;
  out.by_net1.scores = detail::per_sample_ce(q1, targets);
  out.by_net2.scores = detail::per_sample_ce(q2, targets);
  if (opt.lambda > 0.0) {
    const auto j = detail::per_sample_jeffrey(q1, q2);
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.by_net1.scores[i] -= opt.lambda * j[i];
      out.by_net2.scores[i] -= opt.lambda * j[i];
    }
  }
  out.by_net1.selected = select_small_loss(out.by_net1.scores, keep);
  out.by_net2.selected = select_small_loss(out.by_net2.scores, keep);
  out.by_net1.keep_rate = out.by_net2.keep_rate = keep;
  return out;
}

}  // namespace ordnoise
