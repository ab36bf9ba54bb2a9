#pragma once

// Evaluation metrics on clean labels, label precision of selections and
// aggregation over epochs and folds.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ordnoise/dataset.hpp"
#include "ordnoise/error.hpp"

namespace ordnoise {

namespace detail {

inline void check_pair(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw ShapeError("metric: prediction and truth lengths differ");
  if (pred.empty()) throw ShapeError("metric: empty input");
}

}  // namespace detail

inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
  detail::check_pair(pred, truth);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

// Mean absolute class distance.
inline double mae(std::span<const int> pred, std::span<const int> truth) {
  detail::check_pair(pred, truth);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
  return sum / static_cast<double>(pred.size());
}

// Unweighted mean of per-class F1 over 1..C. Zero denominators give 0, so a
// class absent from both inputs contributes 0.
inline double macro_f1(std::span<const int> pred, std::span<const int> truth, int num_classes) {
  detail::check_pair(pred, truth);
  if (num_classes < 1) throw InvalidParameterError("macro_f1: C must be >= 1");
  std::vector<double> tp(static_cast<std::size_t>(num_classes)), fp(tp.size()), fn(tp.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int v : {pred[i], truth[i]})
      if (v < 1 || v > num_classes)
        throw InvalidClassError("macro_f1: label " + std::to_string(v) + " outside 1.." +
                                std::to_string(num_classes));
    const auto p = static_cast<std::size_t>(pred[i] - 1);
    const auto t = static_cast<std::size_t>(truth[i] - 1);
    if (p == t) {
      tp[p] += 1;
    } else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return sum / num_classes;
}

// Fraction of `selected` positions whose flag marks a correctly labelled sample.
inline double label_precision(std::span<const std::size_t> selected, const std::vector<bool>& clean) {
  if (selected.empty()) throw UndefinedMetricError("label_precision: empty selection");
  std::size_t hit = 0;
  for (std::size_t i : selected) {
    if (i >= clean.size()) throw ShapeError("label_precision: selected index out of range");
    hit += clean[i];
  }
  return static_cast<double>(hit) / static_cast<double>(selected.size());
}

// Holds the noisy == clean flags of a training split. This is the only route
// by which clean labels reach a training run, and it only answers precision
// queries.
class CleanFlags {
 public:
  CleanFlags() = default;
  CleanFlags(const Dataset& ds, std::span<const std::size_t> positions) {
    flags_.reserve(positions.size());
    for (std::size_t p : positions) flags_.push_back(ds.samples.at(p).noisy_label == ds.samples.at(p).clean_label);
  }
  explicit CleanFlags(std::vector<bool> flags) : flags_(std::move(flags)) {}

  std::size_t size() const noexcept { return flags_.size(); }

  // Number of clean samples among `selected` (positions in the split).
  std::size_t count_clean(std::span<const std::size_t> selected) const {
    std::size_t hit = 0;
    for (std::size_t i : selected) {
      if (i >= flags_.size()) throw ShapeError("CleanFlags: position out of range");
      hit += flags_[i];
    }
    return hit;
  }

  double precision(std::span<const std::size_t> selected) const {
    if (selected.empty()) throw UndefinedMetricError("label_precision: empty selection");
    return static_cast<double>(count_clean(selected)) / static_cast<double>(selected.size());
  }

 private:
  std::vector<bool> flags_;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double mae = 0.0;
  double macro_f1 = 0.0;
};

inline EvalMetrics evaluate_predictions(std::span<const int> pred, std::span<const int> truth, int num_classes) {
  return {accuracy(pred, truth), mae(pred, truth), macro_f1(pred, truth, num_classes)};
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  EvalMetrics net1;
  std::optional<EvalMetrics> net2;  // dual-network methods only
  EvalMetrics mean;                 // arithmetic mean over networks
  std::optional<double> label_precision;
  std::size_t selected_count = 0;  // per network, summed over the epoch's batches
  double keep_rate = 1.0;
  double validation_accuracy = 0.0;  // against noisy validation labels; logged only
};

struct MetricSummary {
  double accuracy = 0.0;
  double mae = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> label_precision;
};

// Mean of each metric over the final min(k, n) records.
inline MetricSummary last_k_average(std::span<const EpochRecord> records, int k = 10) {
  if (k < 1) throw InvalidParameterError("last_k_average: k must be >= 1");
  if (records.empty()) throw EmptyTraceError("last_k_average: empty trace");
  const std::size_t n = std::min(records.size(), static_cast<std::size_t>(k));
  const auto tail = records.subspan(records.size() - n);
  MetricSummary s;
  double lp = 0.0;
  std::size_t lp_n = 0;
  for (const auto& r : tail) {
    s.accuracy += r.mean.accuracy;
    s.mae += r.mean.mae;
    s.macro_f1 += r.mean.macro_f1;
    if (r.label_precision) {
      lp += *r.label_precision;
      ++lp_n;
    }
  }
  s.accuracy /= static_cast<double>(n);
  s.mae /= static_cast<double>(n);
  s.macro_f1 /= static_cast<double>(n);
  if (lp_n) s.label_precision = lp / static_cast<double>(lp_n);
  return s;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

// Sums run over sorted values so the result does not depend on input order.
inline MeanStd mean_std(std::span<const double> input) {
  if (input.empty()) return {};
  std::vector<double> values(input.begin(), input.end());
  std::sort(values.begin(), values.end());
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

struct SummaryRow {
  std::size_t fold_count = 0;
  MeanStd accuracy;
  MeanStd mae;
  MeanStd macro_f1;
  std::optional<MeanStd> label_precision;
};

// Mean and population standard deviation across folds (or seeds).
inline SummaryRow aggregate_folds(std::span<const MetricSummary> folds) {
  if (folds.empty()) throw InvalidParameterError("aggregate_folds: need at least one fold");
  std::vector<double> acc, err, f1, lp;
  for (const auto& f : folds) {
    acc.push_back(f.accuracy);
    err.push_back(f.mae);
    f1.push_back(f.macro_f1);
    if (f.label_precision) lp.push_back(*f.label_precision);
  }
  SummaryRow row;
  row.fold_count = folds.size();
  row.accuracy = mean_std(acc);
  row.mae = mean_std(err);
  row.macro_f1 = mean_std(f1);
  if (!lp.empty()) row.label_precision = mean_std(lp);
  return row;
}

}  // namespace ordnoise
