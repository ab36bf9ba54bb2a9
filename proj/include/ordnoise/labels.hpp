#pragma once

// Ordinal label representations and the losses built on them.
//
// Class indices are 1-based at this API boundary (y in 1..C); the stored
// probability vectors are indexed 0..C-1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ordnoise/error.hpp"

namespace ordnoise {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kSumTolerance = 1e-9;

namespace detail {

inline void check_distribution(std::span<const double> p, std::string_view what) {
  if (p.empty()) throw ShapeError(std::string(what) + ": empty vector");
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0)
      throw NumericError(std::string(what) + ": entries must be finite and non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance)
    throw NumericError(std::string(what) + ": entries sum to " + std::to_string(sum));
}

inline void check_class(int y, int num_classes) {
  if (num_classes < 2)
    throw InvalidParameterError("class count must be >= 2, got " + std::to_string(num_classes));
  if (y < 1 || y > num_classes)
    throw InvalidClassError("class " + std::to_string(y) + " outside 1.." +
                            std::to_string(num_classes));
}

}  // namespace detail

// Probability vector over C ordinal classes used as a training target.
class LabelDistribution {
 public:
  explicit LabelDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw ShapeError("label distribution needs C >= 2");
    detail::check_distribution(probs_, "label distribution");
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const LabelDistribution&, const LabelDistribution&) = default;

 private:
  std::vector<double> probs_;
};

// Predicted class probabilities (softmax output).
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
    detail::check_distribution(probs_, "probability vector");
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) -
                                    probs_.begin());
  }

 private:
  std::vector<double> probs_;
};

enum class LabelKind { hard, soft, smoothed };

inline std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::hard: return "hard";
    case LabelKind::soft: return "soft";
    case LabelKind::smoothed: return "smoothed";
  }
  return "?";
}

inline LabelKind parse_label_kind(std::string_view s) {
  if (s == "hard") return LabelKind::hard;
  if (s == "soft") return LabelKind::soft;
  if (s == "smoothed") return LabelKind::smoothed;
  throw InvalidParameterError("unknown label kind '" + std::string(s) + "'");
}

// One-hot vector at class y.
inline LabelDistribution hard_label(int y, int num_classes) {
  detail::check_class(y, num_classes);
  std::vector<double> p(static_cast<std::size_t>(num_classes), 0.0);
  p[static_cast<std::size_t>(y - 1)] = 1.0;
  return LabelDistribution(std::move(p));
}

// Relaxed target centered at y: entry c is proportional to exp(-|c - y|).
inline LabelDistribution soft_label(int y, int num_classes) {
  detail::check_class(y, num_classes);
  std::vector<double> p(static_cast<std::size_t>(num_classes));
  double z = 0.0;
  for (int c = 1; c <= num_classes; ++c) {
    const double w = std::exp(-static_cast<double>(std::abs(c - y)));
    p[static_cast<std::size_t>(c - 1)] = w;
    z += w;
  }
  for (double& v : p) v /= z;
  return LabelDistribution(std::move(p));
}

// Uniform label smoothing: (1 - alpha) * one_hot + alpha / C.
inline LabelDistribution smoothed_label(int y, int num_classes, double alpha) {
  detail::check_class(y, num_classes);
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw InvalidParameterError("smoothing alpha must lie in [0, 1)");
  if (alpha == 0.0) return hard_label(y, num_classes);
  const double base = alpha / num_classes;
  std::vector<double> p(static_cast<std::size_t>(num_classes), base);
  p[static_cast<std::size_t>(y - 1)] += 1.0 - alpha;
  return LabelDistribution(std::move(p));
}

inline LabelDistribution make_label(LabelKind kind, int y, int num_classes, double alpha = 0.0) {
  switch (kind) {
    case LabelKind::hard: return hard_label(y, num_classes);
    case LabelKind::soft: return soft_label(y, num_classes);
    case LabelKind::smoothed: return smoothed_label(y, num_classes, alpha);
  }
  throw InvalidParameterError("bad label kind");
}

// softmax(z / tau) with max-subtraction.
inline std::vector<double> softmax_values(std::span<const double> logits, double tau = 1.0) {
  if (!(tau > 0.0)) throw InvalidParameterError("temperature must be > 0");
  if (logits.empty()) throw ShapeError("softmax of empty logits");
  for (double z : logits)
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp((logits[c] - zmax) / tau);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline ProbVector temperature_softmax(std::span<const double> logits, double tau) {
  return ProbVector(softmax_values(logits, tau));
}

inline ProbVector softmax(std::span<const double> logits) { return temperature_softmax(logits, 1.0); }

// -sum_c l_c ln max(p_c, floor). Takes raw spans so the training loop can
// skip re-validating vectors it produced itself.
inline double cross_entropy(std::span<const double> label, std::span<const double> p) {
  if (label.size() != p.size())
    throw ShapeError("cross_entropy: label has " + std::to_string(label.size()) +
                     " classes, prediction has " + std::to_string(p.size()));
  double loss = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (label[c] != 0.0) loss -= label[c] * std::log(std::max(p[c], kProbFloor));
  }
  return loss;
}

inline double cross_entropy(const LabelDistribution& label, const ProbVector& p) {
  return cross_entropy(label.probs(), p.probs());
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline double entropy(const LabelDistribution& label) { return entropy(label.probs()); }

// KL(p||q) + KL(q||p) = sum_c (p_c - q_c)(ln p_c - ln q_c), both clamped.
inline double jeffrey_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("jeffrey_divergence: length mismatch");
  double j = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double a = std::max(p[c], kProbFloor);
    const double b = std::max(q[c], kProbFloor);
    j += (a - b) * (std::log(a) - std::log(b));
  }
  return j;
}

inline double jeffrey_divergence(const ProbVector& p, const ProbVector& q) {
  return jeffrey_divergence(p.probs(), q.probs());
}

struct BatchLoss {
  double sum = 0.0;
  double mean = 0.0;
};

// Cross-entropy summed over a mini-batch, with labels (1-based noisy class
// indices) expanded into the chosen representation.
inline BatchLoss batch_loss(LabelKind kind, std::span<const int> labels,
                            std::span<const ProbVector> probs, double alpha = 0.0) {
  if (labels.size() != probs.size()) throw ShapeError("batch_loss: list lengths differ");
  if (labels.empty()) throw EmptyBatchError("batch_loss: empty batch");
  BatchLoss out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int num_classes = static_cast<int>(probs[i].size());
    out.sum += cross_entropy(make_label(kind, labels[i], num_classes, alpha), probs[i]);
  }
  out.mean = out.sum / static_cast<double>(labels.size());
  return out;
}

}  // namespace ordnoise
