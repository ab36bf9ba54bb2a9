#pragma once

// Label-noise transition matrices and noise injection.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ordnoise/error.hpp"
#include "ordnoise/text.hpp"
#include "ordnoise/rng.hpp"

namespace ordnoise {

// Row-stochastic C x C matrix with entry (i, j) = Pr(noisy = j | clean = i).
// Indices are 0-based here.
class TransitionMatrix {
 public:
  TransitionMatrix(int num_classes, std::vector<double> entries)
      : num_classes_(num_classes), entries_(std::move(entries)) {
    if (num_classes_ < 2) throw InvalidParameterError("transition matrix needs C >= 2");
    if (entries_.size() != static_cast<std::size_t>(num_classes_ * num_classes_))
      throw ShapeError("transition matrix: expected C*C entries");
    for (int i = 0; i < num_classes_; ++i) {
      double sum = 0.0;
      for (int j = 0; j < num_classes_; ++j) {
        const double v = (*this)(i, j);
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
          throw InfeasibleMatrixError("transition matrix row " + std::to_string(i + 1) +
                                      ": entry outside [0,1]");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw InfeasibleMatrixError("transition matrix row " + std::to_string(i + 1) +
                                    " sums to " + std::to_string(sum));
    }
  }

  static TransitionMatrix identity(int num_classes) {
    std::vector<double> e(static_cast<std::size_t>(num_classes * num_classes), 0.0);
    for (int i = 0; i < num_classes; ++i) e[static_cast<std::size_t>(i * num_classes + i)] = 1.0;
    return TransitionMatrix(num_classes, std::move(e));
  }

  int num_classes() const noexcept { return num_classes_; }
  double operator()(int i, int j) const {
    return entries_[static_cast<std::size_t>(i * num_classes_ + j)];
  }
  std::span<const double> row(int i) const {
    return std::span<const double>(entries_).subspan(static_cast<std::size_t>(i * num_classes_),
                                                     static_cast<std::size_t>(num_classes_));
  }

 private:
  int num_classes_;
  std::vector<double> entries_;
};

enum class NoiseFamily { quasi_gaussian, truncated_gaussian };

inline std::string_view to_string(NoiseFamily f) {
  return f == NoiseFamily::quasi_gaussian ? "quasi_gaussian" : "truncated_gaussian";
}

inline NoiseFamily parse_noise_family(std::string_view s) {
  if (s == "quasi_gaussian") return NoiseFamily::quasi_gaussian;
  if (s == "truncated_gaussian") return NoiseFamily::truncated_gaussian;
  throw InvalidParameterError("unknown noise family '" + std::string(s) + "'");
}

namespace detail {

// Fills off-diagonals with weight(|i-j|) and completes each diagonal.
template <typename OffDiagonal>
TransitionMatrix build_banded(int num_classes, OffDiagonal weight, std::string_view name) {
  if (num_classes < 2) throw InvalidParameterError("transition matrix needs C >= 2");
  std::vector<double> e(static_cast<std::size_t>(num_classes * num_classes), 0.0);
  for (int i = 0; i < num_classes; ++i) {
    double off = 0.0;
    for (int j = 0; j < num_classes; ++j) {
      if (i == j) continue;
      const double v = weight(std::abs(i - j));
      e[static_cast<std::size_t>(i * num_classes + j)] = v;
      off += v;
    }
    const double diag = 1.0 - off;
    if (diag < -1e-12)
      throw InfeasibleMatrixError(std::string(name) + ": row " + std::to_string(i + 1) +
                                  " has negative diagonal " + std::to_string(diag));
    e[static_cast<std::size_t>(i * num_classes + i)] = std::max(diag, 0.0);
  }
  return TransitionMatrix(num_classes, std::move(e));
}

}  // namespace detail

// Off-diagonals rho / |i - j|.
inline TransitionMatrix quasi_gaussian_matrix(int num_classes, double rho) {
  if (!(rho >= 0.0)) throw InvalidParameterError("rho must be >= 0");
  return detail::build_banded(
      num_classes, [rho](int dist) { return rho / static_cast<double>(dist); },
      "quasi_gaussian_matrix");
}

// rho on the first off-diagonals, zero beyond.
inline TransitionMatrix truncated_gaussian_matrix(int num_classes, double rho) {
  if (!(rho >= 0.0)) throw InvalidParameterError("rho must be >= 0");
  if (rho > 0.5)
    throw InfeasibleMatrixError("truncated_gaussian_matrix: rho " + std::to_string(rho) +
                                " > 0.5 leaves interior rows with a negative diagonal");
  return detail::build_banded(
      num_classes, [rho](int dist) { return dist == 1 ? rho : 0.0; },
      "truncated_gaussian_matrix");
}

inline TransitionMatrix make_transition_matrix(NoiseFamily family, int num_classes, double rho) {
  return family == NoiseFamily::quasi_gaussian ? quasi_gaussian_matrix(num_classes, rho)
                                               : truncated_gaussian_matrix(num_classes, rho);
}

// Expected fraction of flipped labels: 1 - sum_i prior_i * P_ii.
inline double realized_noise_rate(const TransitionMatrix& p, std::span<const double> priors) {
  if (priors.size() != static_cast<std::size_t>(p.num_classes()))
    throw ShapeError("realized_noise_rate: priors length differs from C");
  double sum = 0.0, flipped = 0.0;
  for (int i = 0; i < p.num_classes(); ++i) {
    if (priors[static_cast<std::size_t>(i)] < 0.0) throw InvalidParameterError("negative prior");
    sum += priors[static_cast<std::size_t>(i)];
    flipped += priors[static_cast<std::size_t>(i)] * (1.0 - p(i, i));
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidParameterError("priors must sum to 1");
  return flipped;
}

inline double realized_noise_rate_uniform(const TransitionMatrix& p) {
  std::vector<double> priors(static_cast<std::size_t>(p.num_classes()),
                             1.0 / p.num_classes());
  return realized_noise_rate(p, priors);
}

struct NoiseReport {
  // Expected flip fraction under the empirical class priors of the input.
  double requested_rate = 0.0;
  double realized_flip_fraction = 0.0;
  std::size_t total = 0;
  std::size_t flipped = 0;
  std::vector<std::size_t> flips_per_class;    // indexed by clean class - 1
  std::vector<std::size_t> samples_per_class;  // indexed by clean class - 1
};

struct NoiseInjection {
  std::vector<int> noisy_labels;  // 1-based
  NoiseReport report;
};

// Draws each noisy label independently from row (clean - 1) of P by inverse
// CDF on a stream seeded from `seed` alone.
inline NoiseInjection inject_noise(std::span<const int> clean_labels, const TransitionMatrix& p,
                                   std::uint64_t seed) {
  const int num_classes = p.num_classes();
  Rng rng(derive_seed(seed, "noise"));
  NoiseInjection out;
  out.noisy_labels.reserve(clean_labels.size());
  auto& rep = out.report;
  rep.flips_per_class.assign(static_cast<std::size_t>(num_classes), 0);
  rep.samples_per_class.assign(static_cast<std::size_t>(num_classes), 0);
  for (int y : clean_labels) {
    if (y < 1 || y > num_classes)
      throw InvalidClassError("inject_noise: label " + std::to_string(y) + " outside 1.." +
                              std::to_string(num_classes));
    const auto row = p.row(y - 1);
    const double u = rng.uniform();
    double cum = 0.0;
    int drawn = -1;
    for (int j = 0; j < num_classes; ++j) {
      cum += row[static_cast<std::size_t>(j)];
      if (u < cum) {
        drawn = j;
        break;
      }
    }
    if (drawn < 0) {
      // Rounding left u above the final cumulative sum; take the last reachable class.
      for (int j = num_classes - 1; j >= 0; --j)
        if (row[static_cast<std::size_t>(j)] > 0.0) {
          drawn = j;
          break;
        }
    }
    const int noisy = drawn + 1;
    out.noisy_labels.push_back(noisy);
    ++rep.samples_per_class[static_cast<std::size_t>(y - 1)];
    if (noisy != y) {
      ++rep.flipped;
      ++rep.flips_per_class[static_cast<std::size_t>(y - 1)];
    }
  }
  rep.total = clean_labels.size();
  rep.realized_flip_fraction =
      rep.total ? static_cast<double>(rep.flipped) / static_cast<double>(rep.total) : 0.0;
  if (rep.total) {
    std::vector<double> priors(static_cast<std::size_t>(num_classes));
    for (std::size_t c = 0; c < priors.size(); ++c)
      priors[c] = static_cast<double>(rep.samples_per_class[c]) / static_cast<double>(rep.total);
    rep.requested_rate = realized_noise_rate(p, priors);
  }
  return out;
}

// CSV form: first row holds C, then C rows of C probabilities.
inline void write_csv(std::ostream& os, const TransitionMatrix& p) {
  const int c = p.num_classes();
  os << c << '\n';
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) os << (j ? "," : "") << to_text(p(i, j));
    os << '\n';
  }
}

inline TransitionMatrix read_transition_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError("transition csv: missing header", lineno);
  int c = 0;
  try {
    c = std::stoi(line);
  } catch (const std::exception&) {
    throw ParseError("transition csv: header must be the class count", lineno);
  }
  std::vector<double> e;
  for (int i = 0; i < c; ++i) {
    ++lineno;
    if (!std::getline(is, line)) throw ParseError("transition csv: missing row", lineno);
    std::stringstream ss(line);
    std::string cell;
    int count = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        e.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("transition csv: bad number '" + cell + "'", lineno);
      }
      ++count;
    }
    if (count != c) throw ParseError("transition csv: expected " + std::to_string(c) + " values", lineno);
  }
  return TransitionMatrix(c, std::move(e));
}

}  // namespace ordnoise
