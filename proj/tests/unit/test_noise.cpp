#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "ordnoise/noise.hpp"
#include "support/gen.hpp"

using namespace ordnoise;

namespace {

std::vector<int> uniform_labels(int c, int per_class) {
  std::vector<int> y;
  for (int k = 1; k <= c; ++k) y.insert(y.end(), static_cast<std::size_t>(per_class), k);
  return y;
}

// Off-diagonal mass averaged over rows, computed from the formula directly.
double quasi_rate_oracle(int c, double rho) {
  double total = 0;
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j)
      if (i != j) total += rho / std::abs(i - j);
  return total / c;
}

}  // namespace

TEST(QuasiGaussian, FrozenRow) {
  const auto p = quasi_gaussian_matrix(4, 0.1);
  const std::vector<double> want = {0.81667, 0.1, 0.05, 0.03333};
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(p(0, j), want[static_cast<std::size_t>(j)], 1e-5);
}

TEST(QuasiGaussian, ZeroIsIdentity) {
  const auto p = quasi_gaussian_matrix(4, 0.0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(p(i, j), i == j ? 1.0 : 0.0);
}

TEST(QuasiGaussian, InfeasibleNamesRow) {
  // Row 2 of C=4 has off-diagonal weight 1 + 1 + 1/2 = 2.5, rows 1/4 have 1 + 1/2 + 1/3.
  try {
    quasi_gaussian_matrix(4, 0.5);
    FAIL() << "expected InfeasibleMatrixError";
  } catch (const InfeasibleMatrixError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(TruncatedGaussian, FrozenRows) {
  const auto p = truncated_gaussian_matrix(4, 0.15);
  const std::vector<double> row2 = {0.15, 0.70, 0.15, 0.0}, row1 = {0.85, 0.15, 0.0, 0.0};
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(p(1, j), row2[static_cast<std::size_t>(j)], 1e-12);
    EXPECT_NEAR(p(0, j), row1[static_cast<std::size_t>(j)], 1e-12);
  }
  EXPECT_THROW(truncated_gaussian_matrix(4, 0.51), InfeasibleMatrixError);
  const auto id = truncated_gaussian_matrix(4, 0.0);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(id(i, i), 1.0);
}

TEST(RealizedNoiseRate, FrozenValues) {
  EXPECT_NEAR(realized_noise_rate_uniform(quasi_gaussian_matrix(4, 0.1)), 0.21667, 1e-5);
  EXPECT_NEAR(realized_noise_rate_uniform(quasi_gaussian_matrix(4, 0.2)), 0.43333, 1e-5);
  EXPECT_NEAR(realized_noise_rate_uniform(truncated_gaussian_matrix(4, 0.3)), 0.45, 1e-12);
  EXPECT_NEAR(realized_noise_rate_uniform(truncated_gaussian_matrix(4, 0.15)), 0.225, 1e-12);
  const std::vector<double> skew = {0.7, 0.1, 0.1, 0.1};
  EXPECT_EQ(realized_noise_rate(TransitionMatrix::identity(4), skew), 0.0);
  const std::vector<double> short_priors = {0.5, 0.5};
  EXPECT_THROW(realized_noise_rate(TransitionMatrix::identity(4), short_priors), ShapeError);
}

TEST(RealizedNoiseRateProperty, MatchesFormulaOracle) {
  for (int c = 2; c <= 10; ++c)
    for (double rho : {0.0, 0.01, 0.05, 0.1, 0.15})
      EXPECT_NEAR(realized_noise_rate_uniform(quasi_gaussian_matrix(c, rho)), quasi_rate_oracle(c, rho), 1e-12);
}

TEST(TransitionProperty, RowStochasticOverGrid) {
  for (int c = 2; c <= 12; ++c) {
    for (double rho = 0.0; rho <= 0.5; rho += 0.025) {
      for (auto fam : {NoiseFamily::quasi_gaussian, NoiseFamily::truncated_gaussian}) {
        TransitionMatrix p = TransitionMatrix::identity(c);
        try {
          p = make_transition_matrix(fam, c, rho);
        } catch (const InfeasibleMatrixError&) {
          continue;
        }
        for (int i = 0; i < c; ++i) {
          double s = 0;
          for (int j = 0; j < c; ++j) {
            ASSERT_GE(p(i, j), 0.0);
            ASSERT_LE(p(i, j), 1.0);
            if (fam == NoiseFamily::truncated_gaussian && std::abs(i - j) > 1) { ASSERT_EQ(p(i, j), 0.0); }
            s += p(i, j);
          }
          ASSERT_NEAR(s, 1.0, 1e-9);
        }
      }
    }
  }
}

TEST(InjectNoise, IdentityKeepsLabels) {
  const auto y = uniform_labels(4, 50);
  const auto out = inject_noise(y, TransitionMatrix::identity(4), 3);
  EXPECT_EQ(out.noisy_labels, y);
  EXPECT_EQ(out.report.flipped, 0u);
  EXPECT_EQ(out.report.realized_flip_fraction, 0.0);
}

TEST(InjectNoise, RealizedRateNearExpected) {
  const auto y = uniform_labels(4, 2500);
  for (std::uint64_t seed : {1u, 2u}) {
    const auto out = inject_noise(y, quasi_gaussian_matrix(4, 0.1), seed);
    EXPECT_NEAR(out.report.realized_flip_fraction, 0.21667, 0.02);
    EXPECT_NEAR(out.report.requested_rate, 0.21667, 1e-5);
  }
}

TEST(InjectNoise, MonteCarloOracleAgrees) {
  // Independent sampler drawing from the same matrix with a different generator.
  const auto p = quasi_gaussian_matrix(4, 0.2);
  std::mt19937_64 eng(99);
  std::size_t flips = 0;
  const auto y = uniform_labels(4, 2500);
  for (int label : y) {
    std::discrete_distribution<int> d(p.row(label - 1).begin(), p.row(label - 1).end());
    flips += d(eng) + 1 != label;
  }
  const double mc = static_cast<double>(flips) / static_cast<double>(y.size());
  const auto out = inject_noise(y, p, 5);
  EXPECT_NEAR(out.report.realized_flip_fraction, mc, 0.03);
}

TEST(InjectNoise, DeterministicAndReportConsistent) {
  const auto y = uniform_labels(5, 300);
  const auto p = quasi_gaussian_matrix(5, 0.08);
  const auto a = inject_noise(y, p, 17), b = inject_noise(y, p, 17);
  EXPECT_EQ(a.noisy_labels, b.noisy_labels);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < y.size(); ++i) flips += a.noisy_labels[i] != y[i];
  EXPECT_EQ(a.report.flipped, flips);
  EXPECT_EQ(a.report.total, y.size());
  EXPECT_DOUBLE_EQ(a.report.realized_flip_fraction, static_cast<double>(flips) / static_cast<double>(y.size()));
  std::size_t per_class = 0;
  for (auto f : a.report.flips_per_class) per_class += f;
  EXPECT_EQ(per_class, flips);
  EXPECT_NE(inject_noise(y, p, 18).noisy_labels, a.noisy_labels);
}

TEST(InjectNoise, TruncatedNeverJumpsTwoLevels) {
  const auto y = uniform_labels(6, 500);
  const auto out = inject_noise(y, truncated_gaussian_matrix(6, 0.3), 4);
  for (std::size_t i = 0; i < y.size(); ++i) ASSERT_LE(std::abs(out.noisy_labels[i] - y[i]), 1);
}

TEST(InjectNoise, RejectsOutOfRange) {
  const std::vector<int> y = {1, 5};
  EXPECT_THROW(inject_noise(y, TransitionMatrix::identity(4), 0), InvalidClassError);
}

TEST(TransitionCsv, RoundTrip) {
  const auto p = quasi_gaussian_matrix(5, 0.07);
  std::stringstream ss;
  write_csv(ss, p);
  EXPECT_EQ(ss.str().substr(0, 2), "5\n");
  const auto q = read_transition_csv(ss);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_EQ(p(i, j), q(i, j));
  std::stringstream bad("2\n0.5,0.5\n0.5\n");
  EXPECT_THROW(read_transition_csv(bad), ParseError);
}

TEST(NoiseFamily, Parse) {
  EXPECT_EQ(parse_noise_family("quasi_gaussian"), NoiseFamily::quasi_gaussian);
  EXPECT_EQ(parse_noise_family("truncated_gaussian"), NoiseFamily::truncated_gaussian);
  EXPECT_THROW(parse_noise_family("pairflip"), InvalidParameterError);
}
