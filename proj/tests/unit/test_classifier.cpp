#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "ordnoise/classifier.hpp"
#include "support/gen.hpp"
#include "support/oracle.hpp"

using namespace ordnoise;

TEST(Init, DeterministicZeroBiasesAndCount) {
  const auto a = init_mlp(2, 32, 4, 5), b = init_mlp(2, 32, 4, 5);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == init_mlp(2, 32, 4, 6));
  EXPECT_EQ(a.parameter_count(), 228u);
  EXPECT_TRUE(a.b1.isZero(0.0));
  EXPECT_TRUE(a.b2.isZero(0.0));
  EXPECT_THROW(init_mlp(0, 3, 2, 0), InvalidParameterError);
}

TEST(Init, HeScale) {
  const auto p = init_mlp(50, 400, 4, 1);
  const double var1 = p.w1.array().square().mean();
  EXPECT_NEAR(var1, 2.0 / 50, 0.1 * 2.0 / 50);
  const double var2 = p.w2.array().square().mean();
  EXPECT_NEAR(var2, 2.0 / 400, 0.15 * 2.0 / 400);
}

TEST(Forward, ZeroNetworkGivesUniform) {
  const auto p = MlpParams::zeros(3, 5, 4);
  const std::vector<double> x = {1, -2, 3};
  const auto z = forward(p, x);
  EXPECT_TRUE(z.isZero(0.0));
  const std::vector<double> zv(z.data(), z.data() + z.size());
  const auto probs = temperature_softmax(zv, 1.0);
  for (double v : probs.probs()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, HandComputedUnitNetwork) {
  auto p = MlpParams::zeros(1, 1, 2);
  p.w1(0, 0) = 1;
  p.w2(0, 0) = 1;
  p.w2(1, 0) = 1;
  const std::vector<double> x = {1.0};
  const auto z = forward(p, x);
  EXPECT_EQ(z(0), 1.0);
  EXPECT_EQ(z(1), 1.0);
  const std::vector<double> neg = {-1.0};
  EXPECT_TRUE(forward(p, neg).isZero(0.0));
}

TEST(Forward, MatchesLoopOracleAndIsDeterministic) {
  testgen::Gen g(3);
  const auto p = init_mlp(3, 7, 4, 9);
  Eigen::MatrixXd x(5, 3);
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = g.normal();
  const auto z = forward_batch(p, x);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const auto want = oracle::logits(p, x, i);
    for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(z(i, c), want[static_cast<std::size_t>(c)], 1e-12);
  }
  EXPECT_TRUE(z == forward_batch(p, x));
}

TEST(Forward, ShapeMismatch) {
  const auto p = init_mlp(3, 4, 2, 0);
  const std::vector<double> x = {1, 2};
  EXPECT_THROW(forward(p, x), ShapeError);
}

TEST(Predict, OneBasedWithLowTie) {
  auto p = MlpParams::zeros(1, 1, 3);
  Eigen::MatrixXd x(1, 1);
  x << 1.0;
  EXPECT_EQ(predict(p, x), std::vector<int>{1});
  p.b2(2) = 1.0;
  EXPECT_EQ(predict(p, x), std::vector<int>{3});
}

TEST(Backward, LabelEqualToPredictionGivesZeroLogitGradient) {
  const auto p = init_mlp(2, 4, 3, 1);
  const std::vector<double> f = {0.3, -0.7};
  const auto z = forward(p, f);
  const auto probs = temperature_softmax(std::vector<double>(z.data(), z.data() + z.size()), 1.0);
  std::vector<std::pair<std::vector<double>, LabelDistribution>> batch;
  batch.emplace_back(f, LabelDistribution(std::vector<double>(probs.probs().begin(), probs.probs().end())));
  const auto g = backward(p, batch);
  EXPECT_LT(g.grads.b2.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(g.grads.w2.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, DuplicatedBatchKeepsMeanGradient) {
  const auto gc = oracle::random_case(4, LabelKind::soft);
  Eigen::MatrixXd x2(gc.x.rows() * 2, gc.x.cols()), t2(gc.targets.rows() * 2, gc.targets.cols());
  x2 << gc.x, gc.x;
  t2 << gc.targets, gc.targets;
  const auto a = backward(gc.net1, gc.x, gc.targets), b = backward(gc.net1, x2, t2);
  EXPECT_LT(max_abs_difference(a.grads, b.grads), 1e-14);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
}

TEST(Backward, EmptyBatch) {
  const auto p = init_mlp(2, 3, 2, 0);
  EXPECT_THROW(backward(p, Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)), EmptyBatchError);
  std::vector<std::pair<std::vector<double>, LabelDistribution>> none;
  EXPECT_THROW(backward(p, none), EmptyBatchError);
}

TEST(BackwardProperty, FiniteDifferencesAllLabelKinds) {
  for (auto kind : {LabelKind::hard, LabelKind::soft, LabelKind::smoothed}) {
    for (std::uint32_t seed = 1; seed <= 20; ++seed) {
      auto gc = oracle::random_case(seed, kind);
      const auto lg = backward(gc.net1, gc.x, gc.targets);
      EXPECT_NEAR(lg.loss, oracle::mean_ce(gc.net1, gc.x, gc.targets), 1e-12);
      const double err = oracle::max_relative_error(
          gc.net1, lg.grads, [&] { return oracle::mean_ce(gc.net1, gc.x, gc.targets); });
      EXPECT_LT(err, 1e-4) << "kind " << to_string(kind) << " seed " << seed;
    }
  }
}

TEST(JocorBackwardProperty, FiniteDifferences) {
  for (double lambda : {0.0, 0.1, 1.0}) {
    for (std::uint32_t seed = 1; seed <= 20; ++seed) {
      auto gc = oracle::random_case(100 + seed, LabelKind::hard);
      const auto jg = jocor_backward(gc.net1, gc.net2, gc.x, gc.targets, lambda);
      auto loss = [&] { return oracle::joint(gc.net1, gc.net2, gc.x, gc.targets, lambda); };
      EXPECT_NEAR(jg.loss, loss(), 1e-10);
      EXPECT_LT(oracle::max_relative_error(gc.net1, jg.grads_1, loss), 1e-4) << lambda << " " << seed;
      EXPECT_LT(oracle::max_relative_error(gc.net2, jg.grads_2, loss), 1e-4) << lambda << " " << seed;
    }
  }
}

TEST(JocorBackward, ZeroLambdaMatchesStandalone) {
  const auto gc = oracle::random_case(7, LabelKind::soft);
  const auto jg = jocor_backward(gc.net1, gc.net2, gc.x, gc.targets, 0.0);
  EXPECT_LT(max_abs_difference(jg.grads_1, backward(gc.net1, gc.x, gc.targets).grads), 1e-15);
  EXPECT_LT(max_abs_difference(jg.grads_2, backward(gc.net2, gc.x, gc.targets).grads), 1e-15);
}

TEST(JocorBackward, IdenticalNetworksRegularizerIsStationary) {
  const auto gc = oracle::random_case(8, LabelKind::hard);
  const auto with = jocor_backward(gc.net1, gc.net1, gc.x, gc.targets, 1.0);
  const auto without = jocor_backward(gc.net1, gc.net1, gc.x, gc.targets, 0.0);
  EXPECT_LT(max_abs_difference(with.grads_1, without.grads_1), 1e-6);
  EXPECT_LT(max_abs_difference(with.grads_2, without.grads_2), 1e-6);
  EXPECT_THROW(jocor_backward(gc.net1, gc.net1, gc.x, gc.targets, -1.0), InvalidParameterError);
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  auto p = init_mlp(2, 3, 2, 1);
  const auto before = p;
  auto st = AdamState::for_params(p);
  st.m.w1.setConstant(1.0);
  st.v.w1.setConstant(1.0);
  adam_step(p, p.zeros_like(), st);
  // m/c1 is nonzero here, so only check the pristine tensors and the decay.
  EXPECT_TRUE(p.b1 == before.b1);
  EXPECT_TRUE(p.w2 == before.w2);
  EXPECT_DOUBLE_EQ(st.m.w1(0, 0), 0.9);
  EXPECT_DOUBLE_EQ(st.v.w1(0, 0), 0.999);
  auto q = init_mlp(2, 3, 2, 1);
  auto fresh = AdamState::for_params(q);
  adam_step(q, q.zeros_like(), fresh);
  EXPECT_TRUE(q == before);
  EXPECT_EQ(fresh.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstSign) {
  auto p = init_mlp(2, 3, 2, 2);
  const auto before = p;
  auto g = p.zeros_like();
  g.w1.setConstant(0.3);
  g.w1(0, 0) = -2.0;
  g.b2.setConstant(-1e-3);
  auto st = AdamState::for_params(p, 0.01);
  adam_step(p, g, st);
  EXPECT_NEAR(p.w1(0, 0) - before.w1(0, 0), 0.01, 1e-8);
  EXPECT_NEAR(p.w1(1, 1) - before.w1(1, 1), -0.01, 1e-8);
  EXPECT_NEAR(p.b2(0) - before.b2(0), 0.01, 1e-6);
}

TEST(Adam, DeterministicAndShapeChecked) {
  auto a = init_mlp(2, 3, 2, 3), b = a;
  auto g = a.zeros_like();
  g.w2.setConstant(0.5);
  auto sa = AdamState::for_params(a), sb = AdamState::for_params(b);
  adam_step(a, g, sa);
  adam_step(b, g, sb);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(sa.m == sb.m);
  auto wrong = init_mlp(2, 4, 2, 0);
  EXPECT_THROW(adam_step(a, wrong, sa), ShapeError);
}

TEST(Adam, WeightDecayPullsTowardZero) {
  auto p = MlpParams::zeros(1, 1, 2);
  p.w1(0, 0) = 5.0;
  auto st = AdamState::for_params(p, 0.1, 1.0);
  adam_step(p, p.zeros_like(), st);
  EXPECT_NEAR(p.w1(0, 0), 4.9, 1e-8);
}

TEST(Training, LossDecreasesOnSeparableToy) {
  testgen::Gen g(5);
  Eigen::MatrixXd x(40, 2);
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    const int cls = i % 2 + 1;
    x(i, 0) = (cls == 1 ? -1.5 : 1.5) + 0.3 * g.normal();
    x(i, 1) = g.normal();
    y.push_back(cls);
  }
  const auto t = make_targets(LabelKind::hard, y, 2);
  auto p = init_mlp(2, 8, 2, 1);
  auto st = AdamState::for_params(p, 0.01);
  std::vector<double> losses;
  for (int step = 0; step < 100; ++step) {
    const auto lg = backward(p, x, t);
    losses.push_back(lg.loss);
    adam_step(p, lg.grads, st);
  }
  for (std::size_t i = 11; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1] + 1e-3) << i;
  EXPECT_LT(losses.back(), 0.5 * losses.front());
}

TEST(ParamsCsv, RoundTripExact) {
  const auto p = init_mlp(3, 5, 4, 11);
  std::stringstream ss;
  write_params_csv(ss, p);
  const auto q = read_params_csv(ss);
  EXPECT_TRUE(p == q);
}

TEST(ParamsCsv, Errors) {
  std::stringstream truncated("W1,2,1\n0.5\n");
  EXPECT_THROW(read_params_csv(truncated), ParseError);
  std::stringstream wide_bias("W1,1,1\n1\nb1,1,2\n0,0\nW2,2,1\n1\n1\nb2,2,1\n0\n0\n");
  EXPECT_THROW(read_params_csv(wide_bias), ShapeError);
}
