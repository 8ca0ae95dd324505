#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "lotlab/errors.hpp"
#include "lotlab/metrics.hpp"
#include "support.hpp"

namespace lotlab {
namespace {

ParamSet vec2(double a, double b) {
  ParamSet p;
  p.layers.push_back({"fc1", Eigen::MatrixXd::Constant(1, 1, a), Eigen::VectorXd::Constant(1, b)});
  return p;
}

// Two-pass variance over flattened gradients, independent of the library.
double two_pass(const std::vector<Eigen::VectorXd>& g) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(g[0].size());
  for (const auto& x : g) mean += x;
  mean /= static_cast<double>(g.size());
  double s = 0;
  for (const auto& x : g) s += (x - mean).squaredNorm();
  return s / static_cast<double>(g.size());
}

TEST(GradVariance, IdenticalGradsGiveZero) {
  const std::vector<ParamSet> g(5, vec2(0.3, -1.2));
  EXPECT_LE(minibatch_grad_variance(g, Scope::global()), 1e-28);
}

TEST(GradVariance, SymmetricPair) {
  const std::vector<ParamSet> g = {vec2(1, 0), vec2(-1, 0)};
  EXPECT_DOUBLE_EQ(minibatch_grad_variance(g, Scope::global()), 1.0);
}

TEST(GradVariance, MatchesTwoPassOracle) {
  const ParamSet like = testing::random_net({3, 5, 4}, Activation::relu(), 1);
  for (std::size_t b : {1u, 2u, 16u, 64u}) {
    std::vector<ParamSet> g;
    std::vector<Eigen::VectorXd> flat, fc2;
    for (std::size_t i = 0; i < b; ++i) {
      g.push_back(testing::random_like(like, 1000 * b + i));
      flat.push_back(g.back().flatten());
      const auto& l = g.back().layers[1];
      Eigen::VectorXd v(l.size());
      v << l.weights.reshaped(), l.bias;
      fc2.push_back(v);
    }
    EXPECT_NEAR(minibatch_grad_variance(g, Scope::global()), two_pass(flat),
                1e-12 * two_pass(flat) + (b == 1 ? 1e-15 : 0.0));
    EXPECT_NEAR(minibatch_grad_variance(g, Scope::layer("fc2")), two_pass(fc2),
                1e-12 * two_pass(fc2) + (b == 1 ? 1e-15 : 0.0));

    ParamSet mean = like.zeros_like();
    for (const auto& x : g) mean.axpy(1.0 / static_cast<double>(b), x);
    GradVarianceAccumulator acc(mean);
    for (const auto& x : g) acc.add(x);
    EXPECT_EQ(acc.count(), b);
    EXPECT_NEAR(acc.variance(), two_pass(flat), 1e-12 * two_pass(flat) + 1e-15);
    EXPECT_NEAR(acc.variance(1), two_pass(fc2), 1e-12 * two_pass(fc2) + 1e-15);
  }
}

TEST(GradVariance, Errors) {
  EXPECT_THROW(minibatch_grad_variance(std::vector<ParamSet>{}, Scope::global()), ArgumentError);
  const std::vector<ParamSet> g = {vec2(1, 0)};
  EXPECT_THROW(minibatch_grad_variance(g, Scope::layer("fc7")), ConfigError);
  GradVarianceAccumulator acc(vec2(0, 0));
  EXPECT_THROW(acc.variance(), StateError);
}

TEST(NormalizedSharpness, Examples) {
  EXPECT_EQ(normalized_sharpness(0.0, 1e-3), 0.0);
  EXPECT_EQ(normalized_sharpness(12.5, 1.0), 12.5);
  EXPECT_NEAR(normalized_sharpness(150.0, 2e-3), 0.3, 1e-15);
  EXPECT_THROW(normalized_sharpness(1.0, 0.0), ArgumentError);
}

TEST(Window, ConstantStream) {
  WindowStats w;
  for (int i = 0; i < 50; ++i) {
    const WindowSnapshot s = w.push(0.2);
    EXPECT_LE(s.var, 1e-28);
    EXPECT_LE(s.vol, 1e-27);
    EXPECT_NEAR(s.mu, 0.2, 1e-15);
  }
  EXPECT_EQ(w.samples().size(), 30u);
}

TEST(Window, AlternatingTwoCycle) {
  WindowStats w;
  WindowSnapshot s;
  for (int i = 0; i < 600; ++i) s = w.push(i % 2 ? 2.0 : 0.0);
  EXPECT_DOUBLE_EQ(s.var, 1.0);
  // The EMA of a 2-cycle oscillates around 1 with amplitude d/(2-d).
  EXPECT_NEAR(s.mu, 1.0, 0.1 / 1.9 + 1e-12);
  EXPECT_NEAR(s.vol, 1.0 / (s.mu + 1e-8), 1e-15);
  EXPECT_NEAR(s.vol, 1.0, 0.06);
}

TEST(Window, SingleSampleIsUnarmed) {
  WindowStats w;
  const WindowSnapshot s = w.push(3.0);
  EXPECT_EQ(s.var, 0.0);
  EXPECT_FALSE(s.armed);
  EXPECT_EQ(s.mu, 3.0);
  EXPECT_TRUE(w.push(1.0).armed);
}

TEST(Window, EmaRecurrence) {
  WindowStats w;
  w.push(1.0);
  const WindowSnapshot s = w.push(2.0);
  EXPECT_DOUBLE_EQ(s.mu, 0.9 * 1.0 + 0.1 * 2.0);
}

TEST(Window, VarianceMatchesQueueTwoPass) {
  Rng rng(5);
  WindowConfig cfg;
  cfg.capacity = 7;
  WindowStats w(cfg);
  for (int i = 0; i < 40; ++i) {
    const WindowSnapshot s = w.push(rng.uniform(0.0, 3.0));
    const auto& q = w.samples();
    ASSERT_LE(q.size(), 7u);
    const double mean = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
    double ss = 0;
    for (double x : q) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(s.var, ss / static_cast<double>(q.size()), 1e-14);
    EXPECT_GE(s.var, 0.0);
  }
}

TEST(Window, NonFiniteSampleRejected) {
  WindowStats w;
  EXPECT_THROW(w.push(std::numeric_limits<double>::quiet_NaN()), NumericError);
  EXPECT_EQ(w.snapshot().count, 0u);
}

TEST(Bounds, AlphaGStar) {
  EXPECT_DOUBLE_EQ(alpha_g_star(1.0, 256.0, 256).value, 1.0);
  EXPECT_DOUBLE_EQ(alpha_g_star(0.5, 64.0, 32).value, 0.25);
  const Bound capped = alpha_g_star(1.0, 0.0, 8);
  EXPECT_TRUE(capped.capped);
  EXPECT_EQ(capped.value, kBoundCap);
  EXPECT_FALSE(alpha_g_star(1.0, 1.0, 1).capped);
  EXPECT_THROW(alpha_g_star(-1.0, 1.0, 1), ArgumentError);
  EXPECT_THROW(alpha_g_star(1.0, -1.0, 1), ArgumentError);
  EXPECT_THROW(alpha_g_star(1.0, 1.0, 0), ArgumentError);
}

TEST(Bounds, AlphaVolStar) {
  BoundConfig cfg;
  EXPECT_TRUE(alpha_vol_star(0.0, cfg).capped);
  EXPECT_DOUBLE_EQ(alpha_vol_star(4.0, cfg).value, 0.25);
  cfg.kappa = 2.0;
  EXPECT_DOUBLE_EQ(alpha_vol_star(0.5, cfg).value, 1.0);
  EXPECT_THROW(alpha_vol_star(-1.0, cfg), ArgumentError);
}

TEST(Bounds, CantelliCap) {
  EXPECT_DOUBLE_EQ(cantelli_cap(1.0, 0.0, 0.1).value, 2.0);
  EXPECT_DOUBLE_EQ(cantelli_cap(1.0, 0.0, 0.9).value, 2.0);
  EXPECT_NEAR(cantelli_cap(1.0, 1.0, 0.2).value, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(cantelli_cap(0.5, 1.0, 1 - 1e-12).value, 2.0 / 0.5, 1e-5);
  EXPECT_TRUE(cantelli_cap(0.0, 0.0, 0.1).capped);
  EXPECT_THROW(cantelli_cap(1.0, 1.0, 0.0), ArgumentError);
  EXPECT_THROW(cantelli_cap(-1.0, 1.0, 0.5), ArgumentError);
}

TEST(Bounds, CantelliMonotone) {
  double prev = cantelli_cap(1.0, 0.0, 0.1).value;
  for (double s = 0.1; s < 5; s += 0.1) {
    const double v = cantelli_cap(1.0, s, 0.1).value;
    EXPECT_LE(v, prev);
    prev = v;
  }
  prev = cantelli_cap(1.0, 0.5, 0.9).value;
  for (double d = 0.8; d > 0.01; d -= 0.05) {
    const double v = cantelli_cap(1.0, 0.5, d).value;
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Bounds, ContractionBound) {
  EXPECT_DOUBLE_EQ(contraction_bound(1.0, 1.0, 0.5).value, 0.5);
  EXPECT_TRUE(contraction_bound(0.0, 0.0, 0.5).capped);
}

TEST(Bounds, CombinedExamples) {
  BoundConfig cfg;
  cfg.beta = 1.0;
  const CombinedBound c = combined_bound(1.0, 1.0, 1.0, 1, cfg);
  EXPECT_DOUBLE_EQ(c.sigma_tilde_sq, 2.0);
  EXPECT_DOUBLE_EQ(c.alpha_tilde_star.value, 0.5);
  cfg.beta = 0.0;
  for (double vol : {0.0, 0.3, 7.0})
    EXPECT_EQ(combined_bound(0.7, 3.0, vol, 16, cfg).alpha_tilde_star.value,
              alpha_g_star(0.7, 3.0, 16).value);
  EXPECT_TRUE(combined_bound(1.0, 0.0, 0.0, 4, cfg).alpha_tilde_star.capped);
}

TEST(Bounds, CombinedMonotonicity) {
  BoundConfig cfg;
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double g2 = rng.uniform(0.01, 5), s2 = rng.uniform(0.01, 5), vol = rng.uniform(0, 5);
    const std::size_t b = 1 + rng.uniform_index(64);
    const double base = combined_bound(g2, s2, vol, b, cfg).alpha_tilde_star.value;
    EXPECT_LE(base, alpha_g_star(g2, s2, b).value);
    EXPECT_LE(combined_bound(g2, s2, vol + 0.5, b, cfg).alpha_tilde_star.value, base);
    EXPECT_LE(combined_bound(g2, s2 + 0.5, vol, b, cfg).alpha_tilde_star.value, base);
    EXPECT_GE(combined_bound(g2, s2, vol, b + 1, cfg).alpha_tilde_star.value, base);
    EXPECT_GE(combined_bound(g2 + 0.5, s2, vol, b, cfg).alpha_tilde_star.value, base);
  }
  double prev = kBoundCap;
  for (double vol = 0; vol < 1e4; vol = vol * 3 + 1) {
    const double v = combined_bound(1.0, 1.0, vol, 1, cfg).alpha_tilde_star.value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Bounds, ConfigValidation) {
  BoundConfig cfg;
  cfg.kappa = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.delta = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.c_contraction = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Report, AssemblesBounds) {
  WindowStats w;
  w.push(0.1);
  const WindowSnapshot snap = w.push(0.3);
  const ThresholdReport r = make_report("fc1", 0.2, 0.5, 64.0, 32, 0.3, snap, BoundConfig{});
  EXPECT_EQ(r.layer_id, "fc1");
  EXPECT_TRUE(r.armed);
  EXPECT_DOUBLE_EQ(r.alpha_g_star.value, 0.25);
  EXPECT_DOUBLE_EQ(r.vol, snap.vol);
  EXPECT_LE(r.alpha_tilde_star.value, r.alpha_g_star.value);
  EXPECT_DOUBLE_EQ(r.alpha_vol_star.value, 1.0 / snap.vol);
  EXPECT_DOUBLE_EQ(r.cantelli_cap.value, cantelli_cap(snap.mu, std::sqrt(snap.var), 0.1).value);
}

TEST(PredictLot, Examples) {
  const StepFlags none = {{false, false}, {false, false}};
  const StepFlags all = {{true, false}, {true, false}};
  const StepFlags one_of_three = {{false, false}, {false, true}, {false, false}};
  const LotPrediction p = predict_lot({none, all, one_of_three, {}});
  EXPECT_EQ(p.per_task[0], 0.0);
  EXPECT_EQ(p.per_task[1], 1.0);
  EXPECT_DOUBLE_EQ(p.per_task[2], 1.0 / 3.0);
  EXPECT_TRUE(p.empty_task[3]);
  EXPECT_TRUE(std::isnan(p.per_task[3]));
  EXPECT_EQ(p.steps, 7u);
  EXPECT_DOUBLE_EQ(p.overall, 3.0 / 7.0);
}

TEST(Diagnostics, ZeroGrads) {
  const ParamSet p = testing::random_net({3, 4, 2}, Activation::relu(), 1);
  const Diagnostics d = diagnostics(p, p.zeros_like(), {});
  EXPECT_EQ(d.grad_norm, 0.0);
  EXPECT_EQ(d.grad_param_ratio, 0.0);
  EXPECT_NEAR(d.weight_norm, p.norm(), 1e-15);
  EXPECT_FALSE(d.ratio_degenerate);
  const Diagnostics z = diagnostics(p.zeros_like(), p, {});
  EXPECT_TRUE(z.ratio_degenerate);
  EXPECT_EQ(z.grad_param_ratio, 0.0);
}

TEST(Diagnostics, UnitSignEntropy) {
  Eigen::MatrixXd half(4, 1);
  half << 1, -1, 2, -3;
  EXPECT_DOUBLE_EQ(unit_sign_entropy({half}), 1.0);
  EXPECT_EQ(unit_sign_entropy({Eigen::MatrixXd::Ones(5, 3)}), 0.0);
  EXPECT_EQ(unit_sign_entropy({-Eigen::MatrixXd::Ones(5, 3)}), 0.0);
  Eigen::MatrixXd mixed(4, 2);
  mixed << 1, 1, -1, 1, 1, 1, -1, -1;
  // Unit 0 active 1/2, unit 1 active 3/4.
  const double h34 = -(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25));
  EXPECT_NEAR(unit_sign_entropy({mixed}), (1.0 + h34) / 2.0, 1e-15);
}

}  // namespace
}  // namespace lotlab
