#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lotlab/adam.hpp"
#include "lotlab/errors.hpp"
#include "support.hpp"

namespace lotlab {
namespace {

ParamSet two_layer(double w1, double w2) {
  ParamSet p;
  p.layers.push_back({"fc1", Eigen::MatrixXd::Constant(1, 1, w1), Eigen::VectorXd::Zero(1)});
  p.layers.push_back({"fc2", Eigen::MatrixXd::Constant(1, 1, w2), Eigen::VectorXd::Zero(1)});
  return p;
}

ParamSet constant_like(const ParamSet& like, const std::vector<double>& values) {
  ParamSet g = like.zeros_like();
  Eigen::VectorXd flat(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) flat(static_cast<Eigen::Index>(i)) = values[i];
  g.assign(flat);
  return g;
}

// Textbook scalar Adam, written independently of the library.
struct ScalarAdam {
  double eta, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return w - eta * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, FirstStepOnScalarQuadratic) {
  ParamSet p = two_layer(1.0, 0.0);
  Adam adam(p, AdamConfig{}, 0.1);
  adam.step(p, constant_like(p, {1.0, 0.0, 0.0, 0.0}));
  EXPECT_NEAR(p.layers[0].weights(0, 0), 0.9, 1e-8);
}

TEST(Adam, FiveStepsMatchScalarReference) {
  ParamSet p = two_layer(1.0, -2.5);
  Adam adam(p, AdamConfig{}, 0.1);
  ScalarAdam ref_a{0.1}, ref_b{0.1};
  double a = 1.0, b = -2.5;
  for (int k = 0; k < 5; ++k) {
    // l(w) = w^2 / 2, so g = w.
    adam.step(p, constant_like(p, {p.layers[0].weights(0, 0), 0.0,
                                   p.layers[1].weights(0, 0), 0.0}));
    a = ref_a.step(a, a);
    b = ref_b.step(b, b);
    EXPECT_NEAR(p.layers[0].weights(0, 0), a, 1e-12);
    EXPECT_NEAR(p.layers[1].weights(0, 0), b, 1e-12);
  }
  EXPECT_EQ(adam.t(), 5);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParamSet p = two_layer(0.3, -0.7);
  const ParamSet before = p;
  Adam adam(p, AdamConfig{}, 1e-3);
  adam.step(p, p.zeros_like());
  EXPECT_EQ(p.flatten(), before.flatten());
}

TEST(Adam, UpdateEqualsBiasCorrectedFormula) {
  const ParamSet init = testing::random_net({3, 4, 2}, Activation::relu(), 1);
  ParamSet p = init;
  Adam adam(p, AdamConfig{}, 2e-3);
  for (std::uint64_t k = 0; k < 4; ++k) {
    const ParamSet g = testing::random_like(p, k);
    const ParamSet before = p;
    adam.step(p, g);
    const double t = static_cast<double>(adam.t());
    const Eigen::VectorXd mh = adam.first_moment().flatten() / (1 - std::pow(0.9, t));
    const Eigen::VectorXd vh = adam.second_moment().flatten() / (1 - std::pow(0.999, t));
    const Eigen::VectorXd want =
        before.flatten().array() - 2e-3 * mh.array() / (vh.array().sqrt() + 1e-8);
    EXPECT_EQ(p.flatten(), want);
  }
}

TEST(Adam, MomentsMatchGradientHistory) {
  ParamSet p = testing::random_net({2, 3, 2}, Activation::relu(), 2);
  Adam adam(p, AdamConfig{}, 1e-3);
  std::vector<Eigen::VectorXd> history;
  for (std::uint64_t k = 0; k < 6; ++k) {
    const ParamSet g = testing::random_like(p, 50 + k);
    history.push_back(g.flatten());
    adam.step(p, g);
  }
  Eigen::VectorXd m = Eigen::VectorXd::Zero(history[0].size()), v = m;
  const int t = static_cast<int>(history.size());
  for (int s = 0; s < t; ++s) {
    m += (1 - 0.9) * std::pow(0.9, t - 1 - s) * history[static_cast<std::size_t>(s)];
    v += (1 - 0.999) * std::pow(0.999, t - 1 - s) *
         history[static_cast<std::size_t>(s)].array().square().matrix();
  }
  EXPECT_LE(testing::rel_err(adam.first_moment().flatten(), m), 1e-13);
  EXPECT_LE(testing::rel_err(adam.second_moment().flatten(), v), 1e-13);
}

TEST(Adam, NonFiniteGradientNamesLayer) {
  ParamSet p = two_layer(1.0, 1.0);
  Adam adam(p, AdamConfig{}, 1e-3);
  ParamSet g = p.zeros_like();
  g.layers[1].bias(0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam.step(p, g);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer_id(), "fc2");
  }
  EXPECT_EQ(adam.t(), 0);
}

TEST(Adam, ConfigValidation) {
  const ParamSet p = two_layer(1, 1);
  EXPECT_THROW(Adam(p, AdamConfig{1.0, 0.999, 1e-8}, 1e-3), ConfigError);
  EXPECT_THROW(Adam(p, AdamConfig{0.9, 0.999, 0.0}, 1e-3), ConfigError);
  EXPECT_THROW(Adam(p, AdamConfig{}, 0.0), ConfigError);
  Adam adam(p, AdamConfig{}, 1e-3);
  EXPECT_THROW(adam.set_eta(0, -1.0), ConfigError);
  EXPECT_THROW(adam.set_eta("fc9", 1.0), ConfigError);
}

TEST(EffectiveStep, RequiresAStep) {
  ParamSet p = two_layer(1, 1);
  Adam adam(p, AdamConfig{}, 1e-3);
  EXPECT_THROW(adam.effective_step(Scope::global()), StateError);
  EXPECT_THROW(adam.agg_step(Scope::global()), StateError);
}

TEST(EffectiveStep, UnitSecondMoment) {
  ParamSet p = two_layer(1, 1);
  Adam adam(p, AdamConfig{}, 1e-3);
  const ParamSet ones = constant_like(p, {1, 1, 1, 1});
  for (int k = 0; k < 400; ++k) adam.step(p, ones);
  EXPECT_NEAR(adam.effective_step(Scope::global()), 9.99999e-4, 1e-9);
  EXPECT_NEAR(adam.effective_step(Scope::global()), 1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(EffectiveStep, MatchesElementwiseAverage) {
  ParamSet p = testing::random_net({3, 5, 4}, Activation::relu(), 3);
  Adam adam(p, AdamConfig{}, 1e-3);
  adam.set_eta("fc2", 3e-4);
  for (std::uint64_t k = 0; k < 7; ++k) adam.step(p, testing::random_like(p, 80 + k));
  const double t = static_cast<double>(adam.t());
  double total = 0;
  std::size_t count = 0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const double eta = l == 0 ? 1e-3 : 3e-4;
    double layer_sum = 0;
    const Layer& v = adam.second_moment().layers[l];
    std::vector<double> entries(v.weights.data(), v.weights.data() + v.weights.size());
    entries.insert(entries.end(), v.bias.data(), v.bias.data() + v.bias.size());
    for (double vi : entries) {
      const double vh = vi / (1 - std::pow(0.999, t));
      layer_sum += eta / ((1 - std::pow(0.9, t)) * (std::sqrt(vh) + 1e-8));
    }
    EXPECT_NEAR(adam.effective_step(Scope::layer(p.layers[l].id)),
                layer_sum / static_cast<double>(entries.size()),
                1e-14 * layer_sum / static_cast<double>(entries.size()));
    total += layer_sum;
    count += entries.size();
  }
  EXPECT_NEAR(adam.effective_step(Scope::global()), total / static_cast<double>(count),
              1e-14 * total / static_cast<double>(count));
}

TEST(EffectiveStep, HomogeneousInLayerEta) {
  ParamSet p = testing::random_net({3, 5, 4}, Activation::relu(), 4);
  Adam adam(p, AdamConfig{}, 1e-3);
  adam.step(p, testing::random_like(p, 1));
  const double a1 = adam.effective_step(Scope::layer("fc1"));
  const double a2 = adam.effective_step(Scope::layer("fc2"));
  adam.set_eta("fc1", 2e-3);
  EXPECT_EQ(adam.effective_step(Scope::layer("fc1")), 2 * a1);
  EXPECT_EQ(adam.effective_step(Scope::layer("fc2")), a2);
}

TEST(AggStep, ConstantSecondMoment) {
  ParamSet p = two_layer(1, 1);
  Adam adam(p, AdamConfig{}, 1e-3);
  const ParamSet twos = constant_like(p, {2, 2, 2, 2});
  adam.step(p, twos);
  EXPECT_NEAR(adam.agg_step(Scope::global()), 1e-3 / (2 + 1e-8), 1e-15);
}

TEST(AggStep, ZeroSecondMoment) {
  ParamSet p = two_layer(1, 1);
  Adam adam(p, AdamConfig{}, 1e-3);
  adam.step(p, p.zeros_like());
  EXPECT_DOUBLE_EQ(adam.agg_step(Scope::global()), 1e-3 / 1e-8);
}

TEST(AggStep, MixedSecondMoment) {
  ParamSet p;
  p.layers.push_back({"fc1", Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)});
  Adam adam(p, AdamConfig{}, 1e-3);
  adam.step(p, constant_like(p, {1, 3}));
  EXPECT_NEAR(adam.agg_step(Scope::global()), 1e-3 / (std::sqrt(5.0) + 1e-8), 1e-15);
}

TEST(Reset, RestoresFreshState) {
  ParamSet p = testing::random_net({3, 4, 2}, Activation::relu(), 5);
  const ParamSet init = p;
  Adam adam(p, AdamConfig{}, 1e-3);
  const ParamSet g = testing::random_like(p, 9);
  ParamSet fresh = init;
  adam.step(fresh, g);
  const Eigen::VectorXd first_step = fresh.flatten();

  for (std::uint64_t k = 0; k < 3; ++k) adam.step(p, testing::random_like(p, 20 + k));
  adam.set_eta("fc1", 5e-2);
  adam.reset();
  EXPECT_EQ(adam.t(), 0);
  EXPECT_TRUE(adam.first_moment().flatten().isZero(0.0));
  EXPECT_TRUE(adam.second_moment().flatten().isZero(0.0));
  EXPECT_EQ(adam.eta("fc1"), 1e-3);
  EXPECT_THROW(adam.effective_step(Scope::global()), StateError);
  adam.reset();
  EXPECT_EQ(adam.t(), 0);

  ParamSet replay = init;
  adam.step(replay, g);
  EXPECT_EQ(replay.flatten(), first_step);
}

TEST(Adam, DeterministicStates) {
  const ParamSet init = testing::random_net({3, 4, 2}, Activation::relu(), 6);
  ParamSet a = init, b = init;
  Adam oa(a, AdamConfig{}, 1e-3), ob(b, AdamConfig{}, 1e-3);
  for (std::uint64_t k = 0; k < 5; ++k) {
    const ParamSet g = testing::random_like(init, k);
    oa.step(a, g);
    ob.step(b, g);
  }
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_EQ(oa.second_moment().flatten(), ob.second_moment().flatten());
}

}  // namespace
}  // namespace lotlab
