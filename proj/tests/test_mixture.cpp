#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fairdiff/conditional_model.hpp"
#include "fairdiff/rng.hpp"

using namespace fairdiff;

namespace {

GaussianMixture two_d() {
  return GaussianMixture({Component{0.2, {-1.0, 0.5}, {0.3, 0.8}}, Component{0.5, {1.5, -0.5}, {1.2, 0.4}},
                          Component{0.3, {0.0, 2.0}, {0.6, 0.6}}});
}

}  // namespace

TEST(GaussianMixture, Validation) {
  EXPECT_THROW(GaussianMixture(std::vector<Component>{}), InputError);
  EXPECT_THROW(GaussianMixture({Component{0.5, {0.0}, {1.0}}}), InputError);
  EXPECT_THROW(GaussianMixture({Component{1.0, {0.0}, {0.0}}}), InputError);
  EXPECT_THROW(GaussianMixture({Component{1.0, {0.0}, {1.0, 1.0}}}), InputError);
  EXPECT_THROW(GaussianMixture({Component{1.5, {0.0}, {1.0}}, Component{-0.5, {0.0}, {1.0}}}), InputError);
  EXPECT_NO_THROW(GaussianMixture({Component{1.0, {0.0}, {1.0}}, Component{0.0, {3.0}, {1.0}}}));
}

TEST(GaussianMixture, DensityMatchesClosedForm) {
  const GaussianMixture m({Component{0.25, {-1.0}, {0.5}}, Component{0.75, {2.0}, {2.0}}});
  auto npdf = [](double x, double mu, double var) {
    return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * std::numbers::pi * var);
  };
  for (double x : {-3.0, -1.0, 0.0, 0.7, 2.0, 5.0}) {
    const double x1[] = {x};
    EXPECT_NEAR(m.density(x1), 0.25 * npdf(x, -1, 0.5) + 0.75 * npdf(x, 2, 2), 1e-15);
  }
}

TEST(GaussianMixture, ZeroWeightComponentDropsOut) {
  const GaussianMixture a({Component{1.0, {0.0}, {1.0}}, Component{0.0, {3.0}, {1.0}}});
  const GaussianMixture b({Component{1.0, {0.0}, {1.0}}});
  const double x[] = {2.5};
  EXPECT_DOUBLE_EQ(a.log_density(x), b.log_density(x));
  EXPECT_DOUBLE_EQ(a.score(x)[0], -2.5);
}

TEST(GaussianMixture, FarTailsStayFinite) {
  const GaussianMixture m({Component{0.5, {-4.0}, {0.25}}, Component{0.5, {4.0}, {0.25}}});
  const double x[] = {1e4};
  EXPECT_TRUE(std::isfinite(m.log_density(x)));
  EXPECT_NEAR(m.score(x)[0], -(1e4 - 4.0) / 0.25, 1e-6);
}

TEST(NoisedParams, ClosedFormMoments) {
  const GaussianMixture m({Component{1.0, {2.0}, {0.25}}});
  const auto n = noised_params(m, 0.7).mixture;
  EXPECT_NEAR(n.component(0).mean[0], 2.0 * std::exp(-0.7), 1e-15);
  EXPECT_NEAR(n.component(0).variance[0], std::exp(-1.4) * 0.25 + 1 - std::exp(-1.4), 1e-15);
  EXPECT_THROW(noised_params(m, -1.0), InputError);
  // large t forgets the data
  const auto far = noised_params(m, 40.0).mixture;
  EXPECT_NEAR(far.component(0).mean[0], 0.0, 1e-15);
  EXPECT_NEAR(far.component(0).variance[0], 1.0, 1e-15);
}

// Central differences of log p_t with step 1e-5 at 20 points.
TEST(MixtureScore, MatchesFiniteDifferences) {
  const auto base = two_d();
  NormalStream rng(20, 0);
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double t = 2.0 * rng.uniform();
    std::vector<double> x{2.0 * rng.normal(), 2.0 * rng.normal()};
    const auto s = mixture_score(base, x, t);
    const auto noised = noised_params(base, t).mixture;
    for (std::size_t d = 0; d < 2; ++d) {
      auto xp = x, xm = x;
      xp[d] += h;
      xm[d] -= h;
      const double fd = (noised.log_density(xp) - noised.log_density(xm)) / (2 * h);
      worst = std::max(worst, std::abs(fd - s[d]));
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(MixtureScore, RejectsBadInput) {
  const auto base = two_d();
  EXPECT_THROW(mixture_score(base, std::vector<double>{0.0}, 1.0), InputError);
  EXPECT_THROW(mixture_score(base, std::vector<double>{NAN, 0.0}, 1.0), InputError);
}

TEST(ConditionalModel, SoftmaxWeights) {
  const ConditionalMixtureModel m({{"a", {-1.0}, {1.0}}, {"b", {1.0}, {1.0}}}, {{1.0, 0.0}, {0.0, 1.0}}, {0.0, 0.5});
  const auto w = m.weights(std::vector<double>{1.0, 0.0});
  const double e1 = std::exp(1.0), e2 = std::exp(0.5);
  EXPECT_NEAR(w[0], e1 / (e1 + e2), 1e-15);
  EXPECT_NEAR(w[1], e2 / (e1 + e2), 1e-15);
  EXPECT_THROW(m.weights(std::vector<double>{1.0}), InputError);
}

TEST(ConditionalModel, RequiresSharedCovariance) {
  EXPECT_THROW(ConditionalMixtureModel({{"a", {0.0}, {1.0}}, {"b", {1.0}, {2.0}}}, {{1.0}, {0.0}}, {0.0, 0.0}),
               InputError);
  EXPECT_THROW(ConditionalMixtureModel({{"a", {0.0}, {1.0}}}, {{1.0}, {0.0}}, {0.0}), InputError);
}

TEST(ConditionalModel, LipschitzConstants) {
  // means +-4, variance 0.25, A = 6 I
  const ConditionalMixtureModel m({{"m", {-4.0}, {0.25}}, {"f", {4.0}, {0.25}}}, {{6.0, 0.0}, {0.0, 6.0}}, {0.0, 0.0});
  EXPECT_NEAR(m.logit_spread(), 6.0 * std::sqrt(2.0), 1e-12);
  // sup_t e^{-t} * 8 / v(t) = 8 / 0.25 at t = 0 for variance <= 2
  EXPECT_NEAR(m.component_score_gap_bound(), 32.0, 1e-12);
  EXPECT_NEAR(m.score_lipschitz_bound(), 0.5 * 0.5 * 32.0 * 6.0 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.drift_lipschitz_bound(), 2.0 * m.score_lipschitz_bound(), 1e-12);
}

TEST(ConditionalModel, WideVariancePeakIsInterior) {
  // variance 5: sup_t e^{-t} / (5 e^{-2t} + 1 - e^{-2t}) = 1 / (2 sqrt(4)), checked on a grid
  const ConditionalMixtureModel m({{"a", {0.0}, {5.0}}, {"b", {1.0}, {5.0}}}, {{1.0}, {0.0}}, {0.0, 0.0});
  double best = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double t = i * 1e-4;
    best = std::max(best, std::exp(-t) / (5 * std::exp(-2 * t) + 1 - std::exp(-2 * t)));
  }
  EXPECT_NEAR(m.component_score_gap_bound(), best, 1e-8);
}
