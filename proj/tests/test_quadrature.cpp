#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fairdiff/quadrature.hpp"
#include "fairdiff/rng.hpp"

using namespace fairdiff;

namespace {

GaussianMixture normal1(double mu, double var) { return GaussianMixture({Component{1.0, {mu}, {var}}}); }

double phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Closed forms for single Gaussians.
double tv_equal_variance(double dmu, double sd) { return 2.0 * phi(std::abs(dmu) / (2.0 * sd)) - 1.0; }

double kl_gauss(double m1, double v1, double m2, double v2) {
  return 0.5 * (std::log(v2 / v1) + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
}

// Composite Simpson on a uniform grid, independent of the adaptive rule.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST(TvNumeric, EqualVarianceClosedForm) {
  for (double dmu : {0.0, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0}) {
    for (double sd : {0.3, 1.0, 2.5}) {
      const double tv = tv_numeric(normal1(0.0, sd * sd), normal1(dmu, sd * sd));
      EXPECT_NEAR(tv, tv_equal_variance(dmu, sd), 1e-4) << dmu << " " << sd;
    }
  }
  EXPECT_NEAR(tv_numeric(normal1(0, 1), normal1(2, 1)), 0.682689492137086, 1e-9);
}

TEST(TvNumeric, DisjointSupportIsOne) {
  EXPECT_NEAR(tv_numeric(normal1(-50, 1), normal1(50, 1)), 1.0, 1e-9);
}

TEST(TvNumeric, TwoDimensionalProductOfIndependentShift) {
  // shift along one axis only: TV equals the 1D value
  const GaussianMixture p({Component{1.0, {0.0, 0.0}, {1.0, 0.5}}});
  const GaussianMixture q({Component{1.0, {1.0, 0.0}, {1.0, 0.5}}});
  EXPECT_NEAR(tv_numeric(p, q), tv_equal_variance(1.0, 1.0), 1e-4);
}

TEST(TvNumeric, MixtureAgainstSimpson) {
  const GaussianMixture p({Component{0.3, {-2.0}, {0.5}}, Component{0.7, {1.5}, {1.0}}});
  const GaussianMixture q({Component{0.6, {-1.0}, {0.8}}, Component{0.4, {2.0}, {0.3}}});
  const double oracle = simpson(
      [&](double x) {
        const double xs[] = {x};
        return 0.5 * std::abs(p.density(xs) - q.density(xs));
      },
      -20.0, 20.0, 400000);
  EXPECT_NEAR(tv_numeric(p, q), oracle, 1e-6);
}

TEST(KlNumeric, GaussianClosedForm) {
  EXPECT_NEAR(kl_numeric(normal1(0, 1), normal1(1, 1)), 0.5, 1e-6);
  for (auto [m1, v1, m2, v2] : {std::array<double, 4>{0, 1, 0.3, 2}, {1, 0.2, -1, 0.5}, {2, 3, 2, 1}}) {
    EXPECT_NEAR(kl_numeric(normal1(m1, v1), normal1(m2, v2)), kl_gauss(m1, v1, m2, v2), 1e-4);
  }
  const GaussianMixture p({Component{1.0, {0.0, 1.0}, {1.0, 0.5}}});
  const GaussianMixture q({Component{1.0, {0.5, 0.0}, {2.0, 0.5}}});
  EXPECT_NEAR(kl_numeric(p, q), kl_gauss(0, 1, 0.5, 2) + kl_gauss(1, 0.5, 0, 0.5), 1e-4);
}

// Monte Carlo oracle: mean of log p(X) - log q(X) over 1e6 draws X ~ p.
TEST(KlNumeric, MixtureAgainstMonteCarlo) {
  const GaussianMixture p({Component{0.3, {-2.0}, {0.5}}, Component{0.7, {1.5}, {1.0}}});
  const GaussianMixture q({Component{0.5, {-1.0}, {1.0}}, Component{0.5, {1.0}, {1.0}}});
  NormalStream rng(99, 1);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const int c = rng.uniform() < 0.3 ? 0 : 1;
    const double x[] = {p.component(c).mean[0] + std::sqrt(p.component(c).variance[0]) * rng.normal()};
    const double l = p.log_density(x) - q.log_density(x);
    sum += l;
    sq += l * l;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(kl_numeric(p, q), mean, 5.0 * se);
}

TEST(Quadrature, RejectsHighDimensionAndMismatch) {
  const GaussianMixture p3({Component{1.0, {0, 0, 0}, {1, 1, 1}}});
  EXPECT_THROW(tv_numeric(p3, p3), InputError);
  EXPECT_THROW(tv_numeric(normal1(0, 1), GaussianMixture({Component{1.0, {0, 0}, {1, 1}}})), InputError);
}

TEST(Quadrature, SegmentsIntegratePolynomialExactly) {
  const std::vector<double> knots{-1.0, 0.0, 0.5, 2.0};
  const double v = integrate_segments([](double x) { return x * x * x - x; }, knots, 1e-12);
  EXPECT_NEAR(v, (16.0 / 4 - 4.0 / 2) - (1.0 / 4 - 1.0 / 2), 1e-12);
}
