#pragma once

// Deterministic quadrature for divergences between low-dimensional Gaussian
// mixtures. Integration runs over segments bounded by component means and
// mean +- {1, 2, 4, 8} sigma, so narrow, widely separated peaks are never
// stepped over; each segment is bisected until its Gauss-Kronrod error
// estimate falls below its share of an absolute tolerance.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fairdiff/error.hpp"
#include "fairdiff/mixture.hpp"

namespace fairdiff {

struct QuadratureOptions {
  double abs_tol = 1e-9;
  double span_sigmas = 8.0;
  int max_depth = 30;
};

namespace detail {

template <class F>
double adaptive_gk(const F& f, double a, double b, double abs_tol, int depth) {
  double err = 0.0;
  double l1 = 0.0;
  const double est = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err, &l1);
  if (!std::isfinite(est)) throw NumericalError("quadrature: non-finite integrand value");
  // Narrow peaks far from the origin evaluate with visible rounding noise, and
  // the Kronrod error estimate then stalls well above machine precision.
  // Below this floor (or once the nodes run out of distinct doubles)
  // bisection only chases rounding.
  const double eps = std::numeric_limits<double>::epsilon();
  const double floor = 1e-8 * l1 + 64.0 * eps;
  const bool unresolvable = (b - a) <= 1024.0 * eps * std::max({std::abs(a), std::abs(b), 1.0});
  if (err <= abs_tol || err <= floor || unresolvable || depth <= 0) return est;
  const double mid = 0.5 * (a + b);
  return adaptive_gk(f, a, mid, 0.5 * abs_tol, depth - 1) + adaptive_gk(f, mid, b, 0.5 * abs_tol, depth - 1);
}

}  // namespace detail

/// Integral of f over the union of consecutive [knots[i], knots[i+1]].
template <class F>
double integrate_segments(const F& f, std::span<const double> knots, double abs_tol, int max_depth = 30) {
  if (knots.size() < 2) return 0.0;
  const double total = knots.back() - knots.front();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = knots[i];
    const double b = knots[i + 1];
    if (!(b > a)) continue;
    acc += detail::adaptive_gk(f, a, b, abs_tol * (b - a) / total, max_depth);
  }
  return acc;
}

/// Sorted, de-duplicated knots along axis `d` for every component of every
/// mixture given.
inline std::vector<double> mixture_knots(std::span<const GaussianMixture* const> mixtures, std::size_t d,
                                         double span_sigmas) {
  std::vector<double> knots;
  const std::array<double, 9> offsets{-1.0, -0.5, -0.25, -0.125, 0.0, 0.125, 0.25, 0.5, 1.0};
  for (const auto* m : mixtures) {
    for (const auto& c : m->components()) {
      const double sd = std::sqrt(c.variance[d]);
      for (double o : offsets) knots.push_back(c.mean[d] + o * span_sigmas * sd);
    }
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

/// Integral over R^d (d <= 2) of f(x), truncated to the +-span_sigmas box of
/// all components of `mixtures`.
template <class F>
double integrate_over_mixtures(const F& f, std::span<const GaussianMixture* const> mixtures,
                               const QuadratureOptions& opts) {
  const std::size_t dim = mixtures.front()->dimension();
  for (const auto* m : mixtures) {
    if (m->dimension() != dim) throw InputError("quadrature: mixtures differ in dimension");
  }
  if (dim > 2) throw InputError("quadrature supports dimension <= 2 only");
  const auto kx = mixture_knots(mixtures, 0, opts.span_sigmas);
  if (dim == 1) {
    return integrate_segments([&](double x) { return f(std::array<double, 1>{x}); }, kx, opts.abs_tol, opts.max_depth);
  }
  const auto ky = mixture_knots(mixtures, 1, opts.span_sigmas);
  const double width_x = kx.back() - kx.front();
  const double inner_tol = 0.5 * opts.abs_tol / width_x;
  auto row = [&](double x) {
    return integrate_segments([&](double y) { return f(std::array<double, 2>{x, y}); }, ky, inner_tol, opts.max_depth);
  };
  return integrate_segments(row, kx, 0.5 * opts.abs_tol, opts.max_depth);
}

/// Total variation 1/2 int |p - q|, clamped to [0, 1].
inline double tv_numeric(const GaussianMixture& p, const GaussianMixture& q, const QuadratureOptions& opts = {}) {
  if (p.dimension() != q.dimension()) throw InputError("tv_numeric: dimension mismatch");
  const std::array<const GaussianMixture*, 2> ms{&p, &q};
  const double v = integrate_over_mixtures(
      [&](auto x) { return 0.5 * std::abs(p.density(x) - q.density(x)); }, std::span<const GaussianMixture* const>(ms), opts);
  return std::clamp(v, 0.0, 1.0);
}

/// KL(p || q) = int p ln(p / q), evaluated in log space.
inline double kl_numeric(const GaussianMixture& p, const GaussianMixture& q, const QuadratureOptions& opts = {}) {
  if (p.dimension() != q.dimension()) throw InputError("kl_numeric: dimension mismatch");
  const std::array<const GaussianMixture*, 2> ms{&p, &q};
  const double v = integrate_over_mixtures(
      [&](auto x) {
        const double lp = p.log_density(x);
        const double lq = q.log_density(x);
        const double pv = std::exp(lp);
        if (pv == 0.0) return 0.0;
        const double term = pv * (lp - lq);
        if (!std::isfinite(term)) throw NumericalError("kl_numeric: support mismatch (non-finite integrand)");
        return term;
      },
      std::span<const GaussianMixture* const>(ms), opts);
  return std::max(v, 0.0);
}

}  // namespace fairdiff
