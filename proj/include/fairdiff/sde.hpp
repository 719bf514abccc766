#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fairdiff/conditional_model.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/mixture.hpp"
#include "fairdiff/quadrature.hpp"
#include "fairdiff/rng.hpp"

namespace fairdiff {

struct SdeRunConfig {
  double horizon = 5.0;
  int steps = 400;
  int paths = 5000;
  std::uint64_t seed = 1234;
  unsigned threads = 0;  // 0: hardware concurrency
  double budget = 5e7;   // max steps * paths per run

  void validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("sde horizon must be > 0");
    if (steps < 1) throw InputError("sde steps must be >= 1");
    if (paths < 1) throw InputError("sde paths must be >= 1");
    if (static_cast<double>(steps) * static_cast<double>(paths) > budget) {
      throw InputError("steps * paths = " + std::to_string(static_cast<double>(steps) * paths) +
                       " exceeds the configured budget " + std::to_string(budget));
    }
  }

  double step_size() const { return horizon / steps; }
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). The first exception
/// (by chunk order) is rethrown after all workers join.
template <class Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (workers == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Noised mixtures at reverse-time points T - t_n, n = 0..steps-1.
inline std::vector<GaussianMixture> reverse_schedule(const GaussianMixture& target, const SdeRunConfig& config) {
  std::vector<GaussianMixture> out;
  out.reserve(config.steps);
  const double h = config.step_size();
  for (int n = 0; n < config.steps; ++n) out.push_back(noised_params(target, config.horizon - n * h).mixture);
  return out;
}

struct SampleSet {
  std::size_t dimension = 0;
  std::vector<double> samples;  // paths x dimension, row-major
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased
  std::vector<int> labels;       // argmax responsibility per path
  std::vector<double> proportions;

  std::size_t size() const { return dimension == 0 ? 0 : samples.size() / dimension; }
  std::span<const double> sample(std::size_t i) const { return {samples.data() + i * dimension, dimension}; }
};

namespace detail {

// One Euler-Maruyama step of dX = (X + 2 score(X, T - t)) dt + sqrt(2) dB,
// with the score taken at the left end of the step.
inline void em_step(const GaussianMixture& noised, std::span<double> x, std::span<double> score, std::span<double> scratch,
                    double h, NormalStream& rng) {
  noised.score_into(x, score, scratch);
  const double diffusion = std::sqrt(2.0 * h);
  for (std::size_t d = 0; d < x.size(); ++d) x[d] += h * (x[d] + 2.0 * score[d]) + diffusion * rng.normal();
}

inline void check_finite(std::span<const double> x, std::size_t path, int step, double t) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw NumericalError("reverse SDE blew up: path " + std::to_string(path) + ", step " + std::to_string(step) +
                           " (t = " + std::to_string(t) + "), non-finite state; reduce the step size");
    }
  }
}

}  // namespace detail

/// Euler-Maruyama integration of the reverse SDE from N(0, I). Path i draws
/// all of its noise from stream (seed, i), so output does not depend on the
/// thread count.
inline SampleSet reverse_sde_sample(const GaussianMixture& target, const SdeRunConfig& config) {
  config.validate();
  const std::size_t dim = target.dimension();
  const std::size_t k = target.size();
  const auto schedule = reverse_schedule(target, config);
  const double h = config.step_size();
  const auto n_paths = static_cast<std::size_t>(config.paths);

  SampleSet out;
  out.dimension = dim;
  out.samples.assign(n_paths * dim, 0.0);
  out.labels.assign(n_paths, 0);

  parallel_chunks(n_paths, resolve_threads(config.threads), [&](std::size_t begin, std::size_t end) {
    std::vector<double> score(dim);
    std::vector<double> scratch(k);
    for (std::size_t p = begin; p < end; ++p) {
      NormalStream rng(config.seed, p);
      std::span<double> x(out.samples.data() + p * dim, dim);
      for (auto& v : x) v = rng.normal();
      for (int n = 0; n < config.steps; ++n) {
        detail::em_step(schedule[n], x, score, scratch, h, rng);
        detail::check_finite(x, p, n, n * h);
      }
      target.joint_log_terms(x, scratch);
      // max_element returns the first maximum: ties go to the lower index.
      out.labels[p] = static_cast<int>(std::max_element(scratch.begin(), scratch.end()) - scratch.begin());
    }
  });

  out.mean.assign(dim, 0.0);
  out.variance.assign(dim, 0.0);
  out.proportions.assign(k, 0.0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    for (std::size_t d = 0; d < dim; ++d) out.mean[d] += out.samples[p * dim + d];
    out.proportions[out.labels[p]] += 1.0;
  }
  for (auto& m : out.mean) m /= static_cast<double>(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double z = out.samples[p * dim + d] - out.mean[d];
      out.variance[d] += z * z;
    }
  }
  for (auto& v : out.variance) v = n_paths > 1 ? v / static_cast<double>(n_paths - 1) : 0.0;
  for (auto& q : out.proportions) q /= static_cast<double>(n_paths);
  return out;
}

inline SampleSet reverse_sde_sample(const ConditionalMixtureModel& model, std::span<const double> y,
                                    const SdeRunConfig& config) {
  return reverse_sde_sample(model.mixture(y), config);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// CDF of a one-dimensional mixture.
inline double mixture_cdf(const GaussianMixture& m, double x) {
  if (m.dimension() != 1) throw InputError("mixture_cdf needs a one-dimensional mixture");
  double acc = 0.0;
  for (const auto& c : m.components()) acc += c.weight * normal_cdf((x - c.mean[0]) / std::sqrt(c.variance[0]));
  return acc;
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `xs` and `m`.
inline double ks_distance(std::vector<double> xs, const GaussianMixture& m) {
  if (xs.empty()) throw InputError("ks_distance needs at least one sample");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = mixture_cdf(m, xs[i]);
    worst = std::max({worst, (i + 1) / n - f, f - i / n});
  }
  return worst;
}

struct DriftGapPoint {
  double t = 0.0;
  double expected_drift_gap_sq = 0.0;
};

struct DivergenceReport {
  double kl_numeric = 0.0;
  double kl_girsanov_bound = 0.0;
  double ci_half_width = 0.0;
  double tv_numeric = 0.0;
  double pinsker_bound = 0.0;
  double prompt_distance = 0.0;
  double lipschitz_bound = 0.0;  // T (L ||y - y'||)^2 with the analytic drift L
  bool inconclusive = false;
  bool kl_within_bound = false;
  bool tv_within_pinsker = false;
  bool bound_within_lipschitz = false;
  std::vector<DriftGapPoint> series;

  bool holds() const { return kl_within_bound && tv_within_pinsker; }
};

struct GirsanovOptions {
  double z = 2.576;                 // 99% two-sided normal quantile
  double max_relative_ci = 0.1;     // wider intervals flag the run inconclusive
  double quadrature_slack = 2e-4;
  QuadratureOptions quadrature{};
};

/// Monte Carlo estimate of int_0^T E||b_t(Y_t) - b'_t(Y_t)||^2 dt along reverse
/// paths driven by the y-drift, with b = x + 2 s(x, T - t, y). The integral is
/// a left Riemann sum on the sampler grid.
inline DivergenceReport girsanov_bound(const ConditionalMixtureModel& model, std::span<const double> y,
                                       std::span<const double> y_prime, const SdeRunConfig& config,
                                       const GirsanovOptions& opts = {}) {
  config.validate();
  const auto p = model.mixture(y);
  const auto q = model.mixture(y_prime);
  const auto sched_p = reverse_schedule(p, config);
  const auto sched_q = reverse_schedule(q, config);
  const std::size_t dim = p.dimension();
  const std::size_t k = p.size();
  const double h = config.step_size();
  const auto n_paths = static_cast<std::size_t>(config.paths);

  std::vector<double> per_path(n_paths, 0.0);
  std::vector<double> per_step(n_paths * config.steps, 0.0);

  parallel_chunks(n_paths, resolve_threads(config.threads), [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(dim), sp(dim), sq(dim), scratch(k);
    for (std::size_t i = begin; i < end; ++i) {
      NormalStream rng(config.seed, i);
      for (auto& v : x) v = rng.normal();
      double integral = 0.0;
      for (int n = 0; n < config.steps; ++n) {
        sched_q[n].score_into(x, sq, scratch);
        sched_p[n].score_into(x, sp, scratch);
        double g = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double db = 2.0 * (sp[d] - sq[d]);
          g += db * db;
        }
        per_step[i * config.steps + n] = g;
        integral += h * g;
        const double diffusion = std::sqrt(2.0 * h);
        for (std::size_t d = 0; d < dim; ++d) x[d] += h * (x[d] + 2.0 * sp[d]) + diffusion * rng.normal();
        detail::check_finite(x, i, n, n * h);
      }
      per_path[i] = integral;
    }
  });

  DivergenceReport r;
  double mean = 0.0;
  for (double v : per_path) mean += v;
  mean /= static_cast<double>(n_paths);
  double ss = 0.0;
  for (double v : per_path) ss += (v - mean) * (v - mean);
  const double sd = n_paths > 1 ? std::sqrt(ss / static_cast<double>(n_paths - 1)) : 0.0;
  r.kl_girsanov_bound = mean;
  r.ci_half_width = opts.z * sd / std::sqrt(static_cast<double>(n_paths));
  r.inconclusive = mean > 0.0 ? 2.0 * r.ci_half_width / mean > opts.max_relative_ci : r.ci_half_width > 0.0;

  r.series.resize(config.steps);
  for (int n = 0; n < config.steps; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) acc += per_step[i * config.steps + n];
    r.series[n] = {n * h, acc / static_cast<double>(n_paths)};
  }

  r.kl_numeric = kl_numeric(p, q, opts.quadrature);
  r.tv_numeric = tv_numeric(p, q, opts.quadrature);
  r.pinsker_bound = std::sqrt(r.kl_girsanov_bound / 2.0);
  double dy = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) dy += (y[j] - y_prime[j]) * (y[j] - y_prime[j]);
  r.prompt_distance = std::sqrt(dy);
  const double l = model.drift_lipschitz_bound() * r.prompt_distance;
  r.lipschitz_bound = config.horizon * l * l;

  r.kl_within_bound = r.kl_numeric <= r.kl_girsanov_bound + r.ci_half_width;
  r.tv_within_pinsker =
      r.tv_numeric <= std::sqrt((r.kl_girsanov_bound + r.ci_half_width) / 2.0) + opts.quadrature_slack;
  r.bound_within_lipschitz = r.kl_girsanov_bound <= r.lipschitz_bound * (1.0 + 1e-12);
  return r;
}

}  // namespace fairdiff
