#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairdiff/bias_metrics.hpp"
#include "fairdiff/conditional_model.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/mixture.hpp"
#include "fairdiff/quadrature.hpp"
#include "fairdiff/rng.hpp"
#include "fairdiff/sde.hpp"

namespace fairdiff {

inline std::vector<double> prompt_embedding(const EmbeddingStore& store, const std::string& key,
                                            const ConditionalMixtureModel& model) {
  const auto& v = store.at(key);
  if (v.dimension() != model.prompt_dimension()) {
    throw InputError("embedding '" + key + "' has dimension " + std::to_string(v.dimension()) +
                     ", model expects " + std::to_string(model.prompt_dimension()));
  }
  return {v.values().begin(), v.values().end()};
}

// ---------------------------------------------------------------------------
// Representational balance

struct BalanceEntry {
  std::string attribute;
  double tv = 0.0;
  double threshold = 0.0;  // v_i
  bool satisfied = false;
};

/// TV(p_b, p_{a_i+b}) <= 1 - v_i for every attribute. `slack` absorbs the
/// quadrature error so that exact boundary cases are not decided by rounding.
inline std::vector<BalanceEntry> rep_balance_audit(const ConditionalMixtureModel& model, const EmbeddingStore& store,
                                                   const std::string& base, const std::vector<std::string>& attributes,
                                                   const std::vector<double>& v, double slack = 2e-4,
                                                   const QuadratureOptions& quad = {},
                                                   KeyComposition mode = KeyComposition::kPhrase) {
  if (attributes.empty()) throw InputError("rep_balance_audit needs at least one attribute");
  if (v.size() != attributes.size()) throw InputError("need one threshold v per attribute");
  for (double vi : v) {
    if (!(vi > 0.0 && vi <= 1.0)) throw InputError("thresholds v must lie in (0, 1]");
  }
  const auto pb = model.mixture(prompt_embedding(store, base, model));
  std::vector<BalanceEntry> out;
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    const auto pa = model.mixture(prompt_embedding(store, composed_key(base, attributes[i], mode), model));
    BalanceEntry e;
    e.attribute = attributes[i];
    e.tv = tv_numeric(pb, pa, quad);
    e.threshold = v[i];
    e.satisfied = e.tv <= 1.0 - v[i] + slack;
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score Lipschitz estimate

struct LipschitzEstimate {
  double estimate = 0.0;        // sup ||s(x,t,y) - s(x,t,y')|| / ||y - y'||
  double analytic_bound = 0.0;  // model.score_lipschitz_bound()
  std::size_t probes = 0;

  double drift_estimate() const { return 2.0 * estimate; }
  bool within_bound() const { return estimate <= analytic_bound * (1.0 + 1e-9); }
};

struct LipschitzProbeOptions {
  std::size_t probes = 10000;
  std::uint64_t seed = 1234;
  double horizon = 5.0;
  double prompt_radius = 2.0;
};

/// Probe i is a fixed function of (seed, i), so a larger probe count only
/// adds probes and the estimate never decreases.
inline LipschitzEstimate score_lipschitz_estimate(const ConditionalMixtureModel& model,
                                                  const LipschitzProbeOptions& opts = {}) {
  const std::size_t dim = model.data_dimension();
  const std::size_t m = model.prompt_dimension();
  std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
  for (const auto& s : model.shapes()) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double sd = std::sqrt(s.variance[d]);
      lo[d] = std::min(lo[d], s.mean[d] - 3.0 * sd);
      hi[d] = std::max(hi[d], s.mean[d] + 3.0 * sd);
    }
  }
  LipschitzEstimate out;
  out.analytic_bound = model.score_lipschitz_bound();
  out.probes = opts.probes;
  std::vector<double> x(dim), y(m), yp(m), dir(m);
  for (std::size_t i = 0; i < opts.probes; ++i) {
    NormalStream rng(opts.seed ^ 0x4c495053ULL, i);
    for (std::size_t d = 0; d < dim; ++d) x[d] = lo[d] + (hi[d] - lo[d]) * rng.uniform();
    const double t = opts.horizon * rng.uniform();
    double norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double radius = opts.prompt_radius * rng.uniform();
    for (std::size_t j = 0; j < m; ++j) y[j] = radius * dir[j] / norm;
    norm = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double delta = std::pow(10.0, -6.0 + 4.0 * rng.uniform());
    for (std::size_t j = 0; j < m; ++j) yp[j] = y[j] + delta * dir[j] / norm;
    double dy = 0.0;
    for (std::size_t j = 0; j < m; ++j) dy += (yp[j] - y[j]) * (yp[j] - y[j]);
    dy = std::sqrt(dy);
    if (dy == 0.0) continue;
    const auto s1 = conditional_score(model, x, t, y);
    const auto s2 = conditional_score(model, x, t, yp);
    double ds = 0.0;
    for (std::size_t d = 0; d < dim; ++d) ds += (s1[d] - s2[d]) * (s1[d] - s2[d]);
    out.estimate = std::max(out.estimate, std::sqrt(ds) / dy);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding bias implies generation bias

/// Point at distance `distance` from `anchor` in the direction of `toward`.
inline std::vector<double> tune_base_embedding(std::span<const double> anchor, std::span<const double> toward,
                                               double distance) {
  if (anchor.size() != toward.size()) throw InputError("tune_base_embedding: dimension mismatch");
  double norm = 0.0;
  for (std::size_t j = 0; j < anchor.size(); ++j) norm += (toward[j] - anchor[j]) * (toward[j] - anchor[j]);
  norm = std::sqrt(norm);
  if (norm == 0.0) throw InputError("tune_base_embedding: anchor and target coincide");
  std::vector<double> out(anchor.size());
  for (std::size_t j = 0; j < anchor.size(); ++j) out[j] = anchor[j] + distance * (toward[j] - anchor[j]) / norm;
  return out;
}

enum class Verdict { kVerified, kViolated, kHypothesesNotMet };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kVerified: return "verified";
    case Verdict::kViolated: return "violated";
    case Verdict::kHypothesesNotMet: return "hypotheses not met";
  }
  return "unknown";
}

struct AttributeTv {
  std::string attribute;
  double tv_to_base = 0.0;
  double tv_to_closest = 0.0;  // TV(p_{a_1+b}, p_{a_j+b})
  bool meets_lower_bound = false;
};

struct Theorem41Report {
  Verdict verdict = Verdict::kHypothesesNotMet;
  std::vector<std::string> unmet;
  double epsilon = 0.0;
  double horizon = 0.0;
  std::string closest_attribute;
  double embedding_distance = 0.0;
  double closeness_radius = 0.0;  // epsilon / (sqrt(T) L)
  double drift_lipschitz = 0.0;
  LipschitzEstimate lipschitz;
  double min_pairwise_tv = 1.0;
  double kl_bound = 0.0;          // T (L ||e(b) - e(a_1+b)||)^2
  double kl_numeric = 0.0;
  double pinsker_bound = 0.0;
  double tv_closest = 0.0;
  bool closest_within_epsilon = false;
  std::vector<AttributeTv> others;
  std::vector<BalanceEntry> balance;
};

struct Theorem41Options {
  double slack = 2e-4;
  QuadratureOptions quadrature{};
  LipschitzProbeOptions probes{};
  KeyComposition mode = KeyComposition::kPhrase;
};

/// Checks the hypotheses (closeness at radius epsilon / (sqrt(T) L), pairwise
/// separation TV >= 1 - epsilon, epsilon < min v / 2, analytic L confirmed by
/// probing), then measures TV(p_b, p_{a_1+b}) <= epsilon and
/// TV(p_b, p_{a_j+b}) >= 1 - 2 epsilon by quadrature. a_1 is the attribute
/// whose composed embedding is nearest to e(b).
inline Theorem41Report theorem41_experiment(const ConditionalMixtureModel& model, const EmbeddingStore& store,
                                            const std::string& base, const std::vector<std::string>& attributes,
                                            double epsilon, const std::vector<double>& v, double horizon,
                                            const Theorem41Options& opts = {}) {
  if (attributes.size() < 2) throw InputError("theorem41 needs at least two attributes");
  if (v.size() != attributes.size()) throw InputError("need one threshold v per attribute");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
  if (!(horizon > 0.0)) throw InputError("horizon must be > 0");

  Theorem41Report r;
  r.epsilon = epsilon;
  r.horizon = horizon;
  const auto yb = prompt_embedding(store, base, model);
  std::vector<std::vector<double>> ya;
  for (const auto& a : attributes) ya.push_back(prompt_embedding(store, composed_key(base, a, opts.mode), model));

  std::size_t closest = 0;
  std::vector<double> dist(attributes.size());
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < yb.size(); ++j) s += (yb[j] - ya[i][j]) * (yb[j] - ya[i][j]);
    dist[i] = std::sqrt(s);
    if (dist[i] < dist[closest]) closest = i;
  }
  r.closest_attribute = attributes[closest];
  r.embedding_distance = dist[closest];

  r.drift_lipschitz = model.drift_lipschitz_bound();
  auto probes = opts.probes;
  probes.horizon = horizon;
  r.lipschitz = score_lipschitz_estimate(model, probes);
  if (!r.lipschitz.within_bound()) {
    r.unmet.push_back("probed score Lipschitz constant " + std::to_string(r.lipschitz.estimate) +
                      " exceeds the analytic bound " + std::to_string(r.lipschitz.analytic_bound));
  }
  r.closeness_radius = r.drift_lipschitz > 0.0 ? epsilon / (std::sqrt(horizon) * r.drift_lipschitz)
                                                : std::numeric_limits<double>::infinity();
  if (r.embedding_distance > r.closeness_radius) {
    r.unmet.push_back("embedding distance " + std::to_string(r.embedding_distance) + " exceeds closeness radius " +
                      std::to_string(r.closeness_radius));
  }

  std::vector<GaussianMixture> pa;
  for (const auto& y : ya) pa.push_back(model.mixture(y));
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = i + 1; j < pa.size(); ++j) {
      const double tv = tv_numeric(pa[i], pa[j], opts.quadrature);
      r.min_pairwise_tv = std::min(r.min_pairwise_tv, tv);
      if (tv < 1.0 - epsilon) {
        r.unmet.push_back("TV(" + attributes[i] + ", " + attributes[j] + ") = " + std::to_string(tv) + " < 1 - epsilon");
      }
    }
  }
  const double v_min = *std::min_element(v.begin(), v.end());
  if (!(epsilon < v_min / 2.0)) {
    r.unmet.push_back("epsilon " + std::to_string(epsilon) + " is not below min v / 2 = " + std::to_string(v_min / 2.0));
  }

  const auto pb = model.mixture(yb);
  const double l_dist = r.drift_lipschitz * r.embedding_distance;
  r.kl_bound = horizon * l_dist * l_dist;
  r.pinsker_bound = std::sqrt(r.kl_bound / 2.0);
  r.kl_numeric = kl_numeric(pb, pa[closest], opts.quadrature);
  r.tv_closest = tv_numeric(pb, pa[closest], opts.quadrature);
  r.closest_within_epsilon = r.tv_closest <= epsilon + opts.slack;

  bool lower_ok = true;
  for (std::size_t j = 0; j < pa.size(); ++j) {
    if (j == closest) continue;
    AttributeTv e;
    e.attribute = attributes[j];
    e.tv_to_base = tv_numeric(pb, pa[j], opts.quadrature);
    e.tv_to_closest = tv_numeric(pa[closest], pa[j], opts.quadrature);
    e.meets_lower_bound = e.tv_to_base >= 1.0 - 2.0 * epsilon - opts.slack;
    lower_ok = lower_ok && e.meets_lower_bound;
    r.others.push_back(e);
  }
  r.balance = rep_balance_audit(model, store, base, attributes, v, opts.slack, opts.quadrature, opts.mode);

  if (!r.unmet.empty()) {
    r.verdict = Verdict::kHypothesesNotMet;
  } else {
    r.verdict = r.closest_within_epsilon && lower_ok ? Verdict::kVerified : Verdict::kViolated;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Girsanov / Pinsker over random prompt pairs

struct GirsanovPair {
  std::vector<double> y;
  std::vector<double> y_prime;
  DivergenceReport report;
};

/// Uniform point on the unit sphere of R^m.
inline std::vector<double> random_unit_vector(NormalStream& rng, std::size_t m) {
  std::vector<double> y(m);
  double n = 0.0;
  for (auto& v : y) {
    v = rng.normal();
    n += v * v;
  }
  n = std::sqrt(n);
  for (auto& v : y) v /= n;
  return y;
}

/// Pair k draws (y, y') from stream k of (seed ^ "PAIR") and simulates with
/// seed + k + 1, so each pair is reproducible on its own.
inline std::vector<GirsanovPair> girsanov_suite(const ConditionalMixtureModel& model, const SdeRunConfig& config,
                                                int pairs, const GirsanovOptions& opts = {}) {
  if (pairs < 1) throw InputError("need at least one prompt pair");
  std::vector<GirsanovPair> out;
  for (int k = 0; k < pairs; ++k) {
    NormalStream rng(config.seed ^ 0x50414952ULL, static_cast<std::uint64_t>(k));
    GirsanovPair p;
    p.y = random_unit_vector(rng, model.prompt_dimension());
    p.y_prime = random_unit_vector(rng, model.prompt_dimension());
    SdeRunConfig run = config;
    run.seed = config.seed + static_cast<std::uint64_t>(k) + 1;
    p.report = girsanov_bound(model, p.y, p.y_prime, run, opts);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tweedie's formula

struct TweediePoint {
  double observed = 0.0;
  double tweedie = 0.0;    // x~ + sigma^2 * score of the convolved density
  double posterior = 0.0;  // quadrature oracle
};

struct TweedieReport {
  double max_deviation = 0.0;
  std::vector<TweediePoint> points;
};

/// Posterior mean E[x | x~] for x ~ prior, x~ = x + sigma * z, by quadrature.
/// Integrates over u = x - x~ so that a narrow likelihood sits at the origin,
/// where doubles are dense.
inline double posterior_mean_quadrature(const GaussianMixture& prior, double sigma, double observed,
                                        double abs_tol = 1e-10) {
  if (prior.dimension() != 1) throw InputError("tweedie check needs a one-dimensional prior");
  const double s2 = sigma * sigma;
  std::vector<double> knots;
  const double offsets[] = {-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0};
  auto add = [&](double centre, double sd) {
    for (double o : offsets) knots.push_back(centre + o * sd);
  };
  for (const auto& c : prior.components()) {
    const double tau2 = c.variance[0];
    add(c.mean[0] - observed, std::sqrt(tau2));
    add(s2 * (c.mean[0] - observed) / (tau2 + s2), std::sqrt(tau2 * s2 / (tau2 + s2)));
  }
  add(0.0, sigma);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  // Joint density shifted by the marginal log density keeps both integrals O(1).
  std::vector<Component> conv = prior.components();
  for (auto& c : conv) c.variance[0] += s2;
  const double x_obs[] = {observed};
  const double log_marginal = GaussianMixture(conv).log_density(x_obs);
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * s2);
  auto weight = [&](double u) {
    const double xv[] = {observed + u};
    return std::exp(prior.log_density(xv) - 0.5 * u * u / s2 + log_norm - log_marginal);
  };
  const double den = integrate_segments(weight, knots, abs_tol);
  const double num = integrate_segments([&](double u) { return u * weight(u); }, knots, abs_tol);
  return observed + num / den;
}

/// Compares Tweedie's formula with the quadrature posterior mean at `trials`
/// evenly spaced observations covering +-4 sd of the convolved prior.
inline TweedieReport tweedie_check(const GaussianMixture& prior, double sigma, int trials) {
  if (prior.dimension() != 1) throw InputError("tweedie check needs a one-dimensional prior");
  if (!(sigma > 0.0)) throw InputError("sigma must be > 0");
  if (trials < 1) throw InputError("trials must be >= 1");
  std::vector<Component> conv = prior.components();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto& c : conv) {
    c.variance[0] += sigma * sigma;
    lo = std::min(lo, c.mean[0] - 4.0 * std::sqrt(c.variance[0]));
    hi = std::max(hi, c.mean[0] + 4.0 * std::sqrt(c.variance[0]));
  }
  const GaussianMixture convolved(std::move(conv));
  TweedieReport r;
  for (int i = 0; i < trials; ++i) {
    const double x = trials == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (trials - 1);
    const double xv[] = {x};
    TweediePoint p;
    p.observed = x;
    p.tweedie = x + sigma * sigma * convolved.score(xv)[0];
    p.posterior = posterior_mean_quadrature(prior, sigma, x);
    r.max_deviation = std::max(r.max_deviation, std::abs(p.tweedie - p.posterior));
    r.points.push_back(p);
  }
  return r;
}

}  // namespace fairdiff
