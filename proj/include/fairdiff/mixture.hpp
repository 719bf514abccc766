#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairdiff/error.hpp"

namespace fairdiff {

/// One axis-aligned Gaussian component.
struct Component {
  double weight = 0.0;
  std::vector<double> mean;
  std::vector<double> variance;  // diagonal of the covariance
};

/// Finite mixture of diagonal-covariance Gaussians. Weights sum to 1 within
/// 1e-12; zero weights are allowed and drop out of every density.
class GaussianMixture {
 public:
  GaussianMixture() = default;

  explicit GaussianMixture(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw InputError("mixture needs at least one component");
    dim_ = components_.front().mean.size();
    if (dim_ == 0) throw InputError("mixture dimension must be >= 1");
    double total = 0.0;
    for (const auto& c : components_) {
      if (c.mean.size() != dim_ || c.variance.size() != dim_) throw InputError("component dimension mismatch");
      if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw InputError("component weights must be finite and >= 0");
      for (double m : c.mean) {
        if (!std::isfinite(m)) throw InputError("component mean is not finite");
      }
      for (double v : c.variance) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InputError("component variances must be positive");
      }
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("mixture weights sum to " + std::to_string(total) + ", not 1");
    precompute();
  }

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return components_.size(); }
  const std::vector<Component>& components() const { return components_; }
  const Component& component(std::size_t i) const { return components_[i]; }

  /// Per-component log(w_i) + log N_i(x); -inf for zero-weight components.
  void joint_log_terms(std::span<const double> x, std::span<double> out) const {
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (log_weight_[i] == -std::numeric_limits<double>::infinity()) {
        out[i] = log_weight_[i];
        continue;
      }
      const auto& c = components_[i];
      double q = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double z = x[d] - c.mean[d];
        q += z * z / c.variance[d];
      }
      out[i] = log_weight_[i] + log_norm_[i] - 0.5 * q;
    }
  }

  double log_density(std::span<const double> x) const {
    std::vector<double> terms(components_.size());
    joint_log_terms(x, terms);
    return log_sum_exp(terms);
  }

  double density(std::span<const double> x) const { return std::exp(log_density(x)); }

  /// Posterior component probabilities at x.
  std::vector<double> responsibilities(std::span<const double> x) const {
    std::vector<double> r(components_.size());
    joint_log_terms(x, r);
    softmax_inplace(r);
    return r;
  }

  /// grad log p(x) = sum_i r_i(x) * (-(x - mu_i) / var_i). `scratch` must hold
  /// size() doubles; no allocation happens here.
  void score_into(std::span<const double> x, std::span<double> out, std::span<double> scratch) const {
    joint_log_terms(x, scratch);
    softmax_inplace(scratch);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const double r = scratch[i];
      if (r == 0.0) continue;
      const auto& c = components_[i];
      for (std::size_t d = 0; d < dim_; ++d) out[d] -= r * (x[d] - c.mean[d]) / c.variance[d];
    }
  }

  std::vector<double> score(std::span<const double> x) const {
    std::vector<double> out(dim_);
    std::vector<double> scratch(components_.size());
    score_into(x, out, scratch);
    return out;
  }

  /// Same component shapes with new weights.
  GaussianMixture with_weights(std::span<const double> weights) const {
    if (weights.size() != components_.size()) throw InputError("weight count does not match component count");
    auto comps = components_;
    for (std::size_t i = 0; i < comps.size(); ++i) comps[i].weight = weights[i];
    return GaussianMixture(std::move(comps));
  }

  static double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
  }

  static void softmax_inplace(std::span<double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double& x : v) {
      x = std::exp(x - m);
      s += x;
    }
    for (double& x : v) x /= s;
  }

 private:
  void precompute() {
    log_weight_.clear();
    log_norm_.clear();
    for (const auto& c : components_) {
      log_weight_.push_back(c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity());
      double ln = 0.0;
      for (double v : c.variance) ln -= 0.5 * std::log(2.0 * std::numbers::pi * v);
      log_norm_.push_back(ln);
    }
  }

  std::vector<Component> components_;
  std::size_t dim_ = 0;
  std::vector<double> log_weight_;
  std::vector<double> log_norm_;
};

inline GaussianMixture standard_normal(std::size_t dim) {
  return GaussianMixture({Component{1.0, std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}});
}

/// Law of X_t under dX = -X dt + sqrt(2) dB started from `base`.
struct NoisedMixture {
  double time = 0.0;
  GaussianMixture mixture;
};

/// Closed form: means e^{-t} mu, variances e^{-2t} sigma^2 + 1 - e^{-2t}.
inline NoisedMixture noised_params(const GaussianMixture& base, double t) {
  if (!(t >= 0.0)) throw InputError("noising time must be >= 0");
  if (t == 0.0) return {0.0, base};
  const double decay = std::exp(-t);
  const double decay2 = std::exp(-2.0 * t);
  auto comps = base.components();
  for (auto& c : comps) {
    for (auto& m : c.mean) m *= decay;
    for (auto& v : c.variance) v = decay2 * v + (1.0 - decay2);
  }
  return {t, GaussianMixture(std::move(comps))};
}

inline std::vector<double> mixture_score(const GaussianMixture& base, std::span<const double> x, double t) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InputError("mixture_score: non-finite x");
  }
  if (x.size() != base.dimension()) throw InputError("mixture_score: dimension mismatch");
  return noised_params(base, t).mixture.score(x);
}

}  // namespace fairdiff
