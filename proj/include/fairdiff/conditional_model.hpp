#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fairdiff/error.hpp"
#include "fairdiff/mixture.hpp"

namespace fairdiff {

/// Shape of the image distribution for one attribute.
struct ComponentShape {
  std::string attribute;
  std::vector<double> mean;
  std::vector<double> variance;
};

/// Prompt-conditioned mixture p_y: fixed component shapes, weights
/// w(y) = softmax(A y + c).
///
/// All components share one diagonal covariance. That makes the difference
/// of any two component scores independent of x, which is what gives the
/// conditional score a finite Lipschitz constant in y.
class ConditionalMixtureModel {
 public:
  ConditionalMixtureModel(std::vector<ComponentShape> shapes, std::vector<std::vector<double>> weight_matrix,
                          std::vector<double> weight_offset)
      : shapes_(std::move(shapes)), a_(std::move(weight_matrix)), c_(std::move(weight_offset)) {
    if (shapes_.empty()) throw InputError("model needs at least one component");
    if (a_.size() != shapes_.size() || c_.size() != shapes_.size()) {
      throw InputError("weight map needs one row of A and one entry of c per component");
    }
    prompt_dim_ = a_.front().size();
    if (prompt_dim_ == 0) throw InputError("prompt embedding dimension must be >= 1");
    for (const auto& row : a_) {
      if (row.size() != prompt_dim_) throw InputError("weight matrix rows differ in length");
      for (double v : row) {
        if (!std::isfinite(v)) throw InputError("weight matrix has a non-finite entry");
      }
    }
    for (double v : c_) {
      if (!std::isfinite(v)) throw InputError("weight offset has a non-finite entry");
    }
    const auto& ref = shapes_.front().variance;
    for (const auto& s : shapes_) {
      if (s.variance != ref) throw InputError("all components must share one covariance");
      if (s.mean.size() != ref.size()) throw InputError("component dimension mismatch");
    }
    // Validates variances and dimensions once.
    template_ = GaussianMixture(make_components(std::vector<double>(shapes_.size(), 1.0 / shapes_.size())));
  }

  std::size_t prompt_dimension() const { return prompt_dim_; }
  std::size_t data_dimension() const { return template_.dimension(); }
  std::size_t size() const { return shapes_.size(); }
  const std::vector<ComponentShape>& shapes() const { return shapes_; }
  const std::vector<std::vector<double>>& weight_matrix() const { return a_; }
  const std::vector<double>& weight_offset() const { return c_; }

  std::vector<double> weights(std::span<const double> y) const {
    if (y.size() != prompt_dim_) throw InputError("prompt embedding has the wrong dimension");
    std::vector<double> logits(shapes_.size());
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < prompt_dim_; ++j) s += a_[i][j] * y[j];
      s += c_[i];
      if (!std::isfinite(s)) throw InputError("prompt embedding produces non-finite logits");
      logits[i] = s;
    }
    GaussianMixture::softmax_inplace(logits);
    return logits;
  }

  GaussianMixture mixture(std::span<const double> y) const { return template_.with_weights(weights(y)); }

  /// Largest pairwise row distance max ||A_i - A_j||: the spread of logit
  /// changes per unit change of y.
  double logit_spread() const {
    double best = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) {
      for (std::size_t j = i + 1; j < a_.size(); ++j) {
        double sq = 0.0;
        for (std::size_t d = 0; d < prompt_dim_; ++d) sq += (a_[i][d] - a_[j][d]) * (a_[i][d] - a_[j][d]);
        best = std::max(best, std::sqrt(sq));
      }
    }
    return best;
  }

  /// Bound on ||dw/dy||: ||(diag(w) - w w^T) A dy|| <= sqrt(Var_w(A dy)) <= spread / 2.
  double weight_lipschitz_bound() const { return 0.5 * logit_spread(); }

  /// sup over t >= 0 and component pairs of ||s_i(x, t) - s_j(x, t)||, where
  /// s_i is the score of noised component i. With shared variance v_d(t) the
  /// difference is e^{-t} (mu_i - mu_j) / v_d(t), independent of x.
  double component_score_gap_bound() const {
    const auto& var = shapes_.front().variance;
    std::vector<double> peak(var.size());
    for (std::size_t d = 0; d < var.size(); ++d) {
      // sup_t e^{-t} / (e^{-2t} s + 1 - e^{-2t}) = 1/s for s <= 2, else 1/(2 sqrt(s - 1)).
      peak[d] = var[d] <= 2.0 ? 1.0 / var[d] : 1.0 / (2.0 * std::sqrt(var[d] - 1.0));
    }
    double best = 0.0;
    for (std::size_t i = 0; i < shapes_.size(); ++i) {
      for (std::size_t j = i + 1; j < shapes_.size(); ++j) {
        double sq = 0.0;
        for (std::size_t d = 0; d < var.size(); ++d) {
          const double g = (shapes_[i].mean[d] - shapes_[j].mean[d]) * peak[d];
          sq += g * g;
        }
        best = std::max(best, std::sqrt(sq));
      }
    }
    return best;
  }

  /// Lipschitz constant of the conditional score in y, uniformly in (x, t).
  /// ds/dy dy = Cov_r(s_i, (A dy)_i) = 1/2 sum_{i,j} r_i r_j (s_i - s_j)(z_i - z_j),
  /// and sum_{i != j} r_i r_j <= 1 - 1/k.
  double score_lipschitz_bound() const {
    const double k = static_cast<double>(shapes_.size());
    return 0.5 * (1.0 - 1.0 / k) * component_score_gap_bound() * logit_spread();
  }

  /// The reverse-SDE drift is x + 2 * score, so drift differences are twice
  /// score differences. This is the L used in the closeness radius.
  double drift_lipschitz_bound() const { return 2.0 * score_lipschitz_bound(); }

 private:
  std::vector<Component> make_components(const std::vector<double>& w) const {
    std::vector<Component> comps;
    for (std::size_t i = 0; i < shapes_.size(); ++i) comps.push_back({w[i], shapes_[i].mean, shapes_[i].variance});
    return comps;
  }

  std::vector<ComponentShape> shapes_;
  std::vector<std::vector<double>> a_;
  std::vector<double> c_;
  std::size_t prompt_dim_ = 0;
  GaussianMixture template_;
};

/// s_t(x, y): score of the time-t noised mixture with weights w(y).
inline std::vector<double> conditional_score(const ConditionalMixtureModel& model, std::span<const double> x, double t,
                                             std::span<const double> y) {
  return mixture_score(model.mixture(y), x, t);
}

}  // namespace fairdiff
