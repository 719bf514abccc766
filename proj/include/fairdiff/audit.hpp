#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairdiff/bias_metrics.hpp"
#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"

namespace fairdiff {

struct LabeledImage {
  std::string id;
  EmbeddingVector embedding;
  double true_score = 0.0;
};

struct ImageSubset {
  std::string attribute;
  std::vector<LabeledImage> images;
};

struct AuditCollection {
  PromptKey base;
  std::vector<ImageSubset> subsets;
  double alpha = 0.0;

  void validate() const {
    if (subsets.empty()) throw InputError("audit collection has no subsets");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
    for (const auto& s : subsets) {
      if (s.images.empty()) throw InputError("subset '" + s.attribute + "' is empty");
      for (const auto& img : s.images) {
        if (!(img.true_score >= 0.0 && img.true_score <= 1.0)) {
          throw InputError("image '" + img.id + "' has true_score outside [0, 1]");
        }
      }
    }
  }
};

/// The alignment auditor s(b, i) evaluated on one image of the collection.
using Auditor = std::function<double(const LabeledImage&)>;

// ---------------------------------------------------------------------------
// Scoring

/// (cos + 1) / 2, which maps cosine similarity onto [0, 1].
inline double align_score(const EmbeddingVector& prompt, const EmbeddingVector& image) {
  return (cosine(prompt, image) + 1.0) / 2.0;
}

/// CLIPScore-style clipping max(cos, 0), without the 2.5 rescaling.
inline double clipscore_compat(const EmbeddingVector& prompt, const EmbeddingVector& image) {
  return std::max(cosine(prompt, image), 0.0);
}

inline Auditor embedding_auditor(EmbeddingVector prompt, bool clip_compat = false) {
  return [prompt = std::move(prompt), clip_compat](const LabeledImage& img) {
    return clip_compat ? clipscore_compat(prompt, img.embedding) : align_score(prompt, img.embedding);
  };
}

namespace detail {

inline std::vector<double> checked_weights(std::size_t n, std::span<const double> weights) {
  if (n == 0) throw InputError("image list is empty");
  if (weights.empty()) return std::vector<double>(n, 1.0);
  if (weights.size() != n) throw InputError("weights and images differ in length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw InputError("weights sum to zero");
  return {weights.begin(), weights.end()};
}

}  // namespace detail

/// Mean of per-image alignment scores (optionally weighted).
inline double score_then_average(const EmbeddingVector& prompt, std::span<const EmbeddingVector> images,
                                 std::span<const double> weights = {}) {
  const auto w = detail::checked_weights(images.size(), weights);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    num += w[i] * align_score(prompt, images[i]);
    den += w[i];
  }
  return num / den;
}

struct AverageThenScore {
  double score = 0.0;
  // Weighted mean squared distance of image embeddings from their mean.
  // Reported alongside the score, never subtracted from it.
  double variance = 0.0;
};

inline AverageThenScore average_then_score(const EmbeddingVector& prompt, std::span<const EmbeddingVector> images,
                                           std::span<const double> weights = {}) {
  const auto w = detail::checked_weights(images.size(), weights);
  const std::size_t dim = images.front().dimension();
  std::vector<double> sum(dim, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].dimension() != dim) throw InputError("dimension mismatch among images");
    for (std::size_t d = 0; d < dim; ++d) sum[d] += w[i] * images[i][d];
    total += w[i];
  }
  if (std::all_of(sum.begin(), sum.end(), [](double x) { return x == 0.0; })) {
    throw InputError("average_then_score: image embeddings sum to the zero vector");
  }
  AverageThenScore out;
  double var = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = images[i][d] - sum[d] / total;
      sq += diff * diff;
    }
    var += w[i] * sq;
  }
  out.variance = var / total;
  out.score = align_score(prompt, EmbeddingVector(std::move(sum)));
  return out;
}

struct SubclassScore {
  double score = 0.0;
  std::vector<double> per_image;
  // Index into the attribute list of the maximizing composed prompt; ties go
  // to the earliest attribute.
  std::vector<std::size_t> argmax;
};

/// Per image, the best alignment against any attribute-composed prompt; the
/// aggregate is the (weighted) mean over images.
inline SubclassScore subclass_score(const EmbeddingStore& prompts, const std::string& base,
                                    const std::vector<std::string>& attributes, std::span<const EmbeddingVector> images,
                                    std::span<const double> weights = {},
                                    KeyComposition mode = KeyComposition::kPhrase) {
  if (attributes.empty()) throw InputError("subclass_score needs at least one attribute");
  const auto w = detail::checked_weights(images.size(), weights);
  std::vector<const EmbeddingVector*> composed;
  for (const auto& a : attributes) composed.push_back(&prompts.at(composed_key(base, a, mode)));
  SubclassScore out;
  out.per_image.reserve(images.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    double best = align_score(*composed[0], images[i]);
    std::size_t arg = 0;
    for (std::size_t l = 1; l < composed.size(); ++l) {
      const double s = align_score(*composed[l], images[i]);
      if (s > best) {
        best = s;
        arg = l;
      }
    }
    out.per_image.push_back(best);
    out.argmax.push_back(arg);
    num += w[i] * best;
    den += w[i];
  }
  out.score = num / den;
  return out;
}

// ---------------------------------------------------------------------------
// Multiaccuracy / multicalibration

enum class AuditMode { kMultiaccuracy, kMulticalibration };

inline std::string_view to_string(AuditMode m) {
  return m == AuditMode::kMultiaccuracy ? "multiaccuracy" : "multicalibration";
}

struct BinDeviation {
  std::string attribute;
  int bin = 0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double deviation = 0.0;
  // False when the bin has fewer than min_bin_count images; such bins are
  // reported but do not enter pass/fail.
  bool counted = true;
};

struct AuditReport {
  AuditMode mode = AuditMode::kMultiaccuracy;
  std::vector<std::pair<std::string, double>> per_subset_deviation;
  double max_deviation = 0.0;
  double alpha = 0.0;
  bool passes = true;
  std::vector<BinDeviation> bins;
  double bin_width = 0.0;
  std::size_t min_bin_count = 0;
};

namespace detail {

inline double mean_gap(const std::vector<const LabeledImage*>& images, const Auditor& auditor) {
  double acc = 0.0;
  for (const auto* img : images) acc += img->true_score - auditor(*img);
  return std::abs(acc / static_cast<double>(images.size()));
}

}  // namespace detail

/// |E_{i in I}[s* - s]| per subset; passes iff every deviation is <= alpha.
inline AuditReport multiaccuracy_audit(const AuditCollection& collection, const Auditor& auditor) {
  collection.validate();
  AuditReport r;
  r.mode = AuditMode::kMultiaccuracy;
  r.alpha = collection.alpha;
  for (const auto& subset : collection.subsets) {
    std::vector<const LabeledImage*> ptrs;
    for (const auto& img : subset.images) ptrs.push_back(&img);
    const double dev = detail::mean_gap(ptrs, auditor);
    r.per_subset_deviation.emplace_back(subset.attribute, dev);
    r.max_deviation = std::max(r.max_deviation, dev);
  }
  r.passes = r.max_deviation <= r.alpha;
  return r;
}

inline int bin_count_for_width(double width) {
  return static_cast<int>(std::ceil(1.0 / width - 1e-9));
}

/// Bin j covers [j*width, (j+1)*width); the top bin also holds true score 1.
inline int true_score_bin(double v, double width) {
  const int top = bin_count_for_width(width) - 1;
  return std::clamp(static_cast<int>(std::floor(v / width + 1e-9)), 0, top);
}

/// Multiaccuracy on the level sets of the true score, relaxed to bins of the
/// given width inside each subset.
inline AuditReport multicalibration_audit(const AuditCollection& collection, const Auditor& auditor, double bin_width,
                                          std::size_t min_bin_count) {
  if (!(bin_width > 0.0 && bin_width <= 1.0)) throw InputError("bin width must lie in (0, 1]");
  collection.validate();
  AuditReport r;
  r.mode = AuditMode::kMulticalibration;
  r.alpha = collection.alpha;
  r.bin_width = bin_width;
  r.min_bin_count = min_bin_count;
  const int nbins = bin_count_for_width(bin_width);
  for (const auto& subset : collection.subsets) {
    std::vector<std::vector<const LabeledImage*>> bins(static_cast<std::size_t>(nbins));
    for (const auto& img : subset.images) bins[static_cast<std::size_t>(true_score_bin(img.true_score, bin_width))].push_back(&img);
    double subset_max = 0.0;
    for (int j = 0; j < nbins; ++j) {
      const auto& members = bins[static_cast<std::size_t>(j)];
      if (members.empty()) continue;
      BinDeviation b;
      b.attribute = subset.attribute;
      b.bin = j;
      b.lower = j * bin_width;
      b.upper = std::min((j + 1) * bin_width, 1.0);
      b.count = members.size();
      b.deviation = detail::mean_gap(members, auditor);
      b.counted = members.size() >= min_bin_count;
      if (b.counted) subset_max = std::max(subset_max, b.deviation);
      r.bins.push_back(b);
    }
    r.per_subset_deviation.emplace_back(subset.attribute, subset_max);
    r.max_deviation = std::max(r.max_deviation, subset_max);
  }
  r.passes = r.max_deviation <= r.alpha;
  return r;
}

// ---------------------------------------------------------------------------
// Mixture stability

struct MixtureStability {
  double expected_score = 0.0;
  double mean_true_score = 0.0;
  double alpha = 0.0;
  double bound = 0.0;
  bool holds = false;
};

inline double subset_mean_true_score(const ImageSubset& s) {
  double acc = 0.0;
  for (const auto& img : s.images) acc += img.true_score;
  return acc / static_cast<double>(s.images.size());
}

inline double subset_mean_auditor_score(const ImageSubset& s, const Auditor& auditor) {
  double acc = 0.0;
  for (const auto& img : s.images) acc += auditor(img);
  return acc / static_cast<double>(s.images.size());
}

/// Expected auditor score of a model that draws from subset l with
/// probability p_l, against the common true mean. The bound is the
/// auditor's multiaccuracy deviation, widened by tolerate_mean_gap when the
/// subset true means are only approximately equal.
inline MixtureStability mixture_stability_check(const AuditCollection& collection, const Auditor& auditor,
                                                std::span<const double> weights, double tolerate_mean_gap = 0.0,
                                                double mean_tolerance = 1e-9) {
  collection.validate();
  const std::size_t k = collection.subsets.size();
  if (weights.size() != k) throw InputError("one weight per subset is required");
  double total = 0.0;
  for (double p : weights) {
    if (!(p >= 0.0)) throw InputError("weights must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InputError("weights do not sum to 1");

  // Accumulate in attribute order so permuting (subset, weight) pairs cannot
  // change the floating-point result.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return collection.subsets[a].attribute < collection.subsets[b].attribute;
  });

  double lo = 1.0;
  double hi = 0.0;
  double sum_true = 0.0;
  double expected = 0.0;
  for (std::size_t idx : order) {
    const auto& s = collection.subsets[idx];
    const double t = subset_mean_true_score(s);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    sum_true += t;
    expected += weights[idx] * subset_mean_auditor_score(s, auditor);
  }
  if (hi - lo > mean_tolerance + tolerate_mean_gap) {
    throw HypothesisError("subset true means differ by " + std::to_string(hi - lo) +
                          "; mixture stability requires equal true means");
  }
  MixtureStability out;
  out.expected_score = expected;
  out.mean_true_score = sum_true / static_cast<double>(k);
  out.alpha = multiaccuracy_audit(collection, auditor).max_deviation;
  out.bound = out.alpha + tolerate_mean_gap;
  out.holds = std::abs(out.expected_score - out.mean_true_score) <= out.bound;
  return out;
}

// ---------------------------------------------------------------------------
// Necessary-condition detectors

struct PairGap {
  std::string first;
  std::string second;
  double gap = 0.0;
};

struct TextImageCondition {
  std::vector<PairGap> pairs;
  std::vector<std::string> notices;
  double max_gap = 0.0;
  // No (C, alpha)-multiaccurate auditor built on this embedding exists for
  // alpha below this value.
  double alpha_lower_bound = 0.0;
};

/// Compares mean prompt-image cosines across subsets whose true means agree.
inline TextImageCondition text_image_condition_check(const AuditCollection& collection, const EmbeddingVector& prompt,
                                                     double mean_tolerance = 1e-9) {
  collection.validate();
  std::vector<double> true_means;
  std::vector<double> mean_cos;
  for (const auto& s : collection.subsets) {
    true_means.push_back(subset_mean_true_score(s));
    double acc = 0.0;
    for (const auto& img : s.images) acc += cosine(prompt, img.embedding);
    mean_cos.push_back(acc / static_cast<double>(s.images.size()));
  }
  TextImageCondition out;
  for (std::size_t a = 0; a < collection.subsets.size(); ++a) {
    for (std::size_t b = a + 1; b < collection.subsets.size(); ++b) {
      const auto& na = collection.subsets[a].attribute;
      const auto& nb = collection.subsets[b].attribute;
      if (std::abs(true_means[a] - true_means[b]) > mean_tolerance) {
        out.notices.push_back("skipped " + na + "/" + nb + ": true means differ");
        continue;
      }
      const double gap = std::abs(mean_cos[a] - mean_cos[b]);
      out.pairs.push_back({na, nb, gap});
      out.max_gap = std::max(out.max_gap, gap);
    }
  }
  if (out.pairs.empty()) throw InputError("text-image check: no pair of subsets with equal true means");
  out.alpha_lower_bound = out.max_gap / 4.0;
  return out;
}

/// gap > 4*alpha + 2*ball_radius. Equality is not a violation.
inline bool violates_text_text_bound(double gap, double alpha, double ball_radius) {
  return gap > 4.0 * alpha + 2.0 * ball_radius;
}

struct TextTextViolation {
  std::string first;
  std::string second;
  double gap = 0.0;
  double threshold = 0.0;
  bool violation = false;
};

/// Prompt-only detector: if images lie within ball_radius of their composed
/// prompts, an alpha-multiaccurate auditor forces the composed prompts to be
/// near-equidistant from the base. Requires a unit-norm prompt store.
inline std::vector<TextTextViolation> text_text_condition_check(const EmbeddingStore& prompts, const std::string& base,
                                                                const std::vector<std::string>& attributes,
                                                                double ball_radius, double alpha,
                                                                KeyComposition mode = KeyComposition::kPhrase) {
  if (!prompts.unit()) throw InputError("text-text check requires a prompt store declaring unit=true");
  if (ball_radius < 0.0 || alpha < 0.0) throw InputError("ball radius and alpha must be non-negative");
  const auto& eb = prompts.at(base);
  std::vector<double> cos;
  for (const auto& a : attributes) cos.push_back(cosine(eb, prompts.at(composed_key(base, a, mode))));
  std::vector<TextTextViolation> out;
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    for (std::size_t j = i + 1; j < attributes.size(); ++j) {
      TextTextViolation v;
      v.first = attributes[i];
      v.second = attributes[j];
      v.gap = std::abs(cos[i] - cos[j]);
      v.threshold = 4.0 * alpha + 2.0 * ball_radius;
      v.violation = violates_text_text_bound(v.gap, alpha, ball_radius);
      out.push_back(v);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring-method sweep over the mixing proportion of the first subset

struct SweepPoint {
  double proportion = 0.0;
  double score_then_average = 0.0;
  double average_then_score = 0.0;
  double average_then_score_variance = 0.0;
  std::optional<double> subclass;
};

/// A model emits subset 0 with probability p and the other subsets evenly
/// with the rest; images inside a subset are equally likely.
inline std::vector<SweepPoint> scoring_sweep(const AuditCollection& collection, const EmbeddingVector& prompt,
                                             const EmbeddingStore* prompts, const std::vector<std::string>& subclass_attributes,
                                             double step, KeyComposition mode = KeyComposition::kPhrase) {
  collection.validate();
  if (collection.subsets.size() < 2) throw InputError("a weight sweep needs at least two subsets");
  if (!(step > 0.0 && step <= 1.0)) throw InputError("sweep step must lie in (0, 1]");
  std::vector<EmbeddingVector> images;
  std::vector<std::size_t> owner;
  for (std::size_t s = 0; s < collection.subsets.size(); ++s) {
    for (const auto& img : collection.subsets[s].images) {
      images.push_back(img.embedding);
      owner.push_back(s);
    }
  }
  const auto others = static_cast<double>(collection.subsets.size() - 1);
  const int n_steps = static_cast<int>(std::llround(1.0 / step));
  std::vector<SweepPoint> out;
  for (int i = 0; i <= n_steps; ++i) {
    const double p = std::min(1.0, i * step);
    std::vector<double> w(images.size());
    for (std::size_t j = 0; j < images.size(); ++j) {
      const auto& subset = collection.subsets[owner[j]];
      const double mass = owner[j] == 0 ? p : (1.0 - p) / others;
      w[j] = mass / static_cast<double>(subset.images.size());
    }
    SweepPoint pt;
    pt.proportion = p;
    pt.score_then_average = score_then_average(prompt, images, w);
    const auto ats = average_then_score(prompt, images, w);
    pt.average_then_score = ats.score;
    pt.average_then_score_variance = ats.variance;
    if (prompts != nullptr && !subclass_attributes.empty()) {
      pt.subclass = subclass_score(*prompts, collection.base.base, subclass_attributes, images, w, mode).score;
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace fairdiff
