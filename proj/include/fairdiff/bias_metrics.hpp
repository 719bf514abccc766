#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fairdiff/embedding.hpp"
#include "fairdiff/error.hpp"

namespace fairdiff {

// How an attribute combines with a base prompt to form a store key. Phrase
// stores (CLIP exports) hold composed prompts such as "male doctor"; word
// stores (word2vec) only hold single tokens, so the attribute token itself is
// compared against the base token.
enum class KeyComposition { kPhrase, kToken };

inline std::string composed_key(const std::string& base, const std::string& attribute,
                                KeyComposition mode = KeyComposition::kPhrase) {
  return mode == KeyComposition::kPhrase ? PromptKey::composed(attribute, base).render() : attribute;
}

struct ClosenessResult {
  PromptKey base;
  std::string attribute;
  double distance = 0.0;
  double epsilon = 0.0;
  bool is_close = false;
};

inline ClosenessResult epsilon_closeness(const EmbeddingStore& store, const std::string& base, const std::string& attribute,
                                         double epsilon, KeyComposition mode = KeyComposition::kPhrase) {
  if (!(epsilon >= 0.0)) throw InputError("epsilon must be >= 0");
  const double d = embedding_distance(store.at(composed_key(base, attribute, mode)), store.at(base));
  return {PromptKey{base, std::nullopt}, attribute, d, epsilon, d <= epsilon};
}

struct BiasTableRow {
  std::string base;
  std::vector<std::pair<std::string, double>> per_attribute_cosine;
  double delta = 0.0;
  double average_cosine = 0.0;
};

enum class SortOrder { kDescending, kAscending, kNone };

/// One row per base: cosine of the base to each composed prompt, their
/// difference (first minus second) and the cosine of the base to the
/// unnormalized mean of the two composed embeddings.
inline std::vector<BiasTableRow> text_text_bias_table(const EmbeddingStore& store, const std::vector<std::string>& bases,
                                                      const std::pair<std::string, std::string>& attributes,
                                                      SortOrder order = SortOrder::kDescending,
                                                      KeyComposition mode = KeyComposition::kPhrase) {
  std::vector<std::string> missing;
  for (const auto& b : bases) {
    for (const auto& key : {b, composed_key(b, attributes.first, mode), composed_key(b, attributes.second, mode)}) {
      if (!store.contains(key) && std::find(missing.begin(), missing.end(), key) == missing.end()) missing.push_back(key);
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing keys:";
    for (const auto& k : missing) msg += " '" + k + "'";
    throw InputError(msg);
  }

  std::vector<BiasTableRow> rows;
  rows.reserve(bases.size());
  for (const auto& b : bases) {
    const auto& eb = store.at(b);
    const auto& e1 = store.at(composed_key(b, attributes.first, mode));
    const auto& e2 = store.at(composed_key(b, attributes.second, mode));
    BiasTableRow row;
    row.base = b;
    const double c1 = cosine(eb, e1);
    const double c2 = cosine(eb, e2);
    row.per_attribute_cosine = {{attributes.first, c1}, {attributes.second, c2}};
    row.delta = c1 - c2;
    std::vector<double> mean(e1.dimension());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = 0.5 * (e1[i] + e2[i]);
    row.average_cosine = cosine(eb, EmbeddingVector(std::move(mean)));
    rows.push_back(std::move(row));
  }
  // Deltas are compared at 1e-12 resolution so rounding noise cannot split
  // printed ties; ties go by base name, independent of input order.
  auto key = [](double d) { return std::llround(d * 1e12); };
  if (order == SortOrder::kDescending) {
    std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      return key(a.delta) != key(b.delta) ? key(a.delta) > key(b.delta) : a.base < b.base;
    });
  } else if (order == SortOrder::kAscending) {
    std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      return key(a.delta) != key(b.delta) ? key(a.delta) < key(b.delta) : a.base < b.base;
    });
  }
  return rows;
}

/// cos(b, a1+b) / cos(b, a2+b). Values above 1 lean toward the first attribute.
inline double bias_ratio(const EmbeddingStore& store, const std::string& base,
                         const std::pair<std::string, std::string>& attributes,
                         KeyComposition mode = KeyComposition::kPhrase) {
  const auto& eb = store.at(base);
  const double num = cosine(eb, store.at(composed_key(base, attributes.first, mode)));
  const double den = cosine(eb, store.at(composed_key(base, attributes.second, mode)));
  if (!(den > 0.0)) {
    throw InputError("bias_ratio for '" + base + "': denominator cosine " + std::to_string(den) + " is not positive");
  }
  return num / den;
}

struct RegressionSummary {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

/// Simple least squares on centered sums. Constant y gives slope 0 and R^2 0.
inline RegressionSummary ols_fit(const std::vector<std::pair<double, double>>& points) {
  const std::size_t n = points.size();
  if (n < 2) throw InputError("ols_fit needs at least 2 points");
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) throw InputError("ols_fit: degenerate x (all values equal)");
  RegressionSummary r;
  r.n = n;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  if (syy == 0.0) {
    r.r_squared = 0.0;
  } else {
    double ss_res = 0.0;
    for (const auto& [x, y] : points) {
      const double e = y - (r.intercept + r.slope * x);
      ss_res += e * e;
    }
    r.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return r;
}

}  // namespace fairdiff
