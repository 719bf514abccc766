#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fairdiff/bias_metrics.hpp"

using namespace fairdiff;

namespace {

const std::string kData = FAIRDIFF_DATA_DIR;

EmbeddingStore small_store() {
  EmbeddingStore s(StoreKind::kPrompt, 3, false);
  s.insert("doctor", EmbeddingVector({1.0, 0.0, 0.0}));
  s.insert("male doctor", EmbeddingVector({0.8, 0.6, 0.0}));
  s.insert("female doctor", EmbeddingVector({0.6, 0.0, 0.8}));
  s.insert("nurse", EmbeddingVector({0.0, 1.0, 0.0}));
  s.insert("male nurse", EmbeddingVector({0.0, 0.6, 0.8}));
  s.insert("female nurse", EmbeddingVector({0.6, 0.8, 0.0}));
  s.insert("male", EmbeddingVector({0.0, 0.0, 1.0}));
  s.insert("female", EmbeddingVector({1.0, 1.0, 0.0}));
  return s;
}

const std::pair<std::string, std::string> kMF{"male", "female"};

}  // namespace

TEST(Closeness, DistanceAndThreshold) {
  const auto s = small_store();
  const auto r = epsilon_closeness(s, "doctor", "male", 0.7);
  EXPECT_NEAR(r.distance, std::sqrt(0.04 + 0.36), 1e-15);
  EXPECT_TRUE(r.is_close);
  EXPECT_FALSE(epsilon_closeness(s, "doctor", "male", 0.6).is_close);
  EXPECT_THROW(epsilon_closeness(s, "doctor", "male", -1.0), InputError);
}

TEST(Closeness, TokenModeUsesAttributeDirectly) {
  const auto s = small_store();
  const auto r = epsilon_closeness(s, "nurse", "male", 1.0, KeyComposition::kToken);
  EXPECT_NEAR(r.distance, std::sqrt(2.0), 1e-15);
}

TEST(BiasTable, RowValuesFromHandComputation) {
  const auto s = small_store();
  const auto rows = text_text_bias_table(s, {"doctor"}, kMF);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].per_attribute_cosine[0].second, 0.8, 1e-15);
  EXPECT_NEAR(rows[0].per_attribute_cosine[1].second, 0.6, 1e-15);
  EXPECT_NEAR(rows[0].delta, 0.2, 1e-15);
  // mean of the composed vectors (0.7, 0.3, 0.4)
  EXPECT_NEAR(rows[0].average_cosine, 0.7 / std::sqrt(0.49 + 0.09 + 0.16), 1e-15);
}

TEST(BiasTable, SwappingAttributesNegatesDelta) {
  const auto s = small_store();
  const auto a = text_text_bias_table(s, {"doctor", "nurse"}, kMF, SortOrder::kNone);
  const auto b = text_text_bias_table(s, {"doctor", "nurse"}, {"female", "male"}, SortOrder::kNone);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_DOUBLE_EQ(a[i].delta, -b[i].delta);
    EXPECT_DOUBLE_EQ(a[i].average_cosine, b[i].average_cosine);
  }
}

TEST(BiasTable, MissingKeysListedTogether) {
  const auto s = small_store();
  try {
    text_text_bias_table(s, {"doctor", "pilot"}, kMF);
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'pilot'"), std::string::npos);
    EXPECT_NE(msg.find("'male pilot'"), std::string::npos);
    EXPECT_NE(msg.find("'female pilot'"), std::string::npos);
  }
}

TEST(BiasTable, SortOrders) {
  const auto s = small_store();
  const auto desc = text_text_bias_table(s, {"nurse", "doctor"}, kMF, SortOrder::kDescending);
  EXPECT_EQ(desc[0].base, "doctor");
  const auto asc = text_text_bias_table(s, {"doctor", "nurse"}, kMF, SortOrder::kAscending);
  EXPECT_EQ(asc[0].base, "nurse");
  const auto none = text_text_bias_table(s, {"nurse", "doctor"}, kMF, SortOrder::kNone);
  EXPECT_EQ(none[0].base, "nurse");
}

TEST(BiasRatio, ReciprocalUnderSwap) {
  const auto s = small_store();
  const double r = bias_ratio(s, "doctor", kMF);
  EXPECT_NEAR(r, 0.8 / 0.6, 1e-15);
  EXPECT_NEAR(r * bias_ratio(s, "doctor", {"female", "male"}), 1.0, 1e-15);
}

TEST(BiasRatio, NonPositiveDenominatorThrows) {
  EmbeddingStore s(StoreKind::kPrompt, 2, false);
  s.insert("x", EmbeddingVector({1.0, 0.0}));
  s.insert("a x", EmbeddingVector({1.0, 1.0}));
  s.insert("b x", EmbeddingVector({0.0, 1.0}));
  EXPECT_THROW(bias_ratio(s, "x", {"a", "b"}), InputError);
}

// Oracle: solve the 2x2 normal equations [n Sx; Sx Sxx][b a]' = [Sy Sxy]' by
// Cramer's rule on raw sums.
TEST(OlsFit, MatchesNormalEquations) {
  NormalStream rng(3, 3);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 40; ++i) {
    const double x = 0.9 + 0.2 * rng.uniform();
    pts.emplace_back(x, 3.0 * x - 2.0 + 0.05 * rng.normal());
  }
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : pts) {
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  const double b = (sy * sxx - sx * sxy) / det;
  const double a = (n * sxy - sx * sy) / det;
  double ss_tot = 0, ss_res = 0;
  for (auto [x, y] : pts) {
    ss_tot += (y - sy / n) * (y - sy / n);
    ss_res += (y - b - a * x) * (y - b - a * x);
  }
  const auto fit = ols_fit(pts);
  EXPECT_NEAR(fit.slope, a, 1e-8);
  EXPECT_NEAR(fit.intercept, b, 1e-8);
  EXPECT_NEAR(fit.r_squared, 1.0 - ss_res / ss_tot, 1e-9);
  EXPECT_EQ(fit.n, 40u);
}

TEST(OlsFit, ExactLineAndDegenerateInputs) {
  const auto fit = ols_fit({{0.0, 1.0}, {1.0, 3.0}, {2.0, 5.0}});
  EXPECT_DOUBLE_EQ(fit.slope, 2.0);
  EXPECT_DOUBLE_EQ(fit.intercept, 1.0);
  EXPECT_DOUBLE_EQ(fit.r_squared, 1.0);
  const auto flat = ols_fit({{0.0, 1.0}, {1.0, 1.0}});
  EXPECT_EQ(flat.slope, 0.0);
  EXPECT_EQ(flat.r_squared, 0.0);
  EXPECT_THROW(ols_fit({{1.0, 1.0}}), InputError);
  EXPECT_THROW(ols_fit({{1.0, 1.0}, {1.0, 2.0}}), InputError);
}

// The planted occupation store reproduces the printed male / female / average
// cosines of the text-text table to three decimals.
TEST(OccupationTable, PrintedValuesReproduced) {
  const auto s = load_store(kData + "/occupations/prompts.store", StoreKind::kPrompt);
  const std::map<std::string, std::array<double, 3>> printed{
      {"firefighter", {0.971, 0.919, 0.959}}, {"chemist", {0.962, 0.923, 0.955}},
      {"chef", {0.954, 0.918, 0.950}},        {"architect", {0.957, 0.924, 0.955}},
      {"biologist", {0.978, 0.949, 0.972}},   {"professor", {0.968, 0.950, 0.966}},
      {"doctor", {0.962, 0.947, 0.965}},      {"teacher", {0.962, 0.947, 0.963}},
      {"librarian", {0.962, 0.951, 0.969}},   {"hairdresser", {0.951, 0.958, 0.967}},
      {"receptionist", {0.954, 0.962, 0.970}}, {"nurse", {0.951, 0.973, 0.974}}};
  std::vector<std::string> bases;
  for (const auto& [k, v] : printed) bases.push_back(k);
  const auto rows = text_text_bias_table(s, bases, kMF);
  ASSERT_EQ(rows.size(), 12u);
  for (const auto& r : rows) {
    const auto& p = printed.at(r.base);
    EXPECT_NEAR(r.per_attribute_cosine[0].second, p[0], 5e-4) << r.base;
    EXPECT_NEAR(r.per_attribute_cosine[1].second, p[1], 5e-4) << r.base;
    EXPECT_NEAR(r.average_cosine, p[2], 5e-4) << r.base;
  }
  // Sorted by delta, the male-leaning jobs come first and the three
  // female-leaning ones last.
  EXPECT_EQ(rows.front().base, "firefighter");
  EXPECT_EQ(rows[rows.size() - 3].base, "hairdresser");
  EXPECT_EQ(rows[rows.size() - 2].base, "receptionist");
  EXPECT_EQ(rows.back().base, "nurse");
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) EXPECT_GE(rows[i].delta, rows[i + 1].delta - 1e-12);
  for (const auto& r : rows) {
    const bool female_leaning = r.base == "nurse" || r.base == "receptionist" || r.base == "hairdresser";
    EXPECT_EQ(r.delta < 0.0, female_leaning) << r.base;
  }
}

TEST(OccupationTable, PrintedTiesOrderedByName) {
  const auto s = load_store(kData + "/occupations/prompts.store", StoreKind::kPrompt);
  const auto rows = text_text_bias_table(s, {"teacher", "doctor"}, kMF);
  EXPECT_EQ(rows[0].base, "doctor");
  EXPECT_EQ(rows[1].base, "teacher");
}
