#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fairdiff/embedding.hpp"

using namespace fairdiff;

namespace {

EmbeddingStore parse(const std::string& text) {
  std::istringstream in(text);
  return parse_store(in);
}

}  // namespace

TEST(EmbeddingVector, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(EmbeddingVector(std::vector<double>{}), InputError);
  EXPECT_THROW(EmbeddingVector({1.0, std::nan("")}), InputError);
  EXPECT_THROW(EmbeddingVector({1.0, INFINITY}), InputError);
}

TEST(Cosine, MatchesHandComputation) {
  const EmbeddingVector u({1.0, 2.0, 2.0});
  const EmbeddingVector v({2.0, 0.0, 1.0});
  // <u,v> = 4, |u| = 3, |v| = sqrt(5)
  EXPECT_NEAR(cosine(u, v), 4.0 / (3.0 * std::sqrt(5.0)), 1e-15);
  EXPECT_NEAR(embedding_distance(u, v), std::sqrt(1.0 + 4.0 + 1.0), 1e-15);
}

TEST(Cosine, DimensionMismatchThrows) {
  EXPECT_THROW(cosine(EmbeddingVector({1.0}), EmbeddingVector({1.0, 0.0})), InputError);
}

TEST(Cosine, ZeroVectorThrows) {
  EXPECT_THROW(cosine(EmbeddingVector({0.0, 0.0}), EmbeddingVector({1.0, 0.0})), InputError);
}

TEST(WeightedSum, CombinesVectors) {
  const EmbeddingVector a({1.0, 0.0});
  const EmbeddingVector b({0.0, 2.0});
  const EmbeddingVector* vs[] = {&a, &b};
  const double w[] = {0.25, 0.75};
  const auto s = weighted_sum(vs, w);
  EXPECT_DOUBLE_EQ(s[0], 0.25);
  EXPECT_DOUBLE_EQ(s[1], 1.5);
}

TEST(StoreFormat, ParsesQuotedKeysAndComments) {
  const auto s = parse(
      "fairdiff-store v1 count=2 dim=2 kind=prompt unit=false normalize=false\n"
      "# a comment\n"
      "\"male doctor\" 1 0\n"
      "\"doctor\" 0.5 0.25\n");
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.kind(), StoreKind::kPrompt);
  EXPECT_DOUBLE_EQ(s.at("male doctor")[0], 1.0);
  EXPECT_DOUBLE_EQ(s.at(PromptKey::composed("male", "doctor"))[1], 0.0);
  EXPECT_DOUBLE_EQ(s.at("doctor")[1], 0.25);
}

TEST(StoreFormat, RoundTripIsBitwise) {
  EmbeddingStore s(StoreKind::kImage, 3, false);
  s.insert("img 1", EmbeddingVector({0.1, -1.0 / 3.0, 1e-300}));
  s.insert("img2", EmbeddingVector({std::nextafter(1.0, 2.0), 2.0, -0.0}));
  std::ostringstream out;
  write_store(out, s, "round trip");
  std::istringstream in(out.str());
  const auto back = parse_store(in, StoreKind::kImage);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [key, v] : s.entries()) {
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.at(key)[i], v[i]) << key;
  }
}

TEST(StoreFormat, NormalizeFlagNormalizesOnLoad) {
  const auto s = parse("fairdiff-store v1 count=1 dim=2 kind=prompt unit=true normalize=true\n\"x\" 3 4\n");
  EXPECT_DOUBLE_EQ(s.at("x")[0], 0.6);
  EXPECT_TRUE(s.at("x").is_unit());
}

TEST(StoreFormat, Errors) {
  const std::string head = "fairdiff-store v1 count=1 dim=2 kind=prompt unit=false normalize=false\n";
  EXPECT_THROW(parse("not a store\n"), InputError);
  EXPECT_THROW(parse(head + "x 1 2\n"), InputError);               // unquoted key
  EXPECT_THROW(parse(head + "\"x 1 2\n"), InputError);             // unterminated key
  EXPECT_THROW(parse(head + "\"x\" 1 2 3\n"), InputError);         // dimension mismatch
  EXPECT_THROW(parse(head + "\"x\" 1 2\n\"x\" 1 2\n"), InputError);  // duplicate
  EXPECT_THROW(parse(head + "\"x\" 1 nan\n"), InputError);         // non-finite
  EXPECT_THROW(parse(head + "\"x\" 1 abc\n"), InputError);         // not a number
  EXPECT_THROW(parse(head), InputError);                             // count mismatch
  EXPECT_THROW(parse("fairdiff-store v1 count=1 dim=2 kind=prompt unit=true normalize=false\n\"x\" 1 1\n"),
               InputError);  // unit promised but not delivered
  EXPECT_THROW(parse("fairdiff-store v1 count=1 dim=2 kind=video unit=false normalize=false\n\"x\" 1 1\n"),
               InputError);
  EXPECT_THROW(parse("fairdiff-store v1 count=1 dim=2 kind=prompt unit=false\n\"x\" 1 1\n"), InputError);
  std::istringstream in(head + "\"x\" 1 2\n");
  EXPECT_THROW(parse_store(in, StoreKind::kImage), InputError);  // wrong kind
}

TEST(StoreFormat, UnitCheckToleratesSinglePrecisionRounding) {
  const std::string head = "fairdiff-store v1 count=1 dim=2 kind=prompt unit=true normalize=false\n";
  // 0.6f and 0.8f widened to double: norm is off by about 1e-8
  const float a = 0.6f, b = 0.8f;
  char row[128];
  std::snprintf(row, sizeof row, "\"x\" %.17g %.17g\n", static_cast<double>(a), static_cast<double>(b));
  EXPECT_NO_THROW(parse(head + row));
  EXPECT_NO_THROW(parse(head + "\"x\" 0.6000004 0.8\n"));        // norm 1 + 2.4e-7
  EXPECT_THROW(parse(head + "\"x\" 0.600004 0.8\n"), InputError);  // norm 1 + 2.4e-6
}

TEST(StoreFormat, MissingKeyNamesTheKey) {
  const auto s = parse("fairdiff-store v1 count=1 dim=1 kind=prompt unit=false normalize=false\n\"x\" 1\n");
  try {
    s.at("female nurse");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("female nurse"), std::string::npos);
  }
}

TEST(Word2Vec, SampleReproducesPrintedCosines) {
  const auto s = load_any_store(std::string(FAIRDIFF_DATA_DIR) + "/word_vectors/w2v_sample.txt");
  EXPECT_FALSE(s.unit());
  // Cosines are printed to three decimals.
  EXPECT_NEAR(cosine(s.at("man"), s.at("nurse")), 0.255, 5e-4);
  EXPECT_NEAR(cosine(s.at("woman"), s.at("nurse")), 0.441, 5e-4);
  EXPECT_NEAR(cosine(s.at("man"), s.at("person")), 0.534, 5e-4);
  EXPECT_NEAR(cosine(s.at("woman"), s.at("person")), 0.547, 5e-4);
  EXPECT_NEAR(cosine(s.at("man"), s.at("philosopher")), 0.290, 5e-4);
  EXPECT_NEAR(cosine(s.at("woman"), s.at("philosopher")), 0.176, 5e-4);
}

TEST(Word2Vec, NormalizeOption) {
  const auto s = load_any_store(std::string(FAIRDIFF_DATA_DIR) + "/word_vectors/w2v_sample.txt", true);
  EXPECT_TRUE(s.unit());
  for (const auto& [k, v] : s.entries()) EXPECT_TRUE(v.is_unit()) << k;
}

TEST(JohnsonLindenstrauss, PreservesPairwiseDistances) {
  // 60 random unit vectors in 768 dimensions projected to 256.
  const std::size_t n = 768, k = 256, count = 60;
  NormalStream rng(77, 0);
  EmbeddingStore s(StoreKind::kImage, n, true);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    s.insert("v" + std::to_string(i), EmbeddingVector(std::move(v)).normalized());
  }
  const auto p = jl_project(s, static_cast<int>(k), 5);
  EXPECT_EQ(p.dimension(), k);
  std::size_t within = 0, total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      const auto& a = s.entries()[i];
      const auto& b = s.entries()[j];
      const double r = embedding_distance(p.at(a.first), p.at(b.first)) / embedding_distance(a.second, b.second);
      within += (r * r >= 0.7 && r * r <= 1.3);
      ++total;
    }
  }
  EXPECT_GE(static_cast<double>(within) / total, 0.99);
}

TEST(JohnsonLindenstrauss, SeedFixesOutputAndRenormalizeGivesUnit) {
  EmbeddingStore s(StoreKind::kPrompt, 8, false);
  s.insert("a", EmbeddingVector({1, 2, 3, 4, 5, 6, 7, 8}));
  s.insert("b", EmbeddingVector({-1, 0, 1, 0, -1, 0, 1, 0}));
  const auto p1 = jl_project(s, 4, 11);
  const auto p2 = jl_project(s, 4, 11);
  const auto p3 = jl_project(s, 4, 12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p1.at("a")[i], p2.at("a")[i]);
  EXPECT_NE(p1.at("a")[0], p3.at("a")[0]);
  const auto u = jl_project(s, 4, 11, true);
  EXPECT_TRUE(u.unit());
  EXPECT_THROW(jl_project(s, 8, 1), InputError);
  EXPECT_THROW(jl_project(s, 0, 1), InputError);
}
