#include <gtest/gtest.h>

#include <filesystem>

#include "fairdiff/io.hpp"

using namespace fairdiff;

namespace {

const std::string kData = FAIRDIFF_DATA_DIR;

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const Config c;
  const Config back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, OverridesAndHash) {
  const Config c = config_from_json(Json::parse(R"({"lambda": 0.2, "sde": {"paths": 100}})"));
  EXPECT_DOUBLE_EQ(c.lambda, 0.2);
  EXPECT_EQ(c.sde.paths, 100);
  EXPECT_EQ(c.sde.steps, 400);
  EXPECT_NE(config_hash(c), config_hash(Config{}));
}

TEST(Config, UnknownKeysAndTypesReportedTogether) {
  try {
    config_from_json(Json::parse(R"({"lamda": 0.2, "epsilon": "x", "sde": {"stepz": 1}})"));
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'lamda'"), std::string::npos);
    EXPECT_NE(msg.find("epsilon"), std::string::npos);
    EXPECT_NE(msg.find("'sde.stepz'"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(Json::array()), InputError);
}

TEST(Config, CheckedInDefaultsMatch) {
  EXPECT_EQ(load_config(kData + "/report/default_config.json").lambda, Config{}.lambda);
  EXPECT_EQ(config_hash(load_config(kData + "/report/default_config.json")), config_hash(Config{}));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(ModelFile, FixtureLoadsAndResolvesStore) {
  const auto spec = load_model(kData + "/models/separated_model.json");
  EXPECT_EQ(spec.model.size(), 2u);
  EXPECT_EQ(spec.model.prompt_dimension(), 2u);
  ASSERT_TRUE(spec.prompt_store.has_value());
  EXPECT_TRUE(std::filesystem::exists(*spec.prompt_store));
  EXPECT_EQ(spec.base.value_or(""), "doctor");
  const auto back = parse_model_json(model_to_json(spec.model));
  EXPECT_EQ(back.model.weight_matrix(), spec.model.weight_matrix());
}

TEST(ModelFile, Errors) {
  EXPECT_THROW(parse_model_json(Json::parse("[]")), InputError);
  try {
    parse_model_json(Json::parse(R"({"prompt_dim": 2, "components": [{"attribute": "a", "mean": [0]}],
                                     "A": [[1]], "c": [0], "extra": 1})"));
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'variance'"), std::string::npos);
    EXPECT_NE(msg.find("A row 0"), std::string::npos);
    EXPECT_NE(msg.find("'extra'"), std::string::npos);
  }
  EXPECT_THROW(parse_model_json(Json::parse(R"({"prompt_dim": 1,
      "components": [{"attribute": "a", "mean": [0], "variance": [1]}, {"attribute": "b", "mean": [1], "variance": [2]}],
      "A": [[1], [0]], "c": [0, 0]})")),
               InputError);
}

TEST(AuditFile, FixtureLoads) {
  const auto in = load_audit_input(kData + "/counterexample/audit.json");
  EXPECT_EQ(in.collection.subsets.size(), 2u);
  EXPECT_EQ(in.collection.subsets[0].images.size(), 129u);
  EXPECT_EQ(in.collection.base.render(), "doctor");
}

TEST(Fixed, NoNegativeZero) {
  EXPECT_EQ(fixed(-1e-9, 6), "0.000000");
  EXPECT_EQ(fixed(-0.0015, 3), "-0.002");
  EXPECT_EQ(fixed(0.5964, 3), "0.596");
}

TEST(Resolve, RelativeToFile) {
  EXPECT_EQ(resolve_relative("/a/b/model.json", "s.store"), "/a/b/s.store");
  EXPECT_EQ(resolve_relative("/a/b/model.json", "/abs.store"), "/abs.store");
}
