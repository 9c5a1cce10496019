#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "chanprune/plan_io.hpp"

namespace cp = chanprune;

namespace {

cp::PrunePlan sample_plan() {
  cp::PrunePlan plan;
  plan.layers.push_back({"conv1", 16, 16, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15},
                         {1.0 / 3.0, 1.0 / 3.0}, 1, 432.0});
  plan.layers.push_back({"conv \"2\"", 32, 5, {1, 7, 9, 20, 31},
                         {0.1, 2.718281828459045, 3.141592653589793}, 2, 80.0});
  plan.flops_original = 1792.0;
  plan.flops_pruned = 512.0;
  plan.flops_budget = 896.0000000000001;
  plan.search_iterations = 2;
  plan.config.seed = 18446744073709551615ull;
  plan.config.eps = 1e-9;
  plan.config.cap_frac = 0.5;
  plan.config.class_filter = std::vector<int>{0, 3, 4};
  return plan;
}

}  // namespace

TEST(PlanJson, RoundTripIsExactAndByteStable) {
  const auto plan = sample_plan();
  const std::string text = cp::plan_to_json(plan);
  const auto back = cp::plan_from_json(text);
  EXPECT_EQ(back, plan);
  EXPECT_EQ(cp::plan_to_json(back), text);
}

TEST(PlanJson, SeventeenDigitFloats) {
  const std::string text = cp::plan_to_json(sample_plan());
  EXPECT_NE(text.find("0.33333333333333331"), std::string::npos);
  EXPECT_NE(text.find("896.00000000000011"), std::string::npos);
  EXPECT_NE(text.find("18446744073709551615"), std::string::npos);
}

TEST(PlanJson, FixedKeyOrder) {
  const std::string text = cp::plan_to_json(sample_plan());
  const char* keys[] = {"\"format\"", "\"version\"", "\"layers\"", "\"name\"", "\"c\"",
                        "\"d\"", "\"retained_indices\"", "\"lambda_history\"",
                        "\"iterations\"", "\"flops\"", "\"original\"", "\"pruned\"",
                        "\"budget\"", "\"search\"", "\"config\"", "\"d_min\"", "\"eta\"",
                        "\"eps\"", "\"seed\"", "\"cap_frac\"", "\"class_filter\"",
                        "\"pin_first_layer\""};
  std::size_t at = 0;
  for (const char* key : keys) {
    const auto found = text.find(key, at);
    ASSERT_NE(found, std::string::npos) << key;
    at = found;
  }
}

TEST(PlanJson, NullClassFilter) {
  auto plan = sample_plan();
  plan.config.class_filter.reset();
  const std::string text = cp::plan_to_json(plan);
  EXPECT_NE(text.find("\"class_filter\": null"), std::string::npos);
  EXPECT_FALSE(cp::plan_from_json(text).config.class_filter.has_value());
}

TEST(PlanJson, NonFiniteValuesRefused) {
  auto plan = sample_plan();
  plan.layers[1].lambda_history.back() = std::numeric_limits<double>::infinity();
  EXPECT_THROW(cp::plan_to_json(plan), cp::InvalidInput);
}

TEST(PlanJson, MalformedDocumentsRejected) {
  EXPECT_THROW(cp::plan_from_json("not json"), cp::InvalidInput);
  EXPECT_THROW(cp::plan_from_json("{}"), cp::InvalidInput);

  std::string text = cp::plan_to_json(sample_plan());
  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find("\"version\": 1"), 12, "\"version\": 9");
  EXPECT_THROW(cp::plan_from_json(wrong_version), cp::InvalidInput);

  std::string unsorted = text;
  unsorted.replace(unsorted.find("[1, 7, 9, 20, 31]"), 17, "[7, 1, 9, 20, 31]");
  EXPECT_THROW(cp::plan_from_json(unsorted), cp::InvalidInput);
}

TEST(PlanFile, WriteReadWrite) {
  const auto dir = std::filesystem::temp_directory_path() / "plan_io_test";
  std::filesystem::create_directories(dir);
  const auto plan = sample_plan();
  cp::write_plan(dir / "a.json", plan);
  cp::write_plan(dir / "b.json", cp::read_plan(dir / "a.json"));
  std::ifstream a(dir / "a.json"), b(dir / "b.json");
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(cp::read_plan(dir / "missing.json"), cp::IoError);
}
