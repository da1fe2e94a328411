#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "trialrisk/splitting.hpp"
#include "trialrisk/synthgen.hpp"

using namespace trialrisk;

namespace {

Generated make_data(std::size_t n, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n_rows = n;
  cfg.seed = seed;
  return generate(cfg);
}

}  // namespace

TEST_CASE("exact 400/500/100 partition at n=1000") {
  const Generated gen = make_data(1000, 1);
  const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, 3);
  CHECK(plan.rows(Part::L1Train).size() == 400);
  CHECK(plan.rows(Part::L1Valid).size() == 500);
  CHECK(plan.rows(Part::InferenceTest).size() == 100);
  CHECK(verify_no_leakage(plan, gen.data).empty());
}

TEST_CASE("small-n rounding still sums to n") {
  const Generated gen = make_data(10, 2);
  const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, 5);
  const std::size_t total = plan.rows(Part::L1Train).size() + plan.rows(Part::L1Valid).size() +
                            plan.rows(Part::InferenceTest).size();
  CHECK(total == 10);
  CHECK(verify_no_leakage(plan, gen.data).empty());
}

TEST_CASE("same dataset and seed give identical assignments") {
  const Generated gen = make_data(500, 3);
  const SplitPlan a = make_split(gen.data, gen.schema, gen.schema.success_column, 11);
  const SplitPlan b = make_split(gen.data, gen.schema, gen.schema.success_column, 11);
  CHECK(a.parts == b.parts);
  const SplitPlan c = make_split(gen.data, gen.schema, gen.schema.success_column, 12);
  CHECK(a.parts != c.parts);
}

TEST_CASE("empty dataset is an error, degenerate fractions are config errors") {
  const Generated gen = make_data(20, 4);
  TabularDataset empty = select_rows(gen.data, {});
  CHECK_THROWS_AS(make_split(empty, gen.schema, gen.schema.success_column, 1), ValidationError);
  CHECK_THROWS_AS(make_split(gen.data, gen.schema, gen.schema.success_column, 1, {0.5, 0.5, 0.1}),
                  ConfigError);
  CHECK_THROWS_AS(make_split(gen.data, gen.schema, gen.schema.success_column, 1, {0.5, 0.5, 0.0}),
                  ConfigError);
}

TEST_CASE("tiny partitions produce warnings not errors") {
  const Generated gen = make_data(3, 6);
  const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, 1,
                                    {0.98, 0.01, 0.01});
  CHECK_FALSE(plan.warnings.empty());
  CHECK(verify_no_leakage(plan, gen.data).empty());
}

TEST_CASE("hand-corrupted plans are caught") {
  const Generated gen = make_data(50, 7);
  SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, 1);

  SECTION("double assignment") {
    SplitPlan bad = plan;
    bad.parts[0].push_back(bad.parts[1].front());
    std::sort(bad.parts[0].begin(), bad.parts[0].end());
    const auto violations = verify_no_leakage(bad, gen.data);
    REQUIRE_FALSE(violations.empty());
    bool found = false;
    for (const auto& v : violations) found = found || v.find("more than one") != std::string::npos;
    CHECK(found);
  }
  SECTION("dropped row") {
    SplitPlan bad = plan;
    bad.parts[1].pop_back();
    const auto violations = verify_no_leakage(bad, gen.data);
    REQUIRE_FALSE(violations.empty());
  }
  SECTION("out of range index") {
    SplitPlan bad = plan;
    bad.parts[2].push_back(10000);
    CHECK_FALSE(verify_no_leakage(bad, gen.data).empty());
  }
}

TEST_CASE("50 seeds: disjoint, exhaustive, fraction-faithful") {
  const Generated gen = make_data(2000, 8);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, seed);
    CHECK(verify_no_leakage(plan, gen.data).empty());
  }
}

TEST_CASE("stratification keeps class proportions within 2 points") {
  const Generated gen = make_data(1000, 9);
  double global_rate = 0.0;
  for (std::size_t r = 0; r < gen.data.n_rows; ++r) global_rate += gen.data.success[r];
  global_rate /= static_cast<double>(gen.data.n_rows);

  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, seed);
    for (int p = 0; p < 3; ++p) {
      const auto& rows = plan.parts[static_cast<std::size_t>(p)];
      double rate = 0.0;
      for (std::uint32_t r : rows) rate += gen.data.success[r];
      rate /= static_cast<double>(rows.size());
      worst = std::max(worst, std::abs(rate - global_rate));
    }
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("rows with missing stratify labels are still assigned") {
  GeneratorConfig cfg;
  cfg.n_rows = 400;
  cfg.success_missing_rate = 0.2;
  cfg.seed = 10;
  const Generated gen = generate(cfg);
  const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, 13);
  CHECK(verify_no_leakage(plan, gen.data).empty());
}

TEST_CASE("plan json round trip preserves the fingerprint") {
  const Generated gen = make_data(120, 11);
  const SplitPlan plan = make_split(gen.data, gen.schema, gen.schema.success_column, 21);
  const SplitPlan back = SplitPlan::from_json(plan.to_json());
  CHECK(back.fingerprint() == plan.fingerprint());
  CHECK(back.parts == plan.parts);
}
