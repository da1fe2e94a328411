#include <catch2/catch_amalgamated.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/targets.hpp"

using namespace trialrisk;

TEST_CASE("recruitment encoding boundaries") {
  CHECK(encode_recruitment(100, 100) == RecruitmentClass::OnTarget);
  CHECK(encode_recruitment(105, 100) == RecruitmentClass::OnTarget);   // +5% inclusive
  CHECK(encode_recruitment(106, 100) == RecruitmentClass::AboveTarget);
  CHECK(encode_recruitment(95, 100) == RecruitmentClass::OnTarget);    // -5% inclusive
  CHECK(encode_recruitment(94, 100) == RecruitmentClass::BelowTarget);
  CHECK(encode_recruitment(70, 100) == RecruitmentClass::BelowTarget);  // exactly -30%
  CHECK(encode_recruitment(69, 100) == RecruitmentClass::SeverelyBelowTarget);
  CHECK(encode_recruitment(60, 100) == RecruitmentClass::SeverelyBelowTarget);
  CHECK(encode_recruitment(0, 100) == RecruitmentClass::SeverelyBelowTarget);

  CHECK_THROWS_AS(encode_recruitment(10, 0), ValidationError);
  CHECK_THROWS_AS(encode_recruitment(-1, 100), ValidationError);
}

TEST_CASE("dropout encoding boundaries") {
  CHECK(encode_dropout(0, 50) == DropoutClass::NoDropout);
  CHECK(encode_dropout(5, 100) == DropoutClass::Low);
  CHECK(encode_dropout(9, 100) == DropoutClass::Low);
  CHECK(encode_dropout(10, 100) == DropoutClass::Moderate);  // 10% closed
  CHECK(encode_dropout(40, 100) == DropoutClass::Moderate);  // 40% closed
  CHECK(encode_dropout(41, 100) == DropoutClass::High);      // >40% strict
  CHECK(encode_dropout(1, 1000) == DropoutClass::Low);       // 0.1%, not NoDropout

  CHECK_THROWS_AS(encode_dropout(5, 0), ValidationError);
  CHECK_THROWS_AS(encode_dropout(11, 10), ValidationError);
}

TEST_CASE("binary encoding and missing propagation") {
  CHECK(encode_binary(true) == 1);
  CHECK(encode_binary(false) == 0);
  CHECK_FALSE(encode_binary(std::optional<bool>{}).has_value());
  CHECK(encode_binary(std::optional<bool>{true}) == 1);
}

TEST_CASE("class labels match the fixed listing order") {
  const auto& recruit = target_spec(LatentFactor::RecruitmentDeviation);
  REQUIRE(recruit.class_labels ==
          std::vector<std::string>{"AboveTarget", "OnTarget", "BelowTarget", "SeverelyBelowTarget"});
  const auto& dropout = target_spec(LatentFactor::DropoutRate);
  REQUIRE(dropout.class_labels == std::vector<std::string>{"NoDropout", "Low", "Moderate", "High"});
  CHECK(target_spec(LatentFactor::ProtocolDeviation).encoding == TargetEncoding::Binary);
  CHECK(target_spec(LatentFactor::SaeOccurrence).encoding == TargetEncoding::Binary);
}

TEST_CASE("ordinal distance") {
  const auto& recruit = target_spec(LatentFactor::RecruitmentDeviation);
  CHECK(ordinal_distance(recruit, 1, 1) == 0);
  CHECK(ordinal_distance(recruit, 0, 3) == 3);  // AboveTarget vs SeverelyBelowTarget
  const auto& dropout = target_spec(LatentFactor::DropoutRate);
  CHECK(ordinal_distance(dropout, 0, 2) == 2);  // NoDropout vs Moderate

  CHECK_THROWS_AS(ordinal_distance(recruit, 4, 0), ValidationError);
  CHECK_THROWS_AS(ordinal_distance(ClassValue{LatentFactor::DropoutRate, 0},
                                   ClassValue{LatentFactor::SaeOccurrence, 0}),
                  ValidationError);
  CHECK(ordinal_distance(ClassValue{LatentFactor::DropoutRate, 3},
                         ClassValue{LatentFactor::DropoutRate, 1}) == 2);
}

TEST_CASE("ordinal distance is a metric over the four classes") {
  const auto& spec = target_spec(LatentFactor::DropoutRate);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      CHECK(ordinal_distance(spec, a, b) == ordinal_distance(spec, b, a));
      CHECK((ordinal_distance(spec, a, b) == 0) == (a == b));
      for (int c = 0; c < 4; ++c) {
        CHECK(ordinal_distance(spec, a, c) <=
              ordinal_distance(spec, a, b) + ordinal_distance(spec, b, c));
      }
    }
  }
}

TEST_CASE("bins are exhaustive and non-overlapping on random valid inputs") {
  Rng rng(20240811);
  for (int i = 0; i < 10000; ++i) {
    const long long planned = 1 + static_cast<long long>(rng.below(500));
    const long long enrolled = static_cast<long long>(rng.below(1000));
    const double d = static_cast<double>(enrolled - planned) / static_cast<double>(planned);
    int matches = 0;
    for (const auto& bin : recruitment_bins().bins) matches += bin.contains(d) ? 1 : 0;
    REQUIRE(matches == 1);

    const long long total = 1 + static_cast<long long>(rng.below(500));
    const long long dropouts = static_cast<long long>(rng.below(static_cast<std::uint64_t>(total) + 1));
    const double r = 100.0 * static_cast<double>(dropouts) / static_cast<double>(total);
    matches = 0;
    for (const auto& bin : dropout_bins().bins) matches += bin.contains(r) ? 1 : 0;
    REQUIRE(matches == 1);
  }
}

TEST_CASE("dropout class index is monotone in dropouts") {
  for (long long enrolled : {7ll, 50ll, 333ll}) {
    int prev = 0;
    for (long long d = 0; d <= enrolled; ++d) {
      const int cls = static_cast<int>(encode_dropout(d, enrolled));
      CHECK(cls >= prev);
      prev = cls;
    }
    CHECK(static_cast<int>(encode_dropout(0, enrolled)) == 0);
  }
}
