#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "trialrisk/common.hpp"
#include "trialrisk/evaluation.hpp"

using namespace trialrisk;

namespace {

// Independent oracle: per-class tallies recomputed by scanning the raw
// label pairs, no confusion matrix involved.
struct OracleMetrics {
  double accuracy;
  std::vector<double> precision, recall, f1;
};

OracleMetrics brute_force_metrics(const std::vector<int>& pred, const std::vector<int>& actual,
                                  int n_classes) {
  OracleMetrics m;
  long long hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == actual[i] ? 1 : 0;
  m.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  for (int k = 0; k < n_classes; ++k) {
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == k && actual[i] == k) ++tp;
      if (pred[i] == k && actual[i] != k) ++fp;
      if (pred[i] != k && actual[i] == k) ++fn;
    }
    const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(p + r > 0 ? 2 * p * r / (p + r) : 0.0);
  }
  return m;
}

}  // namespace

TEST_CASE("perfect predictions") {
  std::vector<int> labels(50);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  const ClassificationReport rep = compute_report(labels, labels, 2);
  CHECK(rep.accuracy == 1.0);
  for (const auto& c : rep.per_class) {
    CHECK(c.precision == 1.0);
    CHECK(c.recall == 1.0);
    CHECK(c.f1 == 1.0);
  }
  CHECK(rep.positive_f1.has_value());
  CHECK(*rep.positive_f1 == 1.0);
}

TEST_CASE("all-one-class predictions on balanced data") {
  std::vector<int> actual, pred;
  for (int i = 0; i < 100; ++i) {
    actual.push_back(i % 2);
    pred.push_back(1);
  }
  const ClassificationReport rep = compute_report(pred, actual, 2);
  CHECK(rep.accuracy == 0.5);
  CHECK(rep.per_class[0].recall == 0.0);
  CHECK(rep.per_class[1].recall == 1.0);
  CHECK_FALSE(rep.per_class[0].degenerate);  // class 0 has actual support
}

TEST_CASE("zero-support class is degenerate, not NaN") {
  const std::vector<int> pred = {0, 1, 0, 1};
  const std::vector<int> actual = {0, 1, 1, 0};
  const ClassificationReport rep = compute_report(pred, actual, 3);
  CHECK(rep.per_class[2].degenerate);
  CHECK(rep.per_class[2].f1 == 0.0);
  CHECK(std::isfinite(rep.macro_f1));
}

TEST_CASE("metric oracle equivalence on 100 random configurations") {
  Rng rng(31337);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng.below(3));
    const std::size_t n = 20 + rng.below(180);
    std::vector<int> pred(n), actual(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
      actual[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
    }
    const ClassificationReport rep = compute_report(pred, actual, n_classes);
    const OracleMetrics oracle = brute_force_metrics(pred, actual, n_classes);
    REQUIRE(rep.accuracy == oracle.accuracy);
    for (int k = 0; k < n_classes; ++k) {
      REQUIRE(rep.per_class[static_cast<std::size_t>(k)].precision == oracle.precision[static_cast<std::size_t>(k)]);
      REQUIRE(rep.per_class[static_cast<std::size_t>(k)].recall == oracle.recall[static_cast<std::size_t>(k)]);
      REQUIRE(rep.per_class[static_cast<std::size_t>(k)].f1 == oracle.f1[static_cast<std::size_t>(k)]);
    }
  }
}

TEST_CASE("accuracy decomposition and micro-F1 identity") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_classes = 2 + static_cast<int>(rng.below(4));
    const std::size_t n = 30 + rng.below(100);
    std::vector<int> pred(n), actual(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
      actual[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes)));
    }
    const ClassificationReport rep = compute_report(pred, actual, n_classes);

    // accuracy = sum_k support_k * recall_k / total
    double weighted_recall = 0.0;
    long long total = 0;
    for (const auto& c : rep.per_class) {
      weighted_recall += static_cast<double>(c.support) * c.recall;
      total += c.support;
    }
    REQUIRE_THAT(rep.accuracy,
                 Catch::Matchers::WithinAbs(weighted_recall / static_cast<double>(total), 1e-12));

    // micro-F1 == accuracy for single-label classification
    long long tp = 0, fp = 0, fn = 0;
    for (int k = 0; k < n_classes; ++k) {
      for (int j = 0; j < n_classes; ++j) {
        if (k == j) tp += rep.confusion.at(k, k);
        else {
          fp += rep.confusion.at(j, k);
          fn += rep.confusion.at(k, j);
        }
      }
    }
    const double micro_p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double micro_r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r);
    REQUIRE_THAT(micro_f1, Catch::Matchers::WithinAbs(rep.accuracy, 1e-12));
  }
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(compute_report(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ValidationError);
  CHECK_THROWS_AS(compute_report(std::vector<int>{}, std::vector<int>{}, 2), ValidationError);
  CHECK_THROWS_AS(compute_report(std::vector<int>{5}, std::vector<int>{0}, 2), ValidationError);
}

TEST_CASE("agreement buckets reproduce the reported proportions") {
  // 109 rows with all four factors right, 100 success-correct; 45 rows with
  // all four wrong, 30 success-correct.
  std::vector<std::vector<int>> pred(4), actual(4);
  std::vector<std::uint8_t> correct;
  for (int i = 0; i < 109; ++i) {
    for (int f = 0; f < 4; ++f) {
      pred[static_cast<std::size_t>(f)].push_back(1);
      actual[static_cast<std::size_t>(f)].push_back(1);
    }
    correct.push_back(i < 100 ? 1 : 0);
  }
  for (int i = 0; i < 45; ++i) {
    for (int f = 0; f < 4; ++f) {
      pred[static_cast<std::size_t>(f)].push_back(0);
      actual[static_cast<std::size_t>(f)].push_back(1);
    }
    correct.push_back(i < 30 ? 1 : 0);
  }
  const AgreementAnalysis analysis = agreement_analysis(pred, actual, correct);
  REQUIRE(analysis.buckets.size() == 2);
  CHECK(analysis.buckets[0].label() == "0/1");
  CHECK(analysis.buckets[0].n == 45);
  CHECK_THAT(analysis.buckets[0].prop_correct(), Catch::Matchers::WithinAbs(30.0 / 45.0, 1e-12));
  CHECK(analysis.buckets[1].label() == "1/1");
  CHECK(analysis.buckets[1].n == 109);
  CHECK_THAT(analysis.buckets[1].prop_correct(), Catch::Matchers::WithinAbs(100.0 / 109.0, 1e-12));
  CHECK(analysis.buckets[1].prop_correct() > 0.91);
  CHECK(analysis.buckets[1].prop_correct() < 0.92);
}

TEST_CASE("agreement uses observed factors only and reduces fractions") {
  // one row: 4 observed, 2 correct -> 1/2; another: 3 observed, 1 correct -> 1/3;
  // another: nothing observed -> excluded
  std::vector<std::vector<int>> pred(4), actual(4);
  auto add_row = [&](std::array<int, 4> p, std::array<int, 4> a) {
    for (int f = 0; f < 4; ++f) {
      pred[static_cast<std::size_t>(f)].push_back(p[static_cast<std::size_t>(f)]);
      actual[static_cast<std::size_t>(f)].push_back(a[static_cast<std::size_t>(f)]);
    }
  };
  add_row({1, 1, 0, 0}, {1, 1, 1, 1});    // 2/4 -> 1/2
  add_row({1, 0, 0, 9}, {1, 1, 1, -1});   // 1/3
  add_row({0, 0, 0, 0}, {-1, -1, -1, -1});  // excluded
  const std::vector<std::uint8_t> correct = {1, 0, 1};
  const AgreementAnalysis analysis = agreement_analysis(pred, actual, correct);
  CHECK(analysis.excluded_rows == 1);
  REQUIRE(analysis.buckets.size() == 2);
  CHECK(analysis.buckets[0].label() == "1/3");
  CHECK(analysis.buckets[1].label() == "1/2");
  // bucket counts + exclusions == rows
  long long total = analysis.excluded_rows;
  for (const auto& b : analysis.buckets) total += b.n;
  CHECK(total == 3);
}

TEST_CASE("distance sensitivity bookkeeping") {
  const auto& spec = target_spec(LatentFactor::DropoutRate);
  const std::vector<int> pred = {0, 1, 3, 2, 0, 1};
  const std::vector<int> actual = {0, 1, 0, -1, -1, 3};
  const std::vector<std::uint8_t> correct = {1, 1, 0, 1, 0, 1};
  const SensitivityEntry entry = distance_sensitivity(spec, pred, actual, correct);

  REQUIRE(entry.buckets.size() == 5);  // 0..3 + NA
  long long total = 0;
  for (const auto& b : entry.buckets) total += b.n;
  CHECK(total == 6);
  CHECK(entry.buckets[0].n == 2);      // distance 0
  CHECK(entry.buckets[2].n == 1);      // distance 2 (1 vs 3)
  CHECK(entry.buckets[3].n == 1);      // distance 3 (3 vs 0)
  CHECK(entry.buckets[4].distance == -1);
  CHECK(entry.buckets[4].n == 2);      // NA bucket = injected missing count
  CHECK(entry.buckets[4].label() == "NA");
  CHECK(entry.buckets[0].accuracy() == 1.0);
}

TEST_CASE("perfect factor prediction lands entirely in distance 0") {
  const auto& spec = target_spec(LatentFactor::SaeOccurrence);
  const std::vector<int> actual = {0, 1, 1, 0, 1};
  const std::vector<std::uint8_t> correct = {1, 1, 1, 0, 1};
  const SensitivityEntry entry = distance_sensitivity(spec, actual, actual, correct);
  CHECK(entry.buckets[0].n == 5);
  CHECK(entry.buckets[1].n == 0);
  CHECK(entry.buckets.back().n == 0);
}
