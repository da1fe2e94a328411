#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "trialrisk/ebm.hpp"

using namespace trialrisk;

namespace {

FeatureMatrix planted_single_signal(std::size_t n, std::uint64_t seed, std::vector<int>& labels) {
  Rng rng(seed);
  FeatureMatrix X;
  X.n_rows = n;
  std::vector<double> x1(n), x2(n);
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = rng.normal();
    x2[i] = rng.normal();
    labels[i] = x1[i] > 0.0 ? 1 : 0;
  }
  FeatureColumn c1, c2;
  c1.name = "x1";
  c1.num = std::move(x1);
  c1.missing.assign(n, 0);
  c2.name = "x2";
  c2.num = std::move(x2);
  c2.missing.assign(n, 0);
  X.cols = {std::move(c1), std::move(c2)};
  return X;
}

double shape_range(const ShapeFunction& shape) {
  double lo = 0.0, hi = 0.0;
  for (const auto& class_values : shape.values) {
    for (int b = 0; b < shape.n_bins; ++b) {  // value bins only, not the Missing slot
      lo = std::min(lo, class_values[static_cast<std::size_t>(b)]);
      hi = std::max(hi, class_values[static_cast<std::size_t>(b)]);
    }
  }
  return hi - lo;
}

}  // namespace

TEST_CASE("planted signal dominates the noise feature's shape") {
  std::vector<int> labels;
  const FeatureMatrix X = planted_single_signal(2000, 3, labels);
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_rounds = 40;
  cfg.n_bins = 32;
  const EbmModel model = train_ebm(cfg, X, labels);
  const double signal = shape_range(model.shapes[0]);
  const double noise = shape_range(model.shapes[1]);
  CHECK(signal >= 10.0 * noise);

  const auto importance = feature_importance(model);
  CHECK(importance.front().first == "x1");
  double total = 0.0;
  for (const auto& [name, share] : importance) total += share;
  CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("prediction is exactly intercept plus shape lookups") {
  std::vector<int> labels;
  const FeatureMatrix X = planted_single_signal(300, 9, labels);
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_rounds = 25;
  const EbmModel model = train_ebm(cfg, X, labels);

  for (std::size_t i = 0; i < 100; ++i) {
    double logit = model.base_score[0];
    for (std::size_t f = 0; f < model.shapes.size(); ++f) {
      const int b = model.shapes[f].bin_for(X.cols[f], i);
      logit += model.shapes[f].values[0][static_cast<std::size_t>(b)];
    }
    const double expected = model.predict_raw_row(X, i)[0];
    REQUIRE_THAT(logit, Catch::Matchers::WithinAbs(expected, 1e-12));
  }
}

TEST_CASE("zero rounds give intercept-only predictions") {
  std::vector<int> labels = {0, 1, 0, 1, 1, 0};
  FeatureMatrix X;
  X.n_rows = 6;
  FeatureColumn c;
  c.name = "x";
  c.num = {1, 2, 3, 4, 5, 6};
  c.missing.assign(6, 0);
  X.cols = {c};
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_rounds = 0;
  const EbmModel model = train_ebm(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  for (const auto& p : proba) CHECK_THAT(p[1], Catch::Matchers::WithinAbs(0.5, 1e-9));
}

TEST_CASE("missing cells train and predict through the dedicated bin") {
  Rng rng(12);
  const std::size_t n = 600;
  FeatureMatrix X;
  X.n_rows = n;
  FeatureColumn c;
  c.name = "x";
  c.num.resize(n);
  c.missing.resize(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.num[i] = rng.normal();
    c.missing[i] = rng.bernoulli(0.25) ? 1 : 0;
    // missing itself is informative here
    labels[i] = c.missing[i] ? 1 : (c.num[i] > 0 ? 1 : 0);
    if (c.missing[i]) c.num[i] = 0.0;
  }
  X.cols = {c};
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_rounds = 40;
  const EbmModel model = train_ebm(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += (proba[i][1] >= 0.5 ? 1 : 0) == labels[i] ? 1u : 0u;
  CHECK(static_cast<double>(hits) / static_cast<double>(n) >= 0.95);
  // the Missing bin accumulated a positive contribution
  CHECK(model.shapes[0].values[0][static_cast<std::size_t>(model.shapes[0].n_bins)] > 0.0);
}

TEST_CASE("ebm training loss is non-increasing") {
  std::vector<int> labels;
  const FeatureMatrix X = planted_single_signal(500, 21, labels);
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_rounds = 40;
  cfg.learning_rate = 0.3;
  const EbmModel model = train_ebm(cfg, X, labels);
  for (std::size_t r = 1; r < model.training_loss.size(); ++r) {
    REQUIRE(model.training_loss[r] <= model.training_loss[r - 1] + 1e-9);
  }
}

TEST_CASE("ebm json round trip reproduces predictions bit-exactly") {
  std::vector<int> labels;
  const FeatureMatrix X = planted_single_signal(200, 33, labels);
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_rounds = 15;
  const EbmModel model = train_ebm(cfg, X, labels);
  const EbmModel back = EbmModel::from_json(json::parse(model.to_json().dump()));
  REQUIRE(model.predict_proba(X) == back.predict_proba(X));
}

TEST_CASE("ebm multiclass additivity and normalization") {
  Rng rng(77);
  const std::size_t n = 600;
  FeatureMatrix X;
  X.n_rows = n;
  FeatureColumn c;
  c.name = "x";
  c.num.resize(n);
  c.missing.assign(n, 0);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.num[i] = rng.normal();
    labels[i] = c.num[i] > 0.7 ? 2 : c.num[i] > -0.7 ? 1 : 0;
  }
  X.cols = {c};
  LearnerConfig cfg;
  cfg.kind = LearnerKind::Ebm;
  cfg.n_classes = 3;
  cfg.n_rounds = 30;
  const EbmModel model = train_ebm(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    int best = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      sum += proba[i][k];
      if (proba[i][k] > proba[i][static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    hits += best == labels[i] ? 1u : 0u;
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(n) >= 0.9);
}
