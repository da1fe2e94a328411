#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "trialrisk/gbdt.hpp"
#include "trialrisk/learner.hpp"

using namespace trialrisk;

namespace {

FeatureColumn numeric_col(std::string name, std::vector<double> values,
                          std::vector<std::uint8_t> missing = {}) {
  FeatureColumn col;
  col.name = std::move(name);
  col.numeric = true;
  col.num = std::move(values);
  col.missing = missing.empty() ? std::vector<std::uint8_t>(col.num.size(), 0) : std::move(missing);
  return col;
}

FeatureColumn categorical_col(std::string name, int n_levels, std::vector<std::int32_t> values,
                              std::vector<std::uint8_t> missing = {}) {
  FeatureColumn col;
  col.name = std::move(name);
  col.numeric = false;
  col.n_levels = n_levels;
  col.cat = std::move(values);
  col.missing = missing.empty() ? std::vector<std::uint8_t>(col.cat.size(), 0) : std::move(missing);
  return col;
}

// Linearly separable toy problem: y = 1{x0 > 0}, x1 noise.
FeatureMatrix separable_matrix(std::size_t n, std::uint64_t seed, std::vector<int>& labels) {
  Rng rng(seed);
  FeatureMatrix X;
  X.n_rows = n;
  std::vector<double> x0(n), x1(n);
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    x0[i] = rng.normal();
    x1[i] = rng.normal();
    labels[i] = x0[i] > 0.0 ? 1 : 0;
  }
  X.cols.push_back(numeric_col("x0", std::move(x0)));
  X.cols.push_back(numeric_col("x1", std::move(x1)));
  return X;
}

double binary_log_loss(double z, double y) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace

TEST_CASE("logistic gradient identities") {
  // p = 0.5, y = 1 -> g = -0.5, h = 0.25
  const double p = 0.5, y = 1.0;
  CHECK(p - y == -0.5);
  CHECK(p * (1.0 - p) == 0.25);
}

TEST_CASE("gradient and hessian match central finite differences") {
  Rng rng(606);
  // second differences cancel catastrophically below ~1e-4, so the hessian
  // check uses a wider step than the gradient check
  const double eps_g = 1e-5;
  const double eps_h = 2e-4;
  for (int i = 0; i < 20; ++i) {
    const double z = 2.5 * rng.normal();
    const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double g_analytic = p - y;
    const double h_analytic = p * (1.0 - p);
    const double g_fd =
        (binary_log_loss(z + eps_g, y) - binary_log_loss(z - eps_g, y)) / (2.0 * eps_g);
    const double h_fd = (binary_log_loss(z + eps_h, y) - 2.0 * binary_log_loss(z, y) +
                         binary_log_loss(z - eps_h, y)) /
                        (eps_h * eps_h);
    REQUIRE_THAT(g_analytic, Catch::Matchers::WithinAbs(g_fd, 1e-6));
    REQUIRE_THAT(h_analytic, Catch::Matchers::WithinAbs(h_fd, 1e-6));
  }
}

TEST_CASE("leaf weight formula") {
  CHECK(leaf_weight(-2.0, 4.0, 1.0) == 0.4);
  CHECK(leaf_weight(0.0, 10.0, 1.0) == 0.0);
}

TEST_CASE("split gain formula at a worked point") {
  // GL=-2, HL=3, GR=2, HR=3, lambda=1, gamma=0:
  // 0.5 * (4/4 + 4/4 - 0/7) = 1.0
  CHECK_THAT(split_gain(-2.0, 3.0, 2.0, 3.0, 1.0, 0.0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(split_gain(-2.0, 3.0, 2.0, 3.0, 1.0, 0.25), Catch::Matchers::WithinAbs(0.75, 1e-12));
}

TEST_CASE("separable toy set trains to >= 0.99 accuracy") {
  std::vector<int> labels;
  const FeatureMatrix X = separable_matrix(200, 17, labels);
  LearnerConfig cfg;
  cfg.n_rounds = 50;
  cfg.max_depth = 3;
  const GbdtModel model = train_gbdt(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    hits += (proba[i][1] >= 0.5 ? 1 : 0) == labels[i] ? 1u : 0u;
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(X.n_rows) >= 0.99);

  // signal feature carries the importance
  const auto importance = feature_importance(model);
  CHECK(importance.front().first == "x0");
  double total = 0.0;
  for (const auto& [name, share] : importance) total += share;
  CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("zero rounds predict the class prior") {
  std::vector<int> labels = {0, 0, 1, 1};
  FeatureMatrix X;
  X.n_rows = 4;
  X.cols.push_back(numeric_col("x", {1.0, 2.0, 3.0, 4.0}));
  LearnerConfig cfg;
  cfg.n_rounds = 0;
  const GbdtModel model = train_gbdt(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  for (const auto& p : proba) {
    CHECK_THAT(p[1], Catch::Matchers::WithinAbs(0.5, 1e-9));
  }
}

TEST_CASE("multiclass probabilities sum to one") {
  Rng rng(23);
  const std::size_t n = 1000;
  FeatureMatrix X;
  X.n_rows = n;
  std::vector<double> a(n), b(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
    labels[i] = a[i] > 0.5 ? 2 : a[i] > -0.5 ? 1 : 0;
  }
  X.cols.push_back(numeric_col("a", std::move(a)));
  X.cols.push_back(numeric_col("b", std::move(b)));
  LearnerConfig cfg;
  cfg.n_classes = 3;
  cfg.n_rounds = 20;
  const GbdtModel model = train_gbdt(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  for (const auto& p : proba) {
    REQUIRE(p.size() == 3);
    double sum = 0.0;
    for (double v : p) {
      sum += v;
      REQUIRE(std::isfinite(v));
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("training is bit-identical across worker counts") {
  std::vector<int> labels;
  FeatureMatrix X = separable_matrix(300, 41, labels);
  // add a categorical column so both split kinds are exercised
  {
    Rng rng(42);
    std::vector<std::int32_t> levels(X.n_rows);
    std::vector<std::uint8_t> missing(X.n_rows, 0);
    for (std::size_t i = 0; i < X.n_rows; ++i) {
      levels[i] = static_cast<std::int32_t>(rng.below(4));
      missing[i] = rng.bernoulli(0.1) ? 1 : 0;
    }
    X.cols.push_back(categorical_col("site_type", 4, std::move(levels), std::move(missing)));
  }
  LearnerConfig cfg;
  cfg.n_rounds = 30;
  const GbdtModel one = train_gbdt(cfg, X, labels, {}, 1);
  const GbdtModel eight = train_gbdt(cfg, X, labels, {}, 8);
  REQUIRE(one.to_json().dump() == eight.to_json().dump());
  const auto pa = one.predict_proba(X);
  const auto pb = eight.predict_proba(X);
  REQUIRE(pa == pb);
}

TEST_CASE("training loss is non-increasing over rounds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 1000);
    const std::size_t n = 150;
    FeatureMatrix X;
    X.n_rows = n;
    std::vector<double> x0(n), x1(n), x2(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      x0[i] = rng.normal();
      x1[i] = rng.normal();
      x2[i] = rng.normal();
      const double score = 1.2 * x0[i] - 0.7 * x1[i] + 0.5 * rng.normal();
      labels[i] = score > 0 ? 1 : 0;
    }
    X.cols.push_back(numeric_col("x0", std::move(x0)));
    X.cols.push_back(numeric_col("x1", std::move(x1)));
    X.cols.push_back(numeric_col("x2", std::move(x2)));
    LearnerConfig cfg;
    cfg.n_rounds = 60;
    cfg.learning_rate = 0.3;
    cfg.max_depth = 3;
    const GbdtModel model = train_gbdt(cfg, X, labels);
    REQUIRE(model.training_loss.size() == 60);
    for (std::size_t r = 1; r < model.training_loss.size(); ++r) {
      REQUIRE(model.training_loss[r] <= model.training_loss[r - 1] + 1e-9);
    }
  }
}

TEST_CASE("missing routing is total, including all-missing rows") {
  Rng rng(7);
  const std::size_t n = 400;
  FeatureMatrix X;
  X.n_rows = n;
  std::vector<double> x0(n), x1(n);
  std::vector<std::uint8_t> m0(n, 0), m1(n, 0);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    x0[i] = rng.normal();
    x1[i] = rng.normal();
    labels[i] = x0[i] + 0.3 * x1[i] > 0 ? 1 : 0;
    m0[i] = rng.bernoulli(0.3) ? 1 : 0;
    m1[i] = rng.bernoulli(0.3) ? 1 : 0;
  }
  X.cols.push_back(numeric_col("x0", std::move(x0), std::move(m0)));
  X.cols.push_back(numeric_col("x1", std::move(x1), std::move(m1)));
  LearnerConfig cfg;
  cfg.n_rounds = 40;
  const GbdtModel model = train_gbdt(cfg, X, labels);

  FeatureMatrix probe;
  probe.n_rows = 1;
  probe.cols.push_back(numeric_col("x0", {0.0}, {1}));
  probe.cols.push_back(numeric_col("x1", {0.0}, {1}));
  const auto proba = model.predict_proba(probe);
  REQUIRE(std::isfinite(proba[0][1]));
  CHECK(proba[0][1] >= 0.0);
  CHECK(proba[0][1] <= 1.0);
}

TEST_CASE("missing_mode reject refuses missing cells") {
  FeatureMatrix X;
  X.n_rows = 4;
  X.cols.push_back(numeric_col("x", {1, 2, 3, 4}, {0, 1, 0, 0}));
  LearnerConfig cfg;
  cfg.missing_mode = MissingMode::Reject;
  CHECK_THROWS_AS(train_gbdt(cfg, X, {0, 1, 0, 1}), ValidationError);
}

TEST_CASE("single-class labels are rejected") {
  FeatureMatrix X;
  X.n_rows = 3;
  X.cols.push_back(numeric_col("x", {1, 2, 3}));
  CHECK_THROWS_AS(train_gbdt(LearnerConfig{}, X, {1, 1, 1}), ValidationError);
  CHECK_THROWS_AS(train_gbdt(LearnerConfig{}, X, {0, 1, 2}), ValidationError);  // out of range
}

TEST_CASE("categorical level-set splits separate a categorical signal") {
  Rng rng(321);
  const std::size_t n = 500;
  std::vector<std::int32_t> levels(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    levels[i] = static_cast<std::int32_t>(rng.below(6));
    labels[i] = (levels[i] == 1 || levels[i] == 4) ? 1 : 0;
  }
  FeatureMatrix X;
  X.n_rows = n;
  X.cols.push_back(categorical_col("kind", 6, std::move(levels)));
  LearnerConfig cfg;
  cfg.n_rounds = 20;
  cfg.max_depth = 2;
  const GbdtModel model = train_gbdt(cfg, X, labels);
  const auto proba = model.predict_proba(X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += (proba[i][1] >= 0.5 ? 1 : 0) == labels[i] ? 1u : 0u;
  CHECK(static_cast<double>(hits) / static_cast<double>(n) >= 0.99);
}

TEST_CASE("model json round trip reproduces predictions bit-exactly") {
  std::vector<int> labels;
  const FeatureMatrix X = separable_matrix(150, 55, labels);
  LearnerConfig cfg;
  cfg.n_rounds = 25;
  const GbdtModel model = train_gbdt(cfg, X, labels);
  const GbdtModel back = GbdtModel::from_json(json::parse(model.to_json().dump()));
  REQUIRE(model.predict_proba(X) == back.predict_proba(X));

  json bumped = model.to_json();
  bumped["format_version"] = 999;
  CHECK_THROWS_AS(GbdtModel::from_json(bumped), ParseError);
}

TEST_CASE("quantile binning handles constants, duplicates and missing") {
  const FeatureColumn constant = numeric_col("c", {5, 5, 5, 5});
  const FeatureBins cb = build_bins(constant, 8);
  CHECK(cb.n_bins == 1);
  CHECK(cb.edges.empty());

  const FeatureColumn skewed = numeric_col("s", {1, 1, 1, 1, 1, 1, 2, 3});
  const FeatureBins sb = build_bins(skewed, 4);
  CHECK(sb.n_bins >= 2);
  for (std::size_t i = 1; i < sb.edges.size(); ++i) CHECK(sb.edges[i] > sb.edges[i - 1]);

  const FeatureColumn all_missing = numeric_col("m", {0, 0}, {1, 1});
  const FeatureBins mb = build_bins(all_missing, 4);
  CHECK(mb.n_bins == 1);

  const auto binned = bin_column(skewed, sb);
  for (std::size_t i = 0; i < binned.size(); ++i) {
    CHECK(binned[i] >= 0);
    CHECK(binned[i] < sb.n_bins);
  }
}
