#pragma once

// Synthetic trial portfolios from a planted structural model:
//
//   features x  ->  latent risk scores z  ->  operational success
//
// Per factor, z = effect * (w . v(x)) + noise_latent * eps with w sparse and
// unit-norm, where v(x) maps numeric cells to their value, categorical cells
// to a per-level effect value and boolean cells to +/-1. Scores are
// standardized by their theoretical sd, binary factors threshold at 0 and
// ordinal factors cut at the configured thresholds into the four-class
// encodings. Success probability is
//   sigmoid( mediation * (b . z_std) + direct * (u . v(x)) + noise_success * eps )
// with b the normalized per-factor mediation weights (negative sign: higher
// risk lowers success). Missingness masks (MCAR, MAR, label missingness) are
// applied afterward; ground truth is retained pre-masking, which makes a
// closed-form Bayes oracle available for acceptance testing.
//
// All draws come from one seeded generator in a fixed order, so equal
// config+seed gives bit-identical output.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/dataset.hpp"
#include "trialrisk/targets.hpp"

namespace trialrisk {

// Base rate of the MAR mask at driver value 0: sigmoid(kMarInterceptLogit).
inline constexpr double kMarInterceptLogit = -0.8472978603872034;  // logit(0.3)

struct MarSpec {
  std::string masked_feature;
  std::string driver_feature;
  double slope = 2.0;
};

struct GeneratorConfig {
  std::size_t n_rows = 2000;
  int n_numeric = 18;
  int n_categorical = 8;
  int n_boolean = 4;
  double sparsity = 0.3;  // fraction of features with nonzero effect per factor
  double effect_feature_to_latent = 1.0;
  double mediation_latent_to_success = 2.5;
  double direct_effect_strength = 0.3;
  double noise_latent = 1.0;
  double noise_success = 0.4;
  // Base-rate shift on the success logit; positive values give the
  // success-heavy class mix clinical portfolios show.
  double success_intercept = 0.0;
  std::array<double, 3> recruitment_thresholds = {-1.0, -0.1, 1.05};
  std::array<double, 3> dropout_thresholds = {-1.0, -0.1, 1.05};
  double mcar_rate = 0.0;
  std::vector<MarSpec> mar_specs;
  // Relative latent->success weight per factor; lets tests plant weak and
  // strong mediators.
  std::array<double, 4> mediation_weight = {0.05, 0.6, 1.0, 1.0};
  std::array<double, 4> label_missing_rate = {0.0, 0.0, 0.0, 0.0};
  double success_missing_rate = 0.0;
  std::array<double, 3> phase_mix = {0.25, 0.45, 0.30};
  std::uint64_t seed = 42;

  void check() const {
    if (n_rows < 1) throw ConfigError("generator: n_rows must be >= 1");
    if (n_numeric < 0 || n_categorical < 0 || n_boolean < 0) {
      throw ConfigError("generator: feature counts must be non-negative");
    }
    if (n_numeric + n_categorical + n_boolean < 1) {
      throw ConfigError("generator: at least one feature is required");
    }
    if (sparsity < 0.0 || sparsity > 1.0) throw ConfigError("generator: sparsity must be in [0,1]");
    auto nonneg = [](double v, const char* name) {
      if (v < 0.0) throw ConfigError(std::string("generator: ") + name + " must be >= 0");
    };
    nonneg(effect_feature_to_latent, "effect_feature_to_latent");
    nonneg(mediation_latent_to_success, "mediation_latent_to_success");
    nonneg(direct_effect_strength, "direct_effect_strength");
    nonneg(noise_latent, "noise_latent");
    nonneg(noise_success, "noise_success");
    for (const auto& thresholds : {recruitment_thresholds, dropout_thresholds}) {
      if (!(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2])) {
        throw ConfigError("generator: ordinal thresholds must be strictly increasing");
      }
    }
    auto rate = [](double v, const char* name) {
      if (v < 0.0 || v > 1.0) throw ConfigError(std::string("generator: ") + name + " must be in [0,1]");
    };
    rate(mcar_rate, "mcar_rate");
    for (double r : label_missing_rate) rate(r, "label_missing_rate");
    rate(success_missing_rate, "success_missing_rate");
    double mix = 0.0;
    for (double p : phase_mix) {
      rate(p, "phase_mix");
      mix += p;
    }
    if (std::abs(mix - 1.0) > 1e-9) throw ConfigError("generator: phase_mix must sum to 1");
  }

  json to_json() const {
    json mars = json::array();
    for (const auto& m : mar_specs) {
      mars.push_back({{"masked_feature", m.masked_feature},
                      {"driver_feature", m.driver_feature},
                      {"slope", m.slope}});
    }
    return json{{"n_rows", n_rows},
                {"n_numeric", n_numeric},
                {"n_categorical", n_categorical},
                {"n_boolean", n_boolean},
                {"sparsity", sparsity},
                {"effect_feature_to_latent", effect_feature_to_latent},
                {"mediation_latent_to_success", mediation_latent_to_success},
                {"direct_effect_strength", direct_effect_strength},
                {"noise_latent", noise_latent},
                {"noise_success", noise_success},
                {"success_intercept", success_intercept},
                {"recruitment_thresholds", recruitment_thresholds},
                {"dropout_thresholds", dropout_thresholds},
                {"mcar_rate", mcar_rate},
                {"mar_specs", mars},
                {"mediation_weight", mediation_weight},
                {"label_missing_rate", label_missing_rate},
                {"success_missing_rate", success_missing_rate},
                {"phase_mix", phase_mix},
                {"seed", seed}};
  }

  static GeneratorConfig from_json(const json& j) {
    GeneratorConfig c;
    c.n_rows = j.value("n_rows", c.n_rows);
    c.n_numeric = j.value("n_numeric", c.n_numeric);
    c.n_categorical = j.value("n_categorical", c.n_categorical);
    c.n_boolean = j.value("n_boolean", c.n_boolean);
    c.sparsity = j.value("sparsity", c.sparsity);
    c.effect_feature_to_latent = j.value("effect_feature_to_latent", c.effect_feature_to_latent);
    c.mediation_latent_to_success =
        j.value("mediation_latent_to_success", c.mediation_latent_to_success);
    c.direct_effect_strength = j.value("direct_effect_strength", c.direct_effect_strength);
    c.noise_latent = j.value("noise_latent", c.noise_latent);
    c.noise_success = j.value("noise_success", c.noise_success);
    c.success_intercept = j.value("success_intercept", c.success_intercept);
    c.recruitment_thresholds = j.value("recruitment_thresholds", c.recruitment_thresholds);
    c.dropout_thresholds = j.value("dropout_thresholds", c.dropout_thresholds);
    c.mcar_rate = j.value("mcar_rate", c.mcar_rate);
    if (j.contains("mar_specs")) {
      for (const auto& m : j.at("mar_specs")) {
        c.mar_specs.push_back({m.at("masked_feature").get<std::string>(),
                               m.at("driver_feature").get<std::string>(),
                               m.value("slope", 2.0)});
      }
    }
    c.mediation_weight = j.value("mediation_weight", c.mediation_weight);
    c.label_missing_rate = j.value("label_missing_rate", c.label_missing_rate);
    c.success_missing_rate = j.value("success_missing_rate", c.success_missing_rate);
    c.phase_mix = j.value("phase_mix", c.phase_mix);
    c.seed = j.value("seed", c.seed);
    c.check();
    return c;
  }
};

struct GroundTruth {
  // Coefficients on the effect encoding v(x).
  std::vector<std::vector<double>> feat_to_latent;  // [factor][feature]
  std::vector<double> latent_to_success;            // [factor], signed
  std::vector<double> feat_to_success;              // direct path
  // Per-row standardized latent scores and realized success probability.
  std::vector<std::array<double, 4>> latent_scores;
  std::vector<double> success_prob;

  json to_json() const {
    return json{{"feat_to_latent", feat_to_latent},
                {"latent_to_success", latent_to_success},
                {"feat_to_success", feat_to_success},
                {"latent_scores", latent_scores},
                {"success_prob", success_prob}};
  }

  static GroundTruth from_json(const json& j) {
    GroundTruth t;
    t.feat_to_latent = j.at("feat_to_latent").get<std::vector<std::vector<double>>>();
    t.latent_to_success = j.at("latent_to_success").get<std::vector<double>>();
    t.feat_to_success = j.at("feat_to_success").get<std::vector<double>>();
    t.latent_scores = j.at("latent_scores").get<std::vector<std::array<double, 4>>>();
    t.success_prob = j.at("success_prob").get<std::vector<double>>();
    return t;
  }
};

struct Generated {
  FeatureSchema schema;
  TabularDataset data;
  GroundTruth truth;
  std::vector<std::string> warnings;
};

namespace detail {

inline FeatureSchema generator_schema(const GeneratorConfig& cfg) {
  FeatureSchema schema;
  int group_cursor = 0;
  auto next_group = [&] {
    const FeatureGroup g = kAllFeatureGroups[static_cast<std::size_t>(group_cursor)];
    group_cursor = (group_cursor + 1) % static_cast<int>(kAllFeatureGroups.size());
    return g;
  };
  auto pad2 = [](int i) {
    std::string s = std::to_string(i);
    return s.size() < 2 ? "0" + s : s;
  };
  for (int i = 0; i < cfg.n_numeric; ++i) {
    schema.features.push_back({"num_" + pad2(i), FeatureKind::Numeric, next_group(), {}});
  }
  for (int i = 0; i < cfg.n_categorical; ++i) {
    const int n_levels = 3 + i % 3;
    std::vector<std::string> levels;
    for (int l = 0; l < n_levels; ++l) levels.push_back("L" + std::to_string(l));
    schema.features.push_back({"cat_" + pad2(i), FeatureKind::Categorical, next_group(), levels});
  }
  for (int i = 0; i < cfg.n_boolean; ++i) {
    schema.features.push_back({"bool_" + pad2(i), FeatureKind::Boolean, next_group(), {}});
  }
  for (LatentFactor f : kAllLatentFactors) {
    schema.latent_targets.push_back({"target_" + factor_id(f), f});
  }
  schema.success_column = "op_success";
  schema.phase_column = "phase";
  schema.check();
  return schema;
}

}  // namespace detail

inline Generated generate(const GeneratorConfig& cfg) {
  cfg.check();
  Generated gen;
  gen.schema = detail::generator_schema(cfg);
  const std::size_t n_features = gen.schema.features.size();
  const std::size_t n = cfg.n_rows;

  const bool degenerate = cfg.effect_feature_to_latent == 0.0 &&
                          cfg.mediation_latent_to_success == 0.0 &&
                          cfg.direct_effect_strength == 0.0 && cfg.noise_latent == 0.0 &&
                          cfg.noise_success == 0.0;
  if (degenerate) {
    gen.warnings.push_back("all strengths and noises are zero; labels are fair coin flips");
  }

  Rng rng(cfg.seed);

  // 1. Structure: per-level effect values, factor weights, direct weights.
  std::vector<std::vector<double>> level_effects(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    const FeatureSpec& spec = gen.schema.features[f];
    if (spec.kind == FeatureKind::Categorical) {
      level_effects[f].resize(spec.levels.size());
      for (double& e : level_effects[f]) e = rng.normal();
    }
  }
  GroundTruth& truth = gen.truth;
  truth.feat_to_latent.assign(4, std::vector<double>(n_features, 0.0));
  for (int k = 0; k < 4; ++k) {
    auto& w = truth.feat_to_latent[static_cast<std::size_t>(k)];
    double norm2 = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) {
      if (rng.uniform() < cfg.sparsity) {
        w[f] = rng.normal();
        norm2 += w[f] * w[f];
      }
    }
    if (norm2 == 0.0) {
      // sparsity can zero a factor out entirely; force one connection
      const std::size_t f = static_cast<std::size_t>(rng.below(n_features));
      w[f] = 1.0;
      norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : w) v *= inv;
  }
  truth.feat_to_success.assign(n_features, 0.0);
  {
    double norm2 = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) {
      if (rng.uniform() < cfg.sparsity) {
        truth.feat_to_success[f] = rng.normal();
        norm2 += truth.feat_to_success[f] * truth.feat_to_success[f];
      }
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& v : truth.feat_to_success) v *= inv;
    }
  }
  truth.latent_to_success.assign(4, 0.0);
  {
    double norm2 = 0.0;
    for (double w : cfg.mediation_weight) norm2 += w * w;
    const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
    for (int k = 0; k < 4; ++k) {
      truth.latent_to_success[static_cast<std::size_t>(k)] =
          -cfg.mediation_weight[static_cast<std::size_t>(k)] * inv;
    }
  }

  // 2. Rows.
  TabularDataset& ds = gen.data;
  ds.schema_fingerprint = gen.schema.fingerprint();
  ds.n_rows = n;
  ds.columns.resize(n_features);
  for (std::size_t f = 0; f < n_features; ++f) {
    Column& col = ds.columns[f];
    col.kind = gen.schema.features[f].kind;
    col.missing.assign(n, 0);
    if (col.kind == FeatureKind::Numeric) col.num.assign(n, 0.0);
    else col.cat.assign(n, 0);
  }
  ds.targets.resize(4);
  for (int k = 0; k < 4; ++k) {
    ds.targets[static_cast<std::size_t>(k)].factor = gen.schema.latent_targets[static_cast<std::size_t>(k)].factor;
    ds.targets[static_cast<std::size_t>(k)].cls.assign(n, 0);
    ds.targets[static_cast<std::size_t>(k)].missing.assign(n, 0);
  }
  ds.success.assign(n, 0);
  ds.success_missing.assign(n, 0);
  ds.phase.assign(n, Phase::I);
  truth.latent_scores.assign(n, {});
  truth.success_prob.assign(n, 0.0);

  const double latent_sd = std::sqrt(cfg.effect_feature_to_latent * cfg.effect_feature_to_latent +
                                     cfg.noise_latent * cfg.noise_latent);
  std::vector<double> v(n_features, 0.0);  // effect encoding of the current row
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < n_features; ++f) {
      Column& col = ds.columns[f];
      const FeatureSpec& spec = gen.schema.features[f];
      switch (spec.kind) {
        case FeatureKind::Numeric: {
          const double x = rng.normal();
          col.num[r] = x;
          v[f] = x;
          break;
        }
        case FeatureKind::Categorical: {
          const std::int32_t lv = static_cast<std::int32_t>(rng.below(spec.levels.size()));
          col.cat[r] = lv;
          v[f] = level_effects[f][static_cast<std::size_t>(lv)];
          break;
        }
        case FeatureKind::Boolean: {
          const bool b = rng.bernoulli(0.5);
          col.cat[r] = b ? 1 : 0;
          v[f] = b ? 1.0 : -1.0;
          break;
        }
      }
    }
    // Phase from the configured mix.
    {
      const double u = rng.uniform();
      ds.phase[r] = u < cfg.phase_mix[0]           ? Phase::I
                    : u < cfg.phase_mix[0] + cfg.phase_mix[1] ? Phase::II
                                                              : Phase::III;
    }
    double mediated = 0.0;
    for (int k = 0; k < 4; ++k) {
      const auto& w = truth.feat_to_latent[static_cast<std::size_t>(k)];
      double raw = 0.0;
      for (std::size_t f = 0; f < n_features; ++f) raw += w[f] * v[f];
      const double z = cfg.effect_feature_to_latent * raw + cfg.noise_latent * rng.normal();
      const double z_std = latent_sd > 0.0 ? z / latent_sd : z;
      truth.latent_scores[r][static_cast<std::size_t>(k)] = z_std;
      mediated += truth.latent_to_success[static_cast<std::size_t>(k)] * z_std;

      const LatentFactor factor = ds.targets[static_cast<std::size_t>(k)].factor;
      const LatentTargetSpec& tspec = target_spec(factor);
      int cls;
      if (tspec.encoding == TargetEncoding::Binary) {
        cls = z_std > 0.0 ? 1 : 0;
      } else {
        const auto& th = factor == LatentFactor::RecruitmentDeviation ? cfg.recruitment_thresholds
                                                                      : cfg.dropout_thresholds;
        cls = z_std <= th[0] ? 0 : z_std <= th[1] ? 1 : z_std <= th[2] ? 2 : 3;
      }
      ds.targets[static_cast<std::size_t>(k)].cls[r] = static_cast<std::int8_t>(cls);
    }
    double direct = 0.0;
    for (std::size_t f = 0; f < n_features; ++f) direct += truth.feat_to_success[f] * v[f];
    const double eta = cfg.success_intercept + cfg.mediation_latent_to_success * mediated +
                       cfg.direct_effect_strength * direct + cfg.noise_success * rng.normal();
    const double p = 1.0 / (1.0 + std::exp(-eta));
    truth.success_prob[r] = p;
    ds.success[r] = rng.bernoulli(p) ? 1 : 0;
  }

  // 3. Masks, after the full structural pass so truth stays pre-masking.
  if (cfg.mcar_rate > 0.0) {
    for (std::size_t f = 0; f < n_features; ++f) {
      Column& col = ds.columns[f];
      for (std::size_t r = 0; r < n; ++r) {
        if (rng.bernoulli(cfg.mcar_rate)) {
          col.missing[r] = 1;
          if (col.kind == FeatureKind::Numeric) col.num[r] = 0.0;
          else col.cat[r] = 0;
        }
      }
    }
  }
  for (const MarSpec& mar : cfg.mar_specs) {
    const int masked = gen.schema.feature_index(mar.masked_feature);
    const int driver = gen.schema.feature_index(mar.driver_feature);
    if (masked < 0 || driver < 0) {
      throw ConfigError("generator: MAR spec names unknown feature " +
                        (masked < 0 ? mar.masked_feature : mar.driver_feature));
    }
    Column& mcol = ds.columns[static_cast<std::size_t>(masked)];
    const Column& dcol = ds.columns[static_cast<std::size_t>(driver)];
    const FeatureSpec& dspec = gen.schema.features[static_cast<std::size_t>(driver)];
    for (std::size_t r = 0; r < n; ++r) {
      double z;
      switch (dspec.kind) {
        case FeatureKind::Numeric: z = dcol.num[r]; break;
        case FeatureKind::Categorical:
          z = level_effects[static_cast<std::size_t>(driver)][static_cast<std::size_t>(dcol.cat[r])];
          break;
        default: z = dcol.cat[r] ? 1.0 : -1.0; break;
      }
      const double p = 1.0 / (1.0 + std::exp(-(kMarInterceptLogit + mar.slope * z)));
      if (rng.bernoulli(p)) {
        mcol.missing[r] = 1;
        if (mcol.kind == FeatureKind::Numeric) mcol.num[r] = 0.0;
        else mcol.cat[r] = 0;
      }
    }
  }
  for (int k = 0; k < 4; ++k) {
    const double rate = cfg.label_missing_rate[static_cast<std::size_t>(k)];
    if (rate <= 0.0) continue;
    for (std::size_t r = 0; r < n; ++r) {
      if (rng.bernoulli(rate)) {
        ds.targets[static_cast<std::size_t>(k)].missing[r] = 1;
        ds.targets[static_cast<std::size_t>(k)].cls[r] = 0;
      }
    }
  }
  if (cfg.success_missing_rate > 0.0) {
    for (std::size_t r = 0; r < n; ++r) {
      if (rng.bernoulli(cfg.success_missing_rate)) {
        ds.success_missing[r] = 1;
        ds.success[r] = 0;
      }
    }
  }
  return gen;
}

// Classify by true success probability >= 0.5: the ceiling any learned
// model can approach. Rows with a missing success label are skipped.
inline double bayes_optimal_accuracy(const GroundTruth& truth,
                                     const std::vector<std::int8_t>& labels,
                                     const std::vector<std::uint8_t>& label_missing = {}) {
  if (truth.success_prob.size() != labels.size()) {
    throw ValidationError("bayes_optimal_accuracy: rows misaligned");
  }
  long long n = 0, correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (!label_missing.empty() && label_missing[r]) continue;
    ++n;
    const int predicted = truth.success_prob[r] >= 0.5 ? 1 : 0;
    if (predicted == labels[r]) ++correct;
  }
  if (n == 0) throw ValidationError("bayes_optimal_accuracy: no observed labels");
  return static_cast<double>(correct) / static_cast<double>(n);
}

// Emits the same CSV + schema JSON the dataset module consumes; ground truth
// goes to a separate file never fed to training.
inline void write_generated(const Generated& gen, const std::string& dir) {
  save_csv(gen.data, gen.schema, dir + "/data.csv");
  save_schema(gen.schema, dir + "/schema.json");
  std::ofstream truth_out(dir + "/ground_truth.json");
  if (!truth_out) throw IoError("generator: cannot write " + dir + "/ground_truth.json");
  truth_out << gen.truth.to_json().dump() << '\n';
}

}  // namespace trialrisk
