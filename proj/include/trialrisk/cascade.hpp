#pragma once

// Two-level pipeline: Level-1 latent-risk models are fitted on the L1Train
// split only, their out-of-sample predictions on L1Valid become appended
// features, and the Level-2 operational-success model is fitted on L1Valid
// rows only — never on ground-truth latent labels. Fit row-id sets are
// recorded so the leakage invariants stay machine-checkable after the fact.
//
// Level-2 validation metrics come from a seeded 20% holdout of the L1Valid
// success-labeled rows; the shipped Level-2 model is the one fitted on the
// other 80%.

#include <algorithm>
#include <array>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/dataset.hpp"
#include "trialrisk/evaluation.hpp"
#include "trialrisk/missingness.hpp"
#include "trialrisk/model.hpp"
#include "trialrisk/splitting.hpp"
#include "trialrisk/targets.hpp"

namespace trialrisk {

enum class Augmentation { LabelsOnly, ProbabilitiesOnly, LabelsAndProbabilities };

inline const std::string& augmentation_name(Augmentation a) {
  static const std::array<std::string, 3> names = {"labels_only", "probabilities_only",
                                                   "labels_and_probabilities"};
  return names[static_cast<std::size_t>(a)];
}

inline Augmentation augmentation_from_name(const std::string& name) {
  if (name == "labels_only") return Augmentation::LabelsOnly;
  if (name == "probabilities_only") return Augmentation::ProbabilitiesOnly;
  if (name == "labels_and_probabilities") return Augmentation::LabelsAndProbabilities;
  throw ConfigError("unknown augmentation mode: " + name);
}

struct ImputationSpec {
  enum class Mode { None, Mean, MostFrequent, Knn };
  Mode mode = Mode::None;
  int k = 5;  // knn only

  std::string name() const {
    switch (mode) {
      case Mode::None: return "none";
      case Mode::Mean: return "mean";
      case Mode::MostFrequent: return "most_frequent";
      case Mode::Knn: return "knn";
    }
    return "none";
  }

  static ImputationSpec from_name(const std::string& name, int k = 5) {
    ImputationSpec spec;
    spec.k = k;
    if (name == "none") spec.mode = Mode::None;
    else if (name == "mean") spec.mode = Mode::Mean;
    else if (name == "most_frequent" || name == "mode") spec.mode = Mode::MostFrequent;
    else if (name == "knn") spec.mode = Mode::Knn;
    else throw ConfigError("unknown imputation mode: " + name);
    return spec;
  }

  json to_json() const { return json{{"mode", name()}, {"k", k}}; }
  static ImputationSpec from_json(const json& j) {
    return from_name(j.at("mode").get<std::string>(), j.value("k", 5));
  }
};

struct CascadeConfig {
  std::vector<LatentFactor> factors;
  std::map<LatentFactor, LearnerConfig> level1;
  LearnerConfig level2;
  Augmentation augmentation = Augmentation::LabelsAndProbabilities;
  ImputationSpec imputation;
  std::optional<Phase> phase;
  double threshold = 0.5;

  void check() const {
    if (factors.empty()) throw ConfigError("cascade: at least one latent factor is required");
    for (std::size_t i = 0; i < factors.size(); ++i) {
      for (std::size_t j = i + 1; j < factors.size(); ++j) {
        if (factors[i] == factors[j]) throw ConfigError("cascade: duplicate latent factor");
      }
      if (!level1.count(factors[i])) {
        throw ConfigError("cascade: no learner config for factor " + factor_id(factors[i]));
      }
    }
    if (threshold < 0.0 || threshold > 1.0) {
      throw ConfigError("cascade: decision threshold must be in [0, 1]");
    }
  }

  json to_json() const {
    json factors_json = json::array();
    for (LatentFactor f : factors) factors_json.push_back(factor_id(f));
    json level1_json = json::object();
    for (const auto& [f, cfg] : level1) level1_json[factor_id(f)] = cfg.to_json();
    json j{{"factors", factors_json},
           {"level1", level1_json},
           {"level2", level2.to_json()},
           {"augmentation", augmentation_name(augmentation)},
           {"imputation", imputation.to_json()},
           {"threshold", threshold}};
    j["phase"] = phase.has_value() ? json(phase_name(*phase)) : json(nullptr);
    return j;
  }

  static CascadeConfig from_json(const json& j) {
    CascadeConfig c;
    for (const auto& f : j.at("factors")) c.factors.push_back(factor_from_id(f.get<std::string>()));
    for (const auto& [key, cfg] : j.at("level1").items()) {
      c.level1[factor_from_id(key)] = LearnerConfig::from_json(cfg);
    }
    c.level2 = LearnerConfig::from_json(j.at("level2"));
    c.augmentation = augmentation_from_name(j.at("augmentation").get<std::string>());
    c.imputation = ImputationSpec::from_json(j.at("imputation"));
    if (j.contains("phase") && !j.at("phase").is_null()) {
      c.phase = phase_from_name(j.at("phase").get<std::string>());
    }
    c.threshold = j.value("threshold", 0.5);
    c.check();
    return c;
  }

  std::uint64_t digest() const { return fnv1a64(to_json().dump()); }
};

// Convenience: same Level-1 learner settings for every factor; per-factor
// class counts are fixed up at train time.
inline CascadeConfig make_cascade_config(const std::vector<LatentFactor>& factors,
                                         const LearnerConfig& level1_template,
                                         const LearnerConfig& level2) {
  CascadeConfig config;
  config.factors = factors;
  for (LatentFactor f : factors) config.level1[f] = level1_template;
  config.level2 = level2;
  return config;
}

struct LatentPredictions {
  std::vector<int> cls;                      // per row
  std::vector<std::vector<double>> proba;    // per row, per class
};

struct CascadePredictions {
  std::vector<LatentFactor> factors;
  std::map<LatentFactor, LatentPredictions> latent;
  std::vector<double> p_op;
  std::vector<int> predicted;  // 1 iff p_op >= threshold
};

inline std::vector<std::string> augmented_feature_names(const std::vector<std::string>& base,
                                                        const std::vector<LatentFactor>& factors,
                                                        Augmentation mode) {
  std::vector<std::string> names = base;
  for (LatentFactor f : factors) {
    const LatentTargetSpec& spec = target_spec(f);
    if (mode != Augmentation::ProbabilitiesOnly) {
      names.push_back("l1::" + factor_id(f) + "::class");
    }
    if (mode != Augmentation::LabelsOnly) {
      for (const auto& label : spec.class_labels) {
        names.push_back("l1::" + factor_id(f) + "::p::" + label);
      }
    }
  }
  return names;
}

inline FeatureMatrix augment_features(const FeatureMatrix& base,
                                      const std::vector<LatentFactor>& factors, Augmentation mode,
                                      const std::map<LatentFactor, LatentPredictions>& preds) {
  FeatureMatrix out = base;
  for (LatentFactor f : factors) {
    const LatentTargetSpec& spec = target_spec(f);
    const LatentPredictions& p = preds.at(f);
    if (p.cls.size() != base.n_rows) throw ValidationError("augment: prediction rows misaligned");
    if (mode != Augmentation::ProbabilitiesOnly) {
      FeatureColumn col;
      col.name = "l1::" + factor_id(f) + "::class";
      col.numeric = false;
      col.n_levels = spec.n_classes();
      col.cat.assign(p.cls.begin(), p.cls.end());
      col.missing.assign(base.n_rows, 0);
      out.cols.push_back(std::move(col));
    }
    if (mode != Augmentation::LabelsOnly) {
      for (int k = 0; k < spec.n_classes(); ++k) {
        FeatureColumn col;
        col.name = "l1::" + factor_id(f) + "::p::" + spec.class_labels[static_cast<std::size_t>(k)];
        col.numeric = true;
        col.num.resize(base.n_rows);
        for (std::size_t r = 0; r < base.n_rows; ++r) {
          col.num[r] = p.proba[r][static_cast<std::size_t>(k)];
        }
        col.missing.assign(base.n_rows, 0);
        out.cols.push_back(std::move(col));
      }
    }
  }
  return out;
}

struct TrainedCascade {
  static constexpr int kFormatVersion = 1;

  CascadeConfig config;
  std::uint64_t schema_fingerprint = 0;
  std::vector<std::string> base_feature_names;
  std::vector<std::string> augmented_names;
  std::map<LatentFactor, AnyModel> level1;
  AnyModel level2;
  std::optional<FittedImputer> imputer;
  std::uint64_t split_fingerprint = 0;
  std::map<LatentFactor, std::vector<std::uint32_t>> l1_fit_rows;
  std::vector<std::uint32_t> l2_fit_rows;
  std::vector<std::uint32_t> l2_eval_rows;
  std::string l2_metric_convention = "l1valid_holdout20";
  // Wall-clock training time; lives outside the artifact so reruns are
  // byte-identical.
  long long trained_at_unix = 0;

  std::uint64_t l1_fit_digest() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [f, rows] : l1_fit_rows) {
      h = fnv1a64(factor_id(f), h);
      h = fnv1a64(rows.data(), rows.size() * sizeof(std::uint32_t), h);
    }
    return h;
  }

  std::uint64_t l2_fit_digest() const {
    return fnv1a64(l2_fit_rows.data(), l2_fit_rows.size() * sizeof(std::uint32_t));
  }

  json to_json() const {
    json level1_json = json::object();
    for (const auto& [f, model] : level1) level1_json[factor_id(f)] = model.to_json();
    json l1_rows = json::object();
    for (const auto& [f, rows] : l1_fit_rows) l1_rows[factor_id(f)] = rows;
    return json{{"format_version", kFormatVersion},
                {"config", config.to_json()},
                {"schema_fingerprint", hex64(schema_fingerprint)},
                {"base_feature_names", base_feature_names},
                {"augmented_feature_names", augmented_names},
                {"level1", level1_json},
                {"level2", level2.to_json()},
                {"imputer", imputer.has_value() ? imputer->to_json() : json(nullptr)},
                {"split_fingerprint", hex64(split_fingerprint)},
                {"l1_fit_rows", l1_rows},
                {"l2_fit_rows", l2_fit_rows},
                {"l2_eval_rows", l2_eval_rows},
                {"run_metadata",
                 {{"l2_metric_convention", l2_metric_convention},
                  {"imputation_arm", config.imputation.name()},
                  {"l1_fit_digest", hex64(l1_fit_digest())},
                  {"l2_fit_digest", hex64(l2_fit_digest())}}}};
  }

  static TrainedCascade from_json(const json& j) {
    if (!j.contains("format_version")) throw ParseError("cascade artifact: missing format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw ParseError("cascade artifact: format_version " + std::to_string(version) +
                       " unsupported, expected " + std::to_string(kFormatVersion));
    }
    TrainedCascade tc;
    tc.config = CascadeConfig::from_json(j.at("config"));
    tc.schema_fingerprint = std::stoull(j.at("schema_fingerprint").get<std::string>(), nullptr, 16);
    tc.base_feature_names = j.at("base_feature_names").get<std::vector<std::string>>();
    tc.augmented_names = j.at("augmented_feature_names").get<std::vector<std::string>>();
    for (const auto& [key, model] : j.at("level1").items()) {
      tc.level1.emplace(factor_from_id(key), AnyModel::from_json(model));
    }
    tc.level2 = AnyModel::from_json(j.at("level2"));
    if (!j.at("imputer").is_null()) tc.imputer = FittedImputer::from_json(j.at("imputer"));
    tc.split_fingerprint = std::stoull(j.at("split_fingerprint").get<std::string>(), nullptr, 16);
    for (const auto& [key, rows] : j.at("l1_fit_rows").items()) {
      tc.l1_fit_rows[factor_from_id(key)] = rows.get<std::vector<std::uint32_t>>();
    }
    tc.l2_fit_rows = j.at("l2_fit_rows").get<std::vector<std::uint32_t>>();
    tc.l2_eval_rows = j.at("l2_eval_rows").get<std::vector<std::uint32_t>>();
    tc.l2_metric_convention =
        j.at("run_metadata").value("l2_metric_convention", std::string("l1valid_holdout20"));
    return tc;
  }
};

struct CascadeTrainResult {
  TrainedCascade cascade;
  std::map<LatentFactor, ClassificationReport> level1_validation;  // on L1Valid, observed targets
  ClassificationReport level2_validation;                          // on the L1Valid holdout
};

namespace detail {

inline std::vector<std::size_t> to_size_t(const std::vector<std::uint32_t>& rows) {
  return std::vector<std::size_t>(rows.begin(), rows.end());
}

// Seeded stratified 80/20 split of the Level-2 candidate rows.
inline void holdout_split(const std::vector<std::uint32_t>& candidates,
                          const std::vector<int>& labels, std::uint64_t seed,
                          std::vector<std::uint32_t>& fit, std::vector<std::uint32_t>& eval) {
  std::map<int, std::vector<std::uint32_t>> by_class;
  for (std::size_t i = 0; i < candidates.size(); ++i) by_class[labels[i]].push_back(candidates[i]);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& [cls, rows] : by_class) {
    rng.shuffle(rows);
    std::size_t n_eval = rows.size() / 5;
    if (rows.size() >= 10 && n_eval == 0) n_eval = 1;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_eval ? eval : fit).push_back(rows[i]);
    }
  }
  std::sort(fit.begin(), fit.end());
  std::sort(eval.begin(), eval.end());
}

}  // namespace detail

inline CascadeTrainResult train_cascade(const TabularDataset& ds, const FeatureSchema& schema,
                                        const CascadeConfig& config, const SplitPlan& plan,
                                        int n_threads = 1) {
  config.check();
  {
    const auto violations = verify_no_leakage(plan, ds);
    if (!violations.empty()) {
      throw LeakageError("train_cascade: split plan failed leakage check: " + violations.front());
    }
  }

  CascadeTrainResult result;
  TrainedCascade& tc = result.cascade;
  tc.config = config;
  tc.schema_fingerprint = ds.schema_fingerprint;
  tc.split_fingerprint = plan.fingerprint();

  // Imputer sees L1Train features only; applied everywhere afterward.
  TabularDataset working;
  const TabularDataset* data = &ds;
  if (config.imputation.mode != ImputationSpec::Mode::None) {
    const ImputeStrategy strategy = config.imputation.mode == ImputationSpec::Mode::Mean
                                        ? ImputeStrategy::Mean
                                    : config.imputation.mode == ImputationSpec::Mode::MostFrequent
                                        ? ImputeStrategy::MostFrequent
                                        : ImputeStrategy::Knn;
    const TabularDataset fit_slice = select_rows(ds, detail::to_size_t(plan.rows(Part::L1Train)));
    tc.imputer = fit_imputer(strategy, fit_slice, schema,
                             strategy == ImputeStrategy::Knn ? std::optional<int>(config.imputation.k)
                                                             : std::nullopt);
    working = apply_imputer(*tc.imputer, ds, schema);
    data = &working;
  }

  const FeatureMatrix X_all = to_feature_matrix(*data, schema);
  tc.base_feature_names = X_all.names();

  // Level 1: per factor, fit on L1Train rows with an observed target.
  std::map<LatentFactor, LatentPredictions> latent_all;
  for (LatentFactor f : config.factors) {
    const int t = schema.latent_index(f);
    if (t < 0) throw ConfigError("train_cascade: schema has no target column for " + factor_id(f));
    const TargetColumn& target = ds.targets[static_cast<std::size_t>(t)];
    const LatentTargetSpec& spec = target_spec(f);

    std::vector<std::uint32_t> fit_rows;
    std::vector<int> labels;
    for (std::uint32_t r : plan.rows(Part::L1Train)) {
      if (target.missing[r]) continue;
      fit_rows.push_back(r);
      labels.push_back(target.cls[r]);
    }
    int distinct = 0;
    {
      std::vector<bool> seen(static_cast<std::size_t>(spec.n_classes()), false);
      for (int y : labels) {
        if (!seen[static_cast<std::size_t>(y)]) {
          seen[static_cast<std::size_t>(y)] = true;
          ++distinct;
        }
      }
    }
    if (distinct < 2) {
      throw ValidationError("train_cascade: factor " + factor_id(f) +
                            " has fewer than 2 observed classes in L1Train");
    }
    LearnerConfig l1_config = config.level1.at(f);
    l1_config.n_classes = spec.n_classes();
    const FeatureMatrix X_fit = select_rows(X_all, detail::to_size_t(fit_rows));
    AnyModel model = train_model(l1_config, X_fit, labels, n_threads);

    LatentPredictions preds;
    preds.proba = model.predict_proba(X_all);
    preds.cls = argmax_classes(preds.proba);
    latent_all.emplace(f, std::move(preds));
    tc.level1.emplace(f, std::move(model));
    tc.l1_fit_rows.emplace(f, std::move(fit_rows));
  }

  // Level-1 validation on L1Valid, out of sample by construction.
  for (LatentFactor f : config.factors) {
    const TargetColumn& target = ds.targets[static_cast<std::size_t>(schema.latent_index(f))];
    std::vector<int> pred, actual;
    for (std::uint32_t r : plan.rows(Part::L1Valid)) {
      if (target.missing[r]) continue;
      pred.push_back(latent_all.at(f).cls[r]);
      actual.push_back(target.cls[r]);
    }
    if (!pred.empty()) {
      result.level1_validation.emplace(
          f, compute_report(pred, actual, target_spec(f).n_classes()));
    }
  }

  const FeatureMatrix A_all = augment_features(X_all, config.factors, config.augmentation, latent_all);
  tc.augmented_names = A_all.names();

  // Level 2 on L1Valid rows with an observed success label.
  std::vector<std::uint32_t> candidates;
  std::vector<int> candidate_labels;
  for (std::uint32_t r : plan.rows(Part::L1Valid)) {
    if (ds.success_missing[r]) continue;
    candidates.push_back(r);
    candidate_labels.push_back(ds.success[r]);
  }
  detail::holdout_split(candidates, candidate_labels, config.level2.seed, tc.l2_fit_rows,
                        tc.l2_eval_rows);

  std::vector<int> fit_labels;
  for (std::uint32_t r : tc.l2_fit_rows) fit_labels.push_back(ds.success[r]);
  const bool two_class = std::adjacent_find(fit_labels.begin(), fit_labels.end(),
                                            std::not_equal_to<>()) != fit_labels.end();
  if (!two_class) {
    throw ValidationError("train_cascade: success label is single-class in L1Valid");
  }
  LearnerConfig l2_config = config.level2;
  l2_config.n_classes = 2;
  tc.level2 = train_model(l2_config, select_rows(A_all, detail::to_size_t(tc.l2_fit_rows)),
                          fit_labels, n_threads);

  {
    std::vector<int> pred, actual;
    const FeatureMatrix A_eval = select_rows(A_all, detail::to_size_t(tc.l2_eval_rows));
    const auto proba = tc.level2.predict_proba(A_eval);
    for (std::size_t i = 0; i < tc.l2_eval_rows.size(); ++i) {
      pred.push_back(proba[i][1] >= config.threshold ? 1 : 0);
      actual.push_back(ds.success[tc.l2_eval_rows[i]]);
    }
    if (!pred.empty()) result.level2_validation = compute_report(pred, actual, 2);
  }

  tc.trained_at_unix = static_cast<long long>(std::time(nullptr));
  return result;
}

// End-to-end inference. Latent targets and success labels in the input are
// ignored; the feature layout must match training.
inline CascadePredictions predict(const TrainedCascade& tc, const TabularDataset& ds,
                                  const FeatureSchema& schema) {
  if (ds.schema_fingerprint != tc.schema_fingerprint) {
    throw ValidationError("cascade predict: dataset schema does not match the artifact");
  }
  TabularDataset working;
  const TabularDataset* data = &ds;
  if (tc.imputer.has_value()) {
    working = apply_imputer(*tc.imputer, ds, schema);
    data = &working;
  }
  const FeatureMatrix X = to_feature_matrix(*data, schema);

  CascadePredictions out;
  out.factors = tc.config.factors;
  for (LatentFactor f : tc.config.factors) {
    LatentPredictions preds;
    preds.proba = tc.level1.at(f).predict_proba(X);
    preds.cls = argmax_classes(preds.proba);
    out.latent.emplace(f, std::move(preds));
  }
  const FeatureMatrix A = augment_features(X, tc.config.factors, tc.config.augmentation, out.latent);
  const auto proba = tc.level2.predict_proba(A);
  out.p_op.resize(ds.n_rows);
  out.predicted.resize(ds.n_rows);
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    out.p_op[r] = proba[r][1];
    out.predicted[r] = proba[r][1] >= tc.config.threshold ? 1 : 0;
  }
  return out;
}

inline void save_artifact(const TrainedCascade& tc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cascade artifact: cannot write " + path);
  out << tc.to_json().dump(2) << '\n';
  if (!out) throw IoError("cascade artifact: write failed for " + path);
}

inline TrainedCascade load_artifact(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cascade artifact: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("cascade artifact: " + path + ": " + e.what());
  }
  return TrainedCascade::from_json(j);
}

}  // namespace trialrisk
