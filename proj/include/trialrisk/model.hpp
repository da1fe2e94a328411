#pragma once

// Type-erased handle over the two learner families so the cascade and the
// tuner can hold either.

#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/ebm.hpp"
#include "trialrisk/gbdt.hpp"
#include "trialrisk/learner.hpp"

namespace trialrisk {

struct AnyModel {
  std::variant<GbdtModel, EbmModel> model;

  LearnerKind kind() const {
    return std::holds_alternative<GbdtModel>(model) ? LearnerKind::Gbdt : LearnerKind::Ebm;
  }

  const LearnerConfig& config() const {
    return std::visit([](const auto& m) -> const LearnerConfig& { return m.config; }, model);
  }

  const std::vector<std::string>& feature_names() const {
    return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_names; },
                      model);
  }

  std::vector<std::vector<double>> predict_proba(const FeatureMatrix& X) const {
    return std::visit([&](const auto& m) { return m.predict_proba(X); }, model);
  }

  const std::vector<double>& training_loss() const {
    return std::visit([](const auto& m) -> const std::vector<double>& { return m.training_loss; },
                      model);
  }

  json to_json() const {
    return std::visit([](const auto& m) { return m.to_json(); }, model);
  }

  static AnyModel from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gbdt") return {GbdtModel::from_json(j)};
    if (kind == "ebm") return {EbmModel::from_json(j)};
    throw ParseError("model: unknown kind " + kind);
  }
};

inline AnyModel train_model(const LearnerConfig& config, const FeatureMatrix& X,
                            const std::vector<int>& labels, int n_threads = 1) {
  if (config.kind == LearnerKind::Gbdt) {
    return {train_gbdt(config, X, labels, {}, n_threads)};
  }
  return {train_ebm(config, X, labels, n_threads)};
}

inline std::vector<std::pair<std::string, double>> feature_importance(const AnyModel& any) {
  return std::visit([](const auto& m) { return feature_importance(m); }, any.model);
}

inline std::vector<int> argmax_classes(const std::vector<std::vector<double>>& proba) {
  std::vector<int> out(proba.size(), 0);
  for (std::size_t i = 0; i < proba.size(); ++i) {
    int best = 0;
    for (std::size_t k = 1; k < proba[i].size(); ++k) {
      if (proba[i][k] > proba[i][static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    }
    out[i] = best;
  }
  return out;
}

}  // namespace trialrisk
