#pragma once

// Hyperparameter selection by stratified k-fold cross-validation: the
// config with the best mean macro-F1 wins, ties broken by fewer rounds and
// then by position in the search space.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trialrisk/common.hpp"
#include "trialrisk/evaluation.hpp"
#include "trialrisk/model.hpp"

namespace trialrisk {

struct TuneResult {
  LearnerConfig best;
  std::size_t best_index = 0;
  // fold_scores[config][fold]; skipped folds carry no entry.
  std::vector<std::vector<double>> fold_scores;
  std::vector<double> mean_scores;
  std::vector<std::string> warnings;
};

// Seeded stratified fold ids: rows of each class are shuffled and dealt
// round-robin, so every fold tracks the global class mix.
inline std::vector<int> stratified_fold_ids(const std::vector<int>& labels, int n_folds,
                                            std::uint64_t seed) {
  std::map<int, std::vector<std::uint32_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<std::uint32_t>(i));
  }
  std::vector<int> fold(labels.size(), 0);
  Rng rng(seed);
  int next = 0;
  for (auto& [cls, rows] : by_class) {
    rng.shuffle(rows);
    for (std::uint32_t r : rows) {
      fold[r] = next;
      next = (next + 1) % n_folds;
    }
  }
  return fold;
}

inline TuneResult tune(const std::vector<LearnerConfig>& space, const FeatureMatrix& X,
                       const std::vector<int>& labels, int n_folds, std::uint64_t seed,
                       int n_threads = 1) {
  if (space.empty()) throw ConfigError("tune: empty config space");
  if (n_folds < 2) throw ConfigError("tune: n_folds must be >= 2");
  if (labels.size() != X.n_rows) throw ValidationError("tune: labels/features length mismatch");

  const std::vector<int> fold_of = stratified_fold_ids(labels, n_folds, seed);

  TuneResult result;
  result.fold_scores.resize(space.size());
  result.mean_scores.assign(space.size(), 0.0);

  for (std::size_t c = 0; c < space.size(); ++c) {
    space[c].check();
    for (int fold = 0; fold < n_folds; ++fold) {
      std::vector<std::size_t> train_rows, eval_rows;
      std::vector<int> train_labels, eval_labels;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (fold_of[i] == fold) {
          eval_rows.push_back(i);
          eval_labels.push_back(labels[i]);
        } else {
          train_rows.push_back(i);
          train_labels.push_back(labels[i]);
        }
      }
      const bool trainable = std::adjacent_find(train_labels.begin(), train_labels.end(),
                                                std::not_equal_to<>()) != train_labels.end();
      if (!trainable || eval_rows.empty()) {
        result.warnings.push_back("config " + std::to_string(c) + ": fold " +
                                  std::to_string(fold) + " skipped (single class)");
        continue;
      }
      const FeatureMatrix X_train = select_rows(X, train_rows);
      const FeatureMatrix X_eval = select_rows(X, eval_rows);
      AnyModel model = train_model(space[c], X_train, train_labels, n_threads);
      const std::vector<int> predicted = argmax_classes(model.predict_proba(X_eval));
      const ClassificationReport rep =
          compute_report(predicted, eval_labels, space[c].n_classes);
      result.fold_scores[c].push_back(rep.macro_f1);
    }
    if (result.fold_scores[c].empty()) continue;
    double sum = 0.0;
    for (double s : result.fold_scores[c]) sum += s;
    result.mean_scores[c] = sum / static_cast<double>(result.fold_scores[c].size());
  }

  bool any_scored = false;
  std::size_t best = 0;
  for (std::size_t c = 0; c < space.size(); ++c) {
    if (result.fold_scores[c].empty()) continue;
    if (!any_scored) {
      best = c;
      any_scored = true;
      continue;
    }
    const double s = result.mean_scores[c];
    const double s_best = result.mean_scores[best];
    if (s > s_best ||
        (s == s_best && (space[c].n_rounds < space[best].n_rounds))) {
      best = c;
    }
  }
  if (!any_scored) throw ValidationError("tune: every fold was skipped");
  result.best = space[best];
  result.best_index = best;
  return result;
}

}  // namespace trialrisk
