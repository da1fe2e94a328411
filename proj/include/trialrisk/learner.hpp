#pragma once

// Shared learner machinery: configuration, the typed feature matrix both
// learner families train on, and histogram binning (equal-frequency
// quantile bins for numeric features, one bin per level for categorical).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/dataset.hpp"

namespace trialrisk {

enum class LearnerKind { Gbdt, Ebm };

inline const std::string& learner_kind_name(LearnerKind k) {
  static const std::array<std::string, 2> names = {"gbdt", "ebm"};
  return names[static_cast<std::size_t>(k)];
}

inline LearnerKind learner_kind_from_name(const std::string& name) {
  if (name == "gbdt") return LearnerKind::Gbdt;
  if (name == "ebm") return LearnerKind::Ebm;
  throw ConfigError("unknown learner kind: " + name);
}

enum class MissingMode { Native, Reject };

struct LearnerConfig {
  LearnerKind kind = LearnerKind::Gbdt;
  int n_rounds = 200;
  double learning_rate = 0.1;
  int max_depth = 5;  // ignored by ebm (stumps per feature)
  int n_bins = 64;
  double l2_lambda = 1.0;
  double gain_gamma = 0.0;
  double min_child_weight = 1.0;
  int n_classes = 2;
  std::uint64_t seed = 0;
  MissingMode missing_mode = MissingMode::Native;

  void check() const {
    if (n_rounds < 0) throw ConfigError("learner: n_rounds must be >= 0");
    if (learning_rate <= 0.0 || learning_rate > 1.0) {
      throw ConfigError("learner: learning_rate must be in (0, 1]");
    }
    if (max_depth < 1) throw ConfigError("learner: max_depth must be positive");
    if (n_bins < 2) throw ConfigError("learner: n_bins must be >= 2");
    if (l2_lambda < 0.0) throw ConfigError("learner: l2_lambda must be >= 0");
    if (gain_gamma < 0.0) throw ConfigError("learner: gain_gamma must be >= 0");
    if (min_child_weight < 0.0) throw ConfigError("learner: min_child_weight must be >= 0");
    if (n_classes < 2) throw ConfigError("learner: n_classes must be >= 2");
  }

  json to_json() const {
    return json{{"kind", learner_kind_name(kind)},
                {"n_rounds", n_rounds},
                {"learning_rate", learning_rate},
                {"max_depth", max_depth},
                {"n_bins", n_bins},
                {"l2_lambda", l2_lambda},
                {"gain_gamma", gain_gamma},
                {"min_child_weight", min_child_weight},
                {"n_classes", n_classes},
                {"seed", seed},
                {"missing_mode", missing_mode == MissingMode::Native ? "native" : "reject"}};
  }

  static LearnerConfig from_json(const json& j) {
    LearnerConfig c;
    c.kind = learner_kind_from_name(j.at("kind").get<std::string>());
    c.n_rounds = j.at("n_rounds").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.max_depth = j.at("max_depth").get<int>();
    c.n_bins = j.at("n_bins").get<int>();
    c.l2_lambda = j.at("l2_lambda").get<double>();
    c.gain_gamma = j.at("gain_gamma").get<double>();
    c.min_child_weight = j.at("min_child_weight").get<double>();
    c.n_classes = j.at("n_classes").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.missing_mode = j.at("missing_mode").get<std::string>() == "reject" ? MissingMode::Reject
                                                                         : MissingMode::Native;
    c.check();
    return c;
  }
};

struct FeatureColumn {
  std::string name;
  bool numeric = true;
  int n_levels = 0;  // categorical only
  std::vector<double> num;
  std::vector<std::int32_t> cat;
  std::vector<std::uint8_t> missing;
};

struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::vector<FeatureColumn> cols;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(cols.size());
    for (const auto& c : cols) out.push_back(c.name);
    return out;
  }

  bool has_missing() const {
    for (const auto& c : cols) {
      for (std::uint8_t m : c.missing) {
        if (m) return true;
      }
    }
    return false;
  }
};

// Boolean features become two-level categoricals; level-set splits handle
// them the same way.
inline FeatureMatrix to_feature_matrix(const TabularDataset& ds, const FeatureSchema& schema) {
  FeatureMatrix X;
  X.n_rows = ds.n_rows;
  X.cols.reserve(schema.features.size());
  for (std::size_t c = 0; c < schema.features.size(); ++c) {
    const FeatureSpec& spec = schema.features[c];
    const Column& col = ds.columns[c];
    FeatureColumn fc;
    fc.name = spec.name;
    fc.missing = col.missing;
    if (spec.kind == FeatureKind::Numeric) {
      fc.numeric = true;
      fc.num = col.num;
    } else {
      fc.numeric = false;
      fc.n_levels = spec.kind == FeatureKind::Boolean ? 2 : static_cast<int>(spec.levels.size());
      fc.cat = col.cat;
    }
    X.cols.push_back(std::move(fc));
  }
  return X;
}

inline FeatureMatrix select_rows(const FeatureMatrix& X, const std::vector<std::size_t>& rows) {
  FeatureMatrix out;
  out.n_rows = rows.size();
  out.cols.resize(X.cols.size());
  for (std::size_t c = 0; c < X.cols.size(); ++c) {
    const FeatureColumn& src = X.cols[c];
    FeatureColumn& dst = out.cols[c];
    dst.name = src.name;
    dst.numeric = src.numeric;
    dst.n_levels = src.n_levels;
    dst.missing.reserve(rows.size());
    for (std::size_t r : rows) {
      dst.missing.push_back(src.missing[r]);
      if (src.numeric) dst.num.push_back(src.num[r]);
      else dst.cat.push_back(src.cat[r]);
    }
  }
  return out;
}

// Bin layout per feature. Numeric: ascending edges, bin b covers
// (edges[b-1], edges[b]] with the last bin open above; a value v lands in
// the first bin whose edge is >= v. Categorical: bin = level code.
struct FeatureBins {
  bool numeric = true;
  std::vector<double> edges;
  int n_bins = 1;

  int bin_of_value(double v) const {
    const auto it = std::lower_bound(edges.begin(), edges.end(), v);
    return static_cast<int>(it - edges.begin());
  }

  json to_json() const {
    return json{{"numeric", numeric}, {"edges", edges}, {"n_bins", n_bins}};
  }
  static FeatureBins from_json(const json& j) {
    FeatureBins b;
    b.numeric = j.at("numeric").get<bool>();
    b.edges = j.at("edges").get<std::vector<double>>();
    b.n_bins = j.at("n_bins").get<int>();
    return b;
  }
};

inline FeatureBins build_bins(const FeatureColumn& col, int max_bins) {
  FeatureBins bins;
  bins.numeric = col.numeric;
  if (!col.numeric) {
    bins.n_bins = std::max(col.n_levels, 1);
    return bins;
  }
  std::vector<double> observed;
  observed.reserve(col.num.size());
  for (std::size_t r = 0; r < col.num.size(); ++r) {
    if (!col.missing[r]) observed.push_back(col.num[r]);
  }
  std::sort(observed.begin(), observed.end());
  if (observed.empty()) {
    bins.n_bins = 1;
    return bins;
  }
  // Equal-frequency quantile edges over the training values; duplicates
  // collapse. The maximum value never becomes an edge so the top bin is
  // non-empty.
  for (int i = 1; i < max_bins; ++i) {
    const std::size_t pos = observed.size() * static_cast<std::size_t>(i) /
                            static_cast<std::size_t>(max_bins);
    const double edge = observed[std::min(pos, observed.size() - 1)];
    if (edge >= observed.back()) continue;
    if (bins.edges.empty() || edge > bins.edges.back()) bins.edges.push_back(edge);
  }
  bins.n_bins = static_cast<int>(bins.edges.size()) + 1;
  return bins;
}

// Per-row bin index; -1 marks Missing.
inline std::vector<std::int32_t> bin_column(const FeatureColumn& col, const FeatureBins& bins) {
  std::vector<std::int32_t> out(col.missing.size(), -1);
  for (std::size_t r = 0; r < col.missing.size(); ++r) {
    if (col.missing[r]) continue;
    out[r] = col.numeric ? bins.bin_of_value(col.num[r]) : col.cat[r];
  }
  return out;
}

// Raw (unscaled) optimal leaf value for summed gradient statistics.
inline double leaf_weight(double grad_sum, double hess_sum, double l2_lambda) {
  return -grad_sum / (hess_sum + l2_lambda);
}

// Second-order split gain for fixed child statistics.
inline double split_gain(double g_left, double h_left, double g_right, double h_right,
                         double l2_lambda, double gain_gamma) {
  const double g_total = g_left + g_right;
  const double h_total = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + l2_lambda) +
                g_right * g_right / (h_right + l2_lambda) -
                g_total * g_total / (h_total + l2_lambda)) -
         gain_gamma;
}

namespace detail {

inline void softmax_inplace(std::vector<double>& scores) {
  double max_score = scores[0];
  for (double s : scores) max_score = std::max(max_score, s);
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - max_score);
    sum += s;
  }
  for (double& s : scores) s /= sum;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Log-odds per class from smoothed label priors; the zero-round model then
// predicts the class mix of the training data.
inline std::vector<double> prior_base_scores(const std::vector<int>& labels, int n_classes) {
  std::vector<double> count(static_cast<std::size_t>(n_classes), 0.0);
  for (int y : labels) ++count[static_cast<std::size_t>(y)];
  const double total = static_cast<double>(labels.size());
  if (n_classes == 2) {
    const double p = std::clamp(count[1] / total, 1e-6, 1.0 - 1e-6);
    return {std::log(p / (1.0 - p))};
  }
  std::vector<double> base(static_cast<std::size_t>(n_classes));
  for (int k = 0; k < n_classes; ++k) {
    const double p = std::clamp(count[static_cast<std::size_t>(k)] / total, 1e-6, 1.0);
    base[static_cast<std::size_t>(k)] = std::log(p);
  }
  return base;
}

inline void check_training_labels(const LearnerConfig& config, const FeatureMatrix& X,
                                  const std::vector<int>& labels) {
  if (labels.size() != X.n_rows) throw ValidationError("train: labels/features length mismatch");
  if (labels.empty()) throw ValidationError("train: empty training set");
  std::vector<bool> seen(static_cast<std::size_t>(config.n_classes), false);
  int distinct = 0;
  for (int y : labels) {
    if (y < 0 || y >= config.n_classes) {
      throw ValidationError("train: label " + std::to_string(y) + " outside [0, n_classes)");
    }
    if (!seen[static_cast<std::size_t>(y)]) {
      seen[static_cast<std::size_t>(y)] = true;
      ++distinct;
    }
  }
  if (distinct < 2) throw ValidationError("train: labels contain a single class");
  if (config.missing_mode == MissingMode::Reject && X.has_missing()) {
    throw ValidationError("train: missing feature cells with missing_mode=reject");
  }
}

inline double mean_log_loss(const std::vector<std::vector<double>>& proba,
                            const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(proba[i][static_cast<std::size_t>(labels[i])], 1e-15, 1.0);
    loss -= std::log(p);
  }
  return loss / static_cast<double>(labels.size());
}

}  // namespace detail

}  // namespace trialrisk
