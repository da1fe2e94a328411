#pragma once

// Additive model trained by cyclic boosting: every round visits features in
// fixed index order and fits a depth-1 histogram regressor (one split, two
// leaf values) to the current gradients/hessians, accumulating
// learning-rate-scaled leaf updates into that feature's shape function.
// Numeric splits scan bin boundaries, categorical splits scan
// sorted-gradient level prefixes, and the dedicated Missing bin is routed to
// whichever side gains more, so the model is total over missing data. The
// prediction is exactly intercept + sum_j shape_j(x_j) per class, before
// sigmoid/softmax.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/learner.hpp"

namespace trialrisk {

struct ShapeFunction {
  bool numeric = true;
  std::vector<double> edges;  // numeric bin edges (see FeatureBins)
  int n_bins = 1;             // value bins, excluding the Missing slot
  // values[class dim][bin]; index n_bins is the Missing bin.
  std::vector<std::vector<double>> values;
  std::vector<long long> bin_count;  // training occupancy, incl. Missing slot

  int bin_for(const FeatureColumn& col, std::size_t row) const {
    if (col.missing[row]) return n_bins;
    if (numeric) {
      const auto it = std::lower_bound(edges.begin(), edges.end(), col.num[row]);
      return static_cast<int>(it - edges.begin());
    }
    const std::int32_t lv = col.cat[row];
    return lv >= 0 && lv < n_bins ? lv : n_bins;  // unseen level -> Missing bin
  }

  json to_json() const {
    return json{{"numeric", numeric},
                {"edges", edges},
                {"n_bins", n_bins},
                {"values", values},
                {"bin_count", bin_count}};
  }
  static ShapeFunction from_json(const json& j) {
    ShapeFunction s;
    s.numeric = j.at("numeric").get<bool>();
    s.edges = j.at("edges").get<std::vector<double>>();
    s.n_bins = j.at("n_bins").get<int>();
    s.values = j.at("values").get<std::vector<std::vector<double>>>();
    s.bin_count = j.at("bin_count").get<std::vector<long long>>();
    return s;
  }
};

struct EbmModel {
  static constexpr int kFormatVersion = 1;

  LearnerConfig config;
  std::vector<std::string> feature_names;
  std::vector<double> base_score;
  std::vector<ShapeFunction> shapes;  // parallel to feature_names
  std::vector<double> training_loss;

  int score_dim() const { return config.n_classes == 2 ? 1 : config.n_classes; }

  void check_layout(const FeatureMatrix& X) const {
    if (X.cols.size() != feature_names.size()) {
      throw ValidationError("ebm predict: feature count mismatch");
    }
    for (std::size_t c = 0; c < X.cols.size(); ++c) {
      if (X.cols[c].name != feature_names[c]) {
        throw ValidationError("ebm predict: feature layout mismatch at " + X.cols[c].name);
      }
    }
  }

  std::vector<double> predict_raw_row(const FeatureMatrix& X, std::size_t row) const {
    const int dim = score_dim();
    std::vector<double> raw(base_score.begin(), base_score.end());
    for (std::size_t f = 0; f < shapes.size(); ++f) {
      const int b = shapes[f].bin_for(X.cols[f], row);
      for (int k = 0; k < dim; ++k) {
        raw[static_cast<std::size_t>(k)] += shapes[f].values[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
      }
    }
    return raw;
  }

  std::vector<std::vector<double>> predict_proba(const FeatureMatrix& X) const {
    check_layout(X);
    std::vector<std::vector<double>> proba(X.n_rows);
    for (std::size_t i = 0; i < X.n_rows; ++i) {
      std::vector<double> raw = predict_raw_row(X, i);
      if (config.n_classes == 2) {
        const double p = detail::sigmoid(raw[0]);
        proba[i] = {1.0 - p, p};
      } else {
        detail::softmax_inplace(raw);
        proba[i] = std::move(raw);
      }
    }
    return proba;
  }

  json to_json() const {
    json shape_json = json::array();
    for (const auto& s : shapes) shape_json.push_back(s.to_json());
    return json{{"format_version", kFormatVersion},
                {"kind", "ebm"},
                {"config", config.to_json()},
                {"feature_names", feature_names},
                {"base_scores", base_score},
                {"shapes", shape_json},
                {"training_loss", training_loss}};
  }

  static EbmModel from_json(const json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw ParseError("ebm model: format_version " + std::to_string(version) +
                       " unsupported, expected " + std::to_string(kFormatVersion));
    }
    if (j.at("kind").get<std::string>() != "ebm") throw ParseError("ebm model: wrong kind");
    EbmModel m;
    m.config = LearnerConfig::from_json(j.at("config"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.base_score = j.at("base_scores").get<std::vector<double>>();
    for (const auto& s : j.at("shapes")) m.shapes.push_back(ShapeFunction::from_json(s));
    m.training_loss = j.at("training_loss").get<std::vector<double>>();
    return m;
  }
};

namespace detail {

struct EbmSlot {
  double g = 0.0;
  double h = 0.0;
  long long c = 0;
};

// Depth-1 fit over one feature's histogram (value bins + trailing Missing
// slot). On success fills per-slot leaf updates and returns true.
inline bool fit_stump(const LearnerConfig& cfg, const ShapeFunction& shape,
                      const std::vector<EbmSlot>& hist, std::vector<double>& updates) {
  const std::size_t n_bins = static_cast<std::size_t>(shape.n_bins);
  const EbmSlot& miss = hist[n_bins];
  double g_total = miss.g, h_total = miss.h;
  long long c_total = miss.c;
  for (std::size_t b = 0; b < n_bins; ++b) {
    g_total += hist[b].g;
    h_total += hist[b].h;
    c_total += hist[b].c;
  }

  // candidate left sets are boundary prefixes (numeric) or sorted-gradient
  // level prefixes (categorical)
  std::vector<std::size_t> order(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) order[b] = b;
  if (!shape.numeric) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double wa = hist[a].g / (hist[a].h + cfg.l2_lambda);
      const double wb = hist[b].g / (hist[b].h + cfg.l2_lambda);
      if (wa != wb) return wa < wb;
      return a < b;
    });
  }

  double best_gain = 0.0;
  std::size_t best_prefix = 0;
  bool best_missing_left = true;
  bool found = false;
  double g_prefix = 0.0, h_prefix = 0.0;
  long long c_prefix = 0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    g_prefix += hist[order[k]].g;
    h_prefix += hist[order[k]].h;
    c_prefix += hist[order[k]].c;
    for (const bool missing_left : {true, false}) {
      const double gl = g_prefix + (missing_left ? miss.g : 0.0);
      const double hl = h_prefix + (missing_left ? miss.h : 0.0);
      const long long cl = c_prefix + (missing_left ? miss.c : 0);
      const double gr = g_total - gl;
      const double hr = h_total - hl;
      const long long cr = c_total - cl;
      if (cl < 1 || cr < 1) continue;
      if (hl < cfg.min_child_weight || hr < cfg.min_child_weight) continue;
      const double gain = split_gain(gl, hl, gr, hr, cfg.l2_lambda, cfg.gain_gamma);
      if (gain <= 0.0) continue;
      if (found && gain <= best_gain) continue;
      best_gain = gain;
      best_prefix = k;
      best_missing_left = missing_left;
      found = true;
    }
  }
  if (!found) return false;

  double gl = 0.0, hl = 0.0;
  std::vector<std::uint8_t> goes_left(n_bins + 1, 0);
  for (std::size_t k = 0; k <= best_prefix; ++k) {
    goes_left[order[k]] = 1;
    gl += hist[order[k]].g;
    hl += hist[order[k]].h;
  }
  if (best_missing_left) {
    goes_left[n_bins] = 1;
    gl += miss.g;
    hl += miss.h;
  }
  const double w_left = cfg.learning_rate * leaf_weight(gl, hl, cfg.l2_lambda);
  const double w_right = cfg.learning_rate * leaf_weight(g_total - gl, h_total - hl, cfg.l2_lambda);
  for (std::size_t b = 0; b <= n_bins; ++b) updates[b] = goes_left[b] ? w_left : w_right;
  return true;
}

}  // namespace detail

inline EbmModel train_ebm(const LearnerConfig& config, const FeatureMatrix& X,
                          const std::vector<int>& labels, int n_threads = 1) {
  config.check();
  detail::check_training_labels(config, X, labels);

  EbmModel model;
  model.config = config;
  model.config.kind = LearnerKind::Ebm;
  model.feature_names = X.names();
  model.base_score = detail::prior_base_scores(labels, config.n_classes);

  const int dim = model.score_dim();
  const std::size_t n = X.n_rows;

  // Bin layout reuses the GBDT quantile binning; each shape gets one extra
  // Missing slot.
  std::vector<std::vector<std::int32_t>> binned(X.cols.size());
  model.shapes.resize(X.cols.size());
  for (std::size_t f = 0; f < X.cols.size(); ++f) {
    const FeatureBins bins = build_bins(X.cols[f], config.n_bins);
    ShapeFunction& shape = model.shapes[f];
    shape.numeric = bins.numeric;
    shape.edges = bins.edges;
    shape.n_bins = bins.n_bins;
    shape.values.assign(static_cast<std::size_t>(dim),
                        std::vector<double>(static_cast<std::size_t>(bins.n_bins) + 1, 0.0));
    shape.bin_count.assign(static_cast<std::size_t>(bins.n_bins) + 1, 0);
    binned[f] = bin_column(X.cols[f], bins);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t b = binned[f][i] < 0 ? bins.n_bins : binned[f][i];
      ++shape.bin_count[static_cast<std::size_t>(b)];
    }
  }

  std::vector<std::vector<double>> raw(static_cast<std::size_t>(dim), std::vector<double>(n));
  for (int k = 0; k < dim; ++k) {
    std::fill(raw[static_cast<std::size_t>(k)].begin(), raw[static_cast<std::size_t>(k)].end(),
              model.base_score[static_cast<std::size_t>(k)]);
  }

  std::vector<std::vector<double>> proba(n, std::vector<double>(static_cast<std::size_t>(config.n_classes)));
  auto refresh_proba = [&] {
    parallel_for_index(n, n_threads, [&](std::size_t i) {
      if (config.n_classes == 2) {
        const double p = detail::sigmoid(raw[0][i]);
        proba[i][0] = 1.0 - p;
        proba[i][1] = p;
      } else {
        std::vector<double> scores(static_cast<std::size_t>(dim));
        for (int k = 0; k < dim; ++k) scores[static_cast<std::size_t>(k)] = raw[static_cast<std::size_t>(k)][i];
        detail::softmax_inplace(scores);
        proba[i] = std::move(scores);
      }
    });
  };

  std::vector<std::vector<detail::EbmSlot>> hist;
  for (int round = 0; round < config.n_rounds; ++round) {
    for (std::size_t f = 0; f < X.cols.size(); ++f) {
      refresh_proba();
      ShapeFunction& shape = model.shapes[f];
      const std::size_t slots = static_cast<std::size_t>(shape.n_bins) + 1;
      hist.assign(static_cast<std::size_t>(dim), std::vector<detail::EbmSlot>(slots));
      for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t b = binned[f][i] < 0 ? shape.n_bins : binned[f][i];
        for (int k = 0; k < dim; ++k) {
          const int target_class = config.n_classes == 2 ? 1 : k;
          const double p = proba[i][static_cast<std::size_t>(target_class)];
          const double y = labels[i] == target_class ? 1.0 : 0.0;
          detail::EbmSlot& slot = hist[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
          slot.g += p - y;
          slot.h += std::max(p * (1.0 - p), 1e-16);
          ++slot.c;
        }
      }
      std::vector<std::vector<double>> updates(static_cast<std::size_t>(dim),
                                               std::vector<double>(slots, 0.0));
      bool any_update = false;
      for (int k = 0; k < dim; ++k) {
        if (detail::fit_stump(config, shape, hist[static_cast<std::size_t>(k)],
                              updates[static_cast<std::size_t>(k)])) {
          any_update = true;
          for (std::size_t b = 0; b < slots; ++b) {
            shape.values[static_cast<std::size_t>(k)][b] += updates[static_cast<std::size_t>(k)][b];
          }
        }
      }
      if (!any_update) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t b = binned[f][i] < 0 ? shape.n_bins : binned[f][i];
        for (int k = 0; k < dim; ++k) {
          raw[static_cast<std::size_t>(k)][i] +=
              updates[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
        }
      }
    }
    refresh_proba();
    model.training_loss.push_back(detail::mean_log_loss(proba, labels));
  }
  return model;
}

// Mean absolute shape value weighted by training bin occupancy, normalized
// to sum to 1.
inline std::vector<std::pair<std::string, double>> feature_importance(const EbmModel& model) {
  std::vector<std::pair<std::string, double>> out;
  std::vector<double> scores;
  double total = 0.0;
  for (const auto& shape : model.shapes) {
    double weighted = 0.0;
    long long count = 0;
    for (std::size_t b = 0; b < shape.bin_count.size(); ++b) {
      double mean_abs = 0.0;
      for (const auto& class_values : shape.values) mean_abs += std::abs(class_values[b]);
      mean_abs /= static_cast<double>(shape.values.size());
      weighted += mean_abs * static_cast<double>(shape.bin_count[b]);
      count += shape.bin_count[b];
    }
    const double score = count > 0 ? weighted / static_cast<double>(count) : 0.0;
    scores.push_back(score);
    total += score;
  }
  for (std::size_t f = 0; f < model.feature_names.size(); ++f) {
    out.emplace_back(model.feature_names[f], total > 0.0 ? scores[f] / total : 0.0);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace trialrisk
