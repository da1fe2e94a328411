#pragma once

// Gradient-boosted decision trees with second-order boosting, histogram
// split finding and native missing-value routing.
//
// Per round and class k the gradients are g_i = p_ik - 1{y_i = k} and
// h_i = p_ik (1 - p_ik) (single-logit in the binary case). Splits maximize
//   0.5 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - (G_L+G_R)^2/(H_L+H_R+lambda) ] - gamma
// over histogram bin boundaries; Missing rows are routed by trying both
// default directions and keeping the higher-gain one. Categorical features
// split on level sets found by the sorted-gradient prefix scan. Ties are
// broken by scan order (lower feature index, then lower boundary), which
// together with per-feature histogram ownership makes training independent
// of worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/learner.hpp"

namespace trialrisk {

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  std::vector<std::int32_t> left_levels;  // sorted; categorical splits only
  bool default_left = true;
  int left = -1;
  int right = -1;
  double weight = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const FeatureMatrix& X, std::size_t row) const {
    int idx = 0;
    while (!nodes[static_cast<std::size_t>(idx)].is_leaf()) {
      const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
      const FeatureColumn& col = X.cols[static_cast<std::size_t>(node.feature)];
      bool go_left;
      if (col.missing[row]) {
        go_left = node.default_left;
      } else if (col.numeric) {
        go_left = col.num[row] <= node.threshold;
      } else {
        go_left = std::binary_search(node.left_levels.begin(), node.left_levels.end(),
                                     col.cat[row]);
      }
      idx = go_left ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(idx)].weight;
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& n : nodes) {
      if (n.is_leaf()) {
        arr.push_back({{"w", n.weight}});
      } else {
        arr.push_back({{"f", n.feature},
                       {"t", n.threshold},
                       {"L", n.left_levels},
                       {"d", n.default_left ? 1 : 0},
                       {"l", n.left},
                       {"r", n.right}});
      }
    }
    return arr;
  }

  static Tree from_json(const json& j) {
    Tree tree;
    for (const auto& item : j) {
      TreeNode n;
      if (item.contains("w")) {
        n.weight = item.at("w").get<double>();
      } else {
        n.feature = item.at("f").get<int>();
        n.threshold = item.at("t").get<double>();
        n.left_levels = item.at("L").get<std::vector<std::int32_t>>();
        n.default_left = item.at("d").get<int>() != 0;
        n.left = item.at("l").get<int>();
        n.right = item.at("r").get<int>();
      }
      tree.nodes.push_back(std::move(n));
    }
    return tree;
  }
};

struct GbdtModel {
  static constexpr int kFormatVersion = 1;

  LearnerConfig config;
  std::vector<std::string> feature_names;
  std::vector<double> base_score;          // 1 entry (binary) or n_classes
  std::vector<std::vector<Tree>> rounds;   // [round][score dim]
  std::vector<double> feature_gain;        // accumulated split gain
  std::vector<double> training_loss;       // mean train log-loss after each round

  int score_dim() const { return config.n_classes == 2 ? 1 : config.n_classes; }

  void check_layout(const FeatureMatrix& X) const {
    if (X.cols.size() != feature_names.size()) {
      throw ValidationError("gbdt predict: feature count mismatch");
    }
    for (std::size_t c = 0; c < X.cols.size(); ++c) {
      if (X.cols[c].name != feature_names[c]) {
        throw ValidationError("gbdt predict: feature layout mismatch at " + X.cols[c].name);
      }
    }
  }

  std::vector<std::vector<double>> predict_raw(const FeatureMatrix& X) const {
    check_layout(X);
    const int dim = score_dim();
    std::vector<std::vector<double>> raw(
        X.n_rows, std::vector<double>(static_cast<std::size_t>(dim)));
    for (std::size_t i = 0; i < X.n_rows; ++i) {
      for (int k = 0; k < dim; ++k) raw[i][static_cast<std::size_t>(k)] = base_score[static_cast<std::size_t>(k)];
    }
    for (const auto& round : rounds) {
      for (int k = 0; k < dim; ++k) {
        const Tree& tree = round[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < X.n_rows; ++i) {
          raw[i][static_cast<std::size_t>(k)] += tree.predict(X, i);
        }
      }
    }
    return raw;
  }

  std::vector<std::vector<double>> predict_proba(const FeatureMatrix& X) const {
    auto raw = predict_raw(X);
    std::vector<std::vector<double>> proba(X.n_rows);
    for (std::size_t i = 0; i < X.n_rows; ++i) {
      if (config.n_classes == 2) {
        const double p = detail::sigmoid(raw[i][0]);
        proba[i] = {1.0 - p, p};
      } else {
        detail::softmax_inplace(raw[i]);
        proba[i] = std::move(raw[i]);
      }
    }
    return proba;
  }

  json to_json() const {
    json rounds_json = json::array();
    for (const auto& round : rounds) {
      json trees = json::array();
      for (const auto& t : round) trees.push_back(t.to_json());
      rounds_json.push_back(std::move(trees));
    }
    return json{{"format_version", kFormatVersion},
                {"kind", "gbdt"},
                {"config", config.to_json()},
                {"feature_names", feature_names},
                {"base_scores", base_score},
                {"trees", rounds_json},
                {"feature_gain", feature_gain},
                {"training_loss", training_loss}};
  }

  static GbdtModel from_json(const json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw ParseError("gbdt model: format_version " + std::to_string(version) +
                       " unsupported, expected " + std::to_string(kFormatVersion));
    }
    if (j.at("kind").get<std::string>() != "gbdt") throw ParseError("gbdt model: wrong kind");
    GbdtModel m;
    m.config = LearnerConfig::from_json(j.at("config"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.base_score = j.at("base_scores").get<std::vector<double>>();
    for (const auto& round : j.at("trees")) {
      std::vector<Tree> trees;
      for (const auto& t : round) trees.push_back(Tree::from_json(t));
      m.rounds.push_back(std::move(trees));
    }
    m.feature_gain = j.at("feature_gain").get<std::vector<double>>();
    m.training_loss = j.at("training_loss").get<std::vector<double>>();
    return m;
  }
};

namespace detail {

struct HistSlot {
  double g = 0.0;
  double h = 0.0;
  long long c = 0;
};

struct FeatureHistogram {
  std::vector<HistSlot> bins;
  HistSlot miss;
};

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  int boundary = -1;              // numeric: split after this bin
  std::vector<std::int32_t> left_levels;  // categorical
  bool default_left = true;
  bool found = false;
};

struct GbdtTrainContext {
  const LearnerConfig* config;
  const FeatureMatrix* X;
  std::vector<FeatureBins> bins;
  std::vector<std::vector<std::int32_t>> binned;  // [feature][row]
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<double>* feature_gain = nullptr;
  int n_threads = 1;
};

inline void build_histograms(const GbdtTrainContext& ctx, const std::vector<std::uint32_t>& rows,
                             std::vector<FeatureHistogram>& hists) {
  const std::size_t n_features = ctx.X->cols.size();
  hists.assign(n_features, FeatureHistogram{});
  parallel_for_index(n_features, ctx.n_threads, [&](std::size_t f) {
    FeatureHistogram& hist = hists[f];
    hist.bins.assign(static_cast<std::size_t>(ctx.bins[f].n_bins), HistSlot{});
    const auto& binned = ctx.binned[f];
    for (std::uint32_t r : rows) {
      const std::int32_t b = binned[r];
      HistSlot& slot = b < 0 ? hist.miss : hist.bins[static_cast<std::size_t>(b)];
      slot.g += ctx.grad[r];
      slot.h += ctx.hess[r];
      ++slot.c;
    }
  });
}

inline void consider_split(const LearnerConfig& cfg, SplitChoice& best, double gain, int feature,
                           int boundary, bool default_left, double h_left, double h_right,
                           long long c_left, long long c_right) {
  if (c_left < 1 || c_right < 1) return;
  if (h_left < cfg.min_child_weight || h_right < cfg.min_child_weight) return;
  if (gain <= 0.0) return;
  if (best.found && gain <= best.gain) return;
  best.gain = gain;
  best.feature = feature;
  best.boundary = boundary;
  best.default_left = default_left;
  best.left_levels.clear();
  best.found = true;
}

inline SplitChoice find_best_split(const GbdtTrainContext& ctx,
                                   const std::vector<FeatureHistogram>& hists) {
  const LearnerConfig& cfg = *ctx.config;
  SplitChoice best;
  std::vector<std::int32_t> best_levels;
  for (std::size_t f = 0; f < hists.size(); ++f) {
    const FeatureHistogram& hist = hists[f];
    double g_total = hist.miss.g;
    double h_total = hist.miss.h;
    long long c_total = hist.miss.c;
    for (const auto& slot : hist.bins) {
      g_total += slot.g;
      h_total += slot.h;
      c_total += slot.c;
    }
    if (ctx.bins[f].numeric) {
      double g_prefix = 0.0, h_prefix = 0.0;
      long long c_prefix = 0;
      for (int b = 0; b + 1 < ctx.bins[f].n_bins; ++b) {
        const HistSlot& slot = hist.bins[static_cast<std::size_t>(b)];
        g_prefix += slot.g;
        h_prefix += slot.h;
        c_prefix += slot.c;
        // Missing left, then missing right.
        {
          const double gl = g_prefix + hist.miss.g;
          const double hl = h_prefix + hist.miss.h;
          const long long cl = c_prefix + hist.miss.c;
          consider_split(cfg, best,
                         split_gain(gl, hl, g_total - gl, h_total - hl, cfg.l2_lambda,
                                    cfg.gain_gamma),
                         static_cast<int>(f), b, true, hl, h_total - hl, cl, c_total - cl);
        }
        {
          consider_split(cfg, best,
                         split_gain(g_prefix, h_prefix, g_total - g_prefix, h_total - h_prefix,
                                    cfg.l2_lambda, cfg.gain_gamma),
                         static_cast<int>(f), b, false, h_prefix, h_total - h_prefix, c_prefix,
                         c_total - c_prefix);
        }
      }
    } else {
      // Levels present in this node, ordered by gradient score; prefix cuts
      // over that order are the candidate level sets.
      std::vector<int> order;
      for (int lv = 0; lv < ctx.bins[f].n_bins; ++lv) {
        if (hist.bins[static_cast<std::size_t>(lv)].c > 0) order.push_back(lv);
      }
      if (order.size() < 2) continue;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        const HistSlot& sa = hist.bins[static_cast<std::size_t>(a)];
        const HistSlot& sb = hist.bins[static_cast<std::size_t>(b)];
        const double wa = sa.g / (sa.h + cfg.l2_lambda);
        const double wb = sb.g / (sb.h + cfg.l2_lambda);
        if (wa != wb) return wa < wb;
        return a < b;
      });
      double g_prefix = 0.0, h_prefix = 0.0;
      long long c_prefix = 0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const HistSlot& slot = hist.bins[static_cast<std::size_t>(order[k])];
        g_prefix += slot.g;
        h_prefix += slot.h;
        c_prefix += slot.c;
        const bool was_found = best.found;
        const double gain_before = best.gain;
        {
          const double gl = g_prefix + hist.miss.g;
          const double hl = h_prefix + hist.miss.h;
          consider_split(cfg, best,
                         split_gain(gl, hl, g_total - gl, h_total - hl, cfg.l2_lambda,
                                    cfg.gain_gamma),
                         static_cast<int>(f), static_cast<int>(k), true, hl, h_total - hl,
                         c_prefix + hist.miss.c, c_total - c_prefix - hist.miss.c);
        }
        {
          consider_split(cfg, best,
                         split_gain(g_prefix, h_prefix, g_total - g_prefix, h_total - h_prefix,
                                    cfg.l2_lambda, cfg.gain_gamma),
                         static_cast<int>(f), static_cast<int>(k), false, h_prefix,
                         h_total - h_prefix, c_prefix, c_total - c_prefix);
        }
        const bool improved = best.found && (!was_found || best.gain > gain_before);
        if (improved && best.feature == static_cast<int>(f)) {
          best_levels.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k) + 1);
        }
      }
    }
  }
  if (best.found && best.feature >= 0 && !ctx.bins[static_cast<std::size_t>(best.feature)].numeric) {
    std::sort(best_levels.begin(), best_levels.end());
    best.left_levels = std::move(best_levels);
  }
  return best;
}

// Grows one tree and folds the new leaf values into raw_scores as leaves are
// sealed.
inline Tree grow_tree(const GbdtTrainContext& ctx, std::vector<double>& raw_scores) {
  const LearnerConfig& cfg = *ctx.config;
  Tree tree;
  struct WorkItem {
    int node;
    int depth;
    std::vector<std::uint32_t> rows;
  };
  std::vector<std::uint32_t> all_rows(ctx.X->n_rows);
  for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<std::uint32_t>(i);
  tree.nodes.emplace_back();
  std::vector<WorkItem> stack;
  stack.push_back({0, 0, std::move(all_rows)});

  std::vector<FeatureHistogram> hists;
  while (!stack.empty()) {
    WorkItem item = std::move(stack.back());
    stack.pop_back();
    double g_sum = 0.0, h_sum = 0.0;
    for (std::uint32_t r : item.rows) {
      g_sum += ctx.grad[r];
      h_sum += ctx.hess[r];
    }
    auto seal_leaf = [&] {
      const double w = cfg.learning_rate * leaf_weight(g_sum, h_sum, cfg.l2_lambda);
      tree.nodes[static_cast<std::size_t>(item.node)].weight = w;
      tree.nodes[static_cast<std::size_t>(item.node)].feature = -1;
      for (std::uint32_t r : item.rows) raw_scores[r] += w;
    };
    if (item.depth >= cfg.max_depth || item.rows.size() < 2) {
      seal_leaf();
      continue;
    }
    build_histograms(ctx, item.rows, hists);
    SplitChoice split = find_best_split(ctx, hists);
    if (!split.found) {
      seal_leaf();
      continue;
    }
    if (ctx.feature_gain) {
      (*ctx.feature_gain)[static_cast<std::size_t>(split.feature)] += split.gain;
    }
    TreeNode& node = tree.nodes[static_cast<std::size_t>(item.node)];
    node.feature = split.feature;
    node.default_left = split.default_left;
    const FeatureBins& fbins = ctx.bins[static_cast<std::size_t>(split.feature)];
    if (fbins.numeric) {
      node.threshold = fbins.edges[static_cast<std::size_t>(split.boundary)];
    } else {
      node.left_levels = split.left_levels;
    }
    const auto& binned = ctx.binned[static_cast<std::size_t>(split.feature)];
    std::vector<std::uint32_t> left_rows, right_rows;
    std::vector<std::uint8_t> level_goes_left;
    if (!fbins.numeric) {
      level_goes_left.assign(static_cast<std::size_t>(fbins.n_bins), 0);
      for (std::int32_t lv : node.left_levels) level_goes_left[static_cast<std::size_t>(lv)] = 1;
    }
    for (std::uint32_t r : item.rows) {
      const std::int32_t b = binned[r];
      bool go_left;
      if (b < 0) go_left = split.default_left;
      else if (fbins.numeric) go_left = b <= split.boundary;
      else go_left = level_goes_left[static_cast<std::size_t>(b)] != 0;
      (go_left ? left_rows : right_rows).push_back(r);
    }
    const int left_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int right_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(item.node)].left = left_idx;
    tree.nodes[static_cast<std::size_t>(item.node)].right = right_idx;
    stack.push_back({right_idx, item.depth + 1, std::move(right_rows)});
    stack.push_back({left_idx, item.depth + 1, std::move(left_rows)});
  }
  return tree;
}

}  // namespace detail

inline GbdtModel train_gbdt(const LearnerConfig& config, const FeatureMatrix& X,
                            const std::vector<int>& labels,
                            const std::vector<double>& sample_weights = {}, int n_threads = 1) {
  config.check();
  detail::check_training_labels(config, X, labels);
  if (!sample_weights.empty() && sample_weights.size() != labels.size()) {
    throw ValidationError("train_gbdt: sample_weights length mismatch");
  }

  GbdtModel model;
  model.config = config;
  model.config.kind = LearnerKind::Gbdt;
  model.feature_names = X.names();
  model.base_score = detail::prior_base_scores(labels, config.n_classes);
  model.feature_gain.assign(X.cols.size(), 0.0);

  detail::GbdtTrainContext ctx;
  ctx.config = &model.config;
  ctx.X = &X;
  ctx.feature_gain = &model.feature_gain;
  ctx.n_threads = n_threads;
  ctx.bins.reserve(X.cols.size());
  ctx.binned.reserve(X.cols.size());
  for (const auto& col : X.cols) {
    ctx.bins.push_back(build_bins(col, config.n_bins));
    ctx.binned.push_back(bin_column(col, ctx.bins.back()));
  }
  ctx.grad.assign(X.n_rows, 0.0);
  ctx.hess.assign(X.n_rows, 0.0);

  const int dim = model.score_dim();
  std::vector<std::vector<double>> raw(static_cast<std::size_t>(dim),
                                       std::vector<double>(X.n_rows));
  for (int k = 0; k < dim; ++k) {
    std::fill(raw[static_cast<std::size_t>(k)].begin(), raw[static_cast<std::size_t>(k)].end(),
              model.base_score[static_cast<std::size_t>(k)]);
  }

  std::vector<std::vector<double>> proba(X.n_rows,
                                         std::vector<double>(static_cast<std::size_t>(config.n_classes)));
  auto refresh_proba = [&] {
    for (std::size_t i = 0; i < X.n_rows; ++i) {
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
    }
  };

  for (int round = 0; round < config.n_rounds; ++round) {
    refresh_proba();
    std::vector<Tree> round_trees;
    round_trees.reserve(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
      const int target_class = config.n_classes == 2 ? 1 : k;
      for (std::size_t i = 0; i < X.n_rows; ++i) {
        const double p = proba[i][static_cast<std::size_t>(target_class)];
        const double y = labels[i] == target_class ? 1.0 : 0.0;
        const double w = sample_weights.empty() ? 1.0 : sample_weights[i];
        ctx.grad[i] = w * (p - y);
        ctx.hess[i] = w * std::max(p * (1.0 - p), 1e-16);
      }
      Tree tree = detail::grow_tree(ctx, raw[static_cast<std::size_t>(k)]);
      round_trees.push_back(std::move(tree));
    }
    model.rounds.push_back(std::move(round_trees));
    refresh_proba();
    model.training_loss.push_back(detail::mean_log_loss(proba, labels));
  }
  return model;
}

// Total split gain per feature, normalized to sum to 1.
inline std::vector<std::pair<std::string, double>> feature_importance(const GbdtModel& model) {
  std::vector<std::pair<std::string, double>> out;
  double total = 0.0;
  for (double g : model.feature_gain) total += g;
  for (std::size_t f = 0; f < model.feature_names.size(); ++f) {
    out.emplace_back(model.feature_names[f], total > 0.0 ? model.feature_gain[f] / total : 0.0);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace trialrisk
