#pragma once

// Missingness diagnostics and fitted imputers (mean, most-frequent, KNN).
//
// diagnose() tests, for every feature with missing cells, whether its
// missingness indicator associates with any other observed feature:
// chi-square for categorical/boolean, rank test for numeric. Any p-value
// below alpha after a per-feature Bonferroni correction flags mar_evidence;
// otherwise the feature is mcar_consistent. MNAR is not inferable from
// observed data alone and is deliberately not a flag.
//
// Imputers never touch latent targets or the success label.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/dataset.hpp"
#include "trialrisk/stats.hpp"

namespace trialrisk {

enum class MechanismFlag { NoneMissing, McarConsistent, MarEvidence };

inline const std::string& mechanism_flag_name(MechanismFlag f) {
  static const std::array<std::string, 3> names = {"none_missing", "mcar_consistent",
                                                   "mar_evidence"};
  return names[static_cast<std::size_t>(f)];
}

struct Association {
  std::string feature;
  double statistic = 0.0;
  double p_value = 1.0;
};

struct FeatureMissingness {
  std::string feature;
  double missing_fraction = 0.0;
  MechanismFlag flag = MechanismFlag::NoneMissing;
  std::vector<Association> associations;  // ascending p, strongest first
};

struct MissingnessReport {
  double alpha = 0.05;
  std::vector<FeatureMissingness> entries;

  json to_json() const {
    json features = json::object();
    for (const auto& e : entries) {
      json assoc = json::array();
      for (const auto& a : e.associations) {
        assoc.push_back({{"feature", a.feature}, {"statistic", a.statistic}, {"p_value", a.p_value}});
      }
      features[e.feature] = {{"missing_fraction", e.missing_fraction},
                             {"mechanism_flag", mechanism_flag_name(e.flag)},
                             {"associations", assoc}};
    }
    return json{{"alpha", alpha}, {"features", features}};
  }
};

inline MissingnessReport diagnose(const TabularDataset& ds, const FeatureSchema& schema,
                                  double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("diagnose: alpha must be in (0, 1)");
  constexpr std::size_t kMaxReportedAssociations = 5;

  MissingnessReport report;
  report.alpha = alpha;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const Column& col = ds.columns[f];
    FeatureMissingness entry;
    entry.feature = schema.features[f].name;
    std::size_t n_missing = 0;
    for (std::size_t r = 0; r < ds.n_rows; ++r) n_missing += col.missing[r] ? 1u : 0u;
    entry.missing_fraction =
        ds.n_rows == 0 ? 0.0 : static_cast<double>(n_missing) / static_cast<double>(ds.n_rows);
    if (n_missing == 0) {
      entry.flag = MechanismFlag::NoneMissing;
      report.entries.push_back(std::move(entry));
      continue;
    }

    std::vector<Association> tested;
    for (std::size_t g = 0; g < schema.features.size(); ++g) {
      if (g == f) continue;
      const Column& other = ds.columns[g];
      const FeatureSpec& other_spec = schema.features[g];
      TestResult res;
      if (other_spec.kind == FeatureKind::Numeric) {
        std::vector<double> when_missing, when_observed;
        for (std::size_t r = 0; r < ds.n_rows; ++r) {
          if (other.missing[r]) continue;
          (col.missing[r] ? when_missing : when_observed).push_back(other.num[r]);
        }
        res = rank_sum_test(std::move(when_missing), std::move(when_observed));
      } else {
        const int n_levels =
            other_spec.kind == FeatureKind::Boolean ? 2 : static_cast<int>(other_spec.levels.size());
        std::vector<std::array<long long, 2>> table(static_cast<std::size_t>(n_levels), {0, 0});
        for (std::size_t r = 0; r < ds.n_rows; ++r) {
          if (other.missing[r]) continue;
          ++table[static_cast<std::size_t>(other.cat[r])][col.missing[r] ? 0 : 1];
        }
        res = chi2_independence(table);
      }
      if (res.valid) tested.push_back({other_spec.name, res.statistic, res.p_value});
    }

    std::sort(tested.begin(), tested.end(), [](const Association& a, const Association& b) {
      if (a.p_value != b.p_value) return a.p_value < b.p_value;
      return a.feature < b.feature;
    });
    const double corrected_alpha =
        tested.empty() ? alpha : alpha / static_cast<double>(tested.size());
    entry.flag = !tested.empty() && tested.front().p_value < corrected_alpha
                     ? MechanismFlag::MarEvidence
                     : MechanismFlag::McarConsistent;
    if (tested.size() > kMaxReportedAssociations) tested.resize(kMaxReportedAssociations);
    entry.associations = std::move(tested);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

enum class ImputeStrategy { Mean, MostFrequent, Knn };

inline const std::string& impute_strategy_name(ImputeStrategy s) {
  static const std::array<std::string, 3> names = {"mean", "most_frequent", "knn"};
  return names[static_cast<std::size_t>(s)];
}

inline ImputeStrategy impute_strategy_from_name(const std::string& name) {
  if (name == "mean") return ImputeStrategy::Mean;
  if (name == "most_frequent" || name == "mode") return ImputeStrategy::MostFrequent;
  if (name == "knn") return ImputeStrategy::Knn;
  throw ConfigError("unknown impute strategy: " + name);
}

struct FittedImputer {
  ImputeStrategy strategy = ImputeStrategy::Mean;
  std::uint64_t schema_fingerprint = 0;
  // Fill statistics per feature: numeric value or level code. Used directly
  // by mean/most_frequent and as the KNN fallback when no neighbor observes
  // the feature.
  std::vector<double> fill_num;
  std::vector<std::int32_t> fill_cat;
  // KNN state. Reference cells are stored raw and standardized on the fly
  // inside the distance ((q - ref) / sd), so donor fills stay bit-exact.
  int k = 0;
  std::vector<double> standardize_mean;  // per feature; numeric only
  std::vector<double> standardize_sd;    // sd 0 marks constant features
  std::vector<std::vector<double>> ref_num;        // column-major [feature][row]
  std::vector<std::vector<std::int32_t>> ref_cat;
  std::vector<std::vector<std::uint8_t>> ref_missing;
  std::size_t n_ref = 0;

  json to_json() const {
    json j{{"strategy", impute_strategy_name(strategy)},
           {"schema_fingerprint", hex64(schema_fingerprint)},
           {"fill_num", fill_num},
           {"fill_cat", fill_cat},
           {"k", k}};
    if (strategy == ImputeStrategy::Knn) {
      j["standardize_mean"] = standardize_mean;
      j["standardize_sd"] = standardize_sd;
      j["ref_num"] = ref_num;
      j["ref_cat"] = ref_cat;
      j["ref_missing"] = ref_missing;
      j["n_ref"] = n_ref;
    }
    return j;
  }

  static FittedImputer from_json(const json& j) {
    FittedImputer imp;
    imp.strategy = impute_strategy_from_name(j.at("strategy").get<std::string>());
    imp.schema_fingerprint = std::stoull(j.at("schema_fingerprint").get<std::string>(), nullptr, 16);
    imp.fill_num = j.at("fill_num").get<std::vector<double>>();
    imp.fill_cat = j.at("fill_cat").get<std::vector<std::int32_t>>();
    imp.k = j.at("k").get<int>();
    if (imp.strategy == ImputeStrategy::Knn) {
      imp.standardize_mean = j.at("standardize_mean").get<std::vector<double>>();
      imp.standardize_sd = j.at("standardize_sd").get<std::vector<double>>();
      imp.ref_num = j.at("ref_num").get<std::vector<std::vector<double>>>();
      imp.ref_cat = j.at("ref_cat").get<std::vector<std::vector<std::int32_t>>>();
      imp.ref_missing = j.at("ref_missing").get<std::vector<std::vector<std::uint8_t>>>();
      imp.n_ref = j.at("n_ref").get<std::size_t>();
    }
    return imp;
  }
};

namespace detail {

struct ColumnStats {
  bool any_observed = false;
  double mean = 0.0;
  double sd = 0.0;
  std::int32_t mode = 0;
  double numeric_mode = 0.0;
};

inline ColumnStats observed_stats(const Column& col, const FeatureSpec& spec) {
  ColumnStats s;
  if (spec.kind == FeatureKind::Numeric) {
    double sum = 0.0;
    std::size_t n = 0;
    std::map<double, std::size_t> counts;
    for (std::size_t r = 0; r < col.missing.size(); ++r) {
      if (col.missing[r]) continue;
      sum += col.num[r];
      ++counts[col.num[r]];
      ++n;
    }
    if (n == 0) return s;
    s.any_observed = true;
    s.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < col.missing.size(); ++r) {
      if (!col.missing[r]) ss += (col.num[r] - s.mean) * (col.num[r] - s.mean);
    }
    s.sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    std::size_t best_count = 0;
    for (const auto& [value, count] : counts) {
      if (count > best_count) {
        best_count = count;
        s.numeric_mode = value;  // ties: lowest value (map order)
      }
    }
  } else {
    std::map<std::int32_t, std::size_t> counts;
    for (std::size_t r = 0; r < col.missing.size(); ++r) {
      if (!col.missing[r]) ++counts[col.cat[r]];
    }
    if (counts.empty()) return s;
    s.any_observed = true;
    std::size_t best_count = 0;
    for (const auto& [code, count] : counts) {
      if (count > best_count) {
        best_count = count;
        s.mode = code;  // ties: lowest code
      }
    }
  }
  return s;
}

}  // namespace detail

inline FittedImputer fit_imputer(ImputeStrategy strategy, const TabularDataset& ds,
                                 const FeatureSchema& schema, std::optional<int> k = std::nullopt) {
  FittedImputer imp;
  imp.strategy = strategy;
  imp.schema_fingerprint = ds.schema_fingerprint;
  imp.fill_num.assign(schema.features.size(), 0.0);
  imp.fill_cat.assign(schema.features.size(), 0);

  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const FeatureSpec& spec = schema.features[f];
    const detail::ColumnStats stats = detail::observed_stats(ds.columns[f], spec);
    if (!stats.any_observed) {
      throw ValidationError("fit_imputer: feature " + spec.name + " has no observed values");
    }
    if (spec.kind == FeatureKind::Numeric) {
      imp.fill_num[f] = strategy == ImputeStrategy::MostFrequent ? stats.numeric_mode : stats.mean;
    } else {
      imp.fill_cat[f] = stats.mode;
    }
  }

  if (strategy == ImputeStrategy::Knn) {
    if (!k.has_value() || *k < 1) throw ConfigError("fit_imputer: knn requires k >= 1");
    if (static_cast<std::size_t>(*k) > ds.n_rows) {
      throw ValidationError("fit_imputer: k=" + std::to_string(*k) + " exceeds " +
                            std::to_string(ds.n_rows) + " reference rows");
    }
    // A usable donor row observes at least one feature. Per-feature coverage
    // is already guaranteed by the fill-statistics pass above.
    bool any_usable = false;
    for (std::size_t r = 0; r < ds.n_rows && !any_usable; ++r) {
      for (const auto& col : ds.columns) {
        if (!col.missing[r]) {
          any_usable = true;
          break;
        }
      }
    }
    if (!any_usable) {
      throw ValidationError("fit_imputer: knn requires at least one usable reference row");
    }
    imp.k = *k;
    imp.n_ref = ds.n_rows;
    imp.standardize_mean.assign(schema.features.size(), 0.0);
    imp.standardize_sd.assign(schema.features.size(), 0.0);
    imp.ref_num.resize(schema.features.size());
    imp.ref_cat.resize(schema.features.size());
    imp.ref_missing.resize(schema.features.size());
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const FeatureSpec& spec = schema.features[f];
      const Column& col = ds.columns[f];
      imp.ref_missing[f].assign(col.missing.begin(), col.missing.end());
      if (spec.kind == FeatureKind::Numeric) {
        const detail::ColumnStats stats = detail::observed_stats(col, spec);
        imp.standardize_mean[f] = stats.mean;
        imp.standardize_sd[f] = stats.sd;
        imp.ref_num[f].assign(ds.n_rows, 0.0);
        for (std::size_t r = 0; r < ds.n_rows; ++r) {
          if (!col.missing[r]) imp.ref_num[f][r] = col.num[r];
        }
      } else {
        imp.ref_cat[f].assign(col.cat.begin(), col.cat.end());
      }
    }
  }
  return imp;
}

namespace detail {

// Masked distance over features observed in the query row. Numeric:
// squared standardized difference; categorical/boolean: 0/1 mismatch. A
// donor missing the coordinate contributes a fixed 1.0 penalty.
inline double masked_distance(const FittedImputer& imp, const FeatureSchema& schema,
                              const TabularDataset& ds, std::size_t query_row,
                              std::size_t ref_row) {
  double dist = 0.0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    if (ds.columns[f].missing[query_row]) continue;
    if (imp.ref_missing[f][ref_row]) {
      dist += 1.0;
      continue;
    }
    if (schema.features[f].kind == FeatureKind::Numeric) {
      const double sd = imp.standardize_sd[f];
      if (sd <= 0.0) continue;  // constant feature: zero distance
      const double d = (ds.columns[f].num[query_row] - imp.ref_num[f][ref_row]) / sd;
      dist += d * d;
    } else {
      dist += ds.columns[f].cat[query_row] == imp.ref_cat[f][ref_row] ? 0.0 : 1.0;
    }
  }
  return dist;
}

}  // namespace detail

// Replaces every Missing feature cell; non-missing cells and all target and
// success columns are untouched. Deterministic: KNN ties break on the
// lowest reference row index.
inline TabularDataset apply_imputer(const FittedImputer& imp, const TabularDataset& ds,
                                    const FeatureSchema& schema) {
  if (imp.schema_fingerprint != ds.schema_fingerprint) {
    throw ValidationError("apply_imputer: dataset schema does not match fitting schema");
  }
  TabularDataset out = ds;
  if (imp.strategy != ImputeStrategy::Knn) {
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      Column& col = out.columns[f];
      for (std::size_t r = 0; r < out.n_rows; ++r) {
        if (!col.missing[r]) continue;
        if (schema.features[f].kind == FeatureKind::Numeric) col.num[r] = imp.fill_num[f];
        else col.cat[r] = imp.fill_cat[f];
        col.missing[r] = 0;
      }
    }
    return out;
  }

  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    bool any_missing = false;
    for (const auto& col : ds.columns) any_missing = any_missing || col.missing[r] != 0;
    if (!any_missing) continue;

    std::vector<std::pair<double, std::uint32_t>> dist(imp.n_ref);
    for (std::size_t j = 0; j < imp.n_ref; ++j) {
      dist[j] = {detail::masked_distance(imp, schema, ds, r, j), static_cast<std::uint32_t>(j)};
    }
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(imp.k), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());

    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      if (!ds.columns[f].missing[r]) continue;
      Column& col = out.columns[f];
      if (schema.features[f].kind == FeatureKind::Numeric) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < kk; ++j) {
          const std::uint32_t ref = dist[j].second;
          if (imp.ref_missing[f][ref]) continue;
          sum += imp.ref_num[f][ref];
          ++n;
        }
        col.num[r] = n > 0 ? sum / static_cast<double>(n) : imp.fill_num[f];
      } else {
        std::map<std::int32_t, std::size_t> votes;
        for (std::size_t j = 0; j < kk; ++j) {
          const std::uint32_t ref = dist[j].second;
          if (!imp.ref_missing[f][ref]) ++votes[imp.ref_cat[f][ref]];
        }
        std::int32_t fill = imp.fill_cat[f];
        std::size_t best = 0;
        for (const auto& [code, count] : votes) {
          if (count > best) {
            best = count;
            fill = code;  // ties: lowest code (map order)
          }
        }
        col.cat[r] = fill;
      }
      col.missing[r] = 0;
    }
  }
  return out;
}

}  // namespace trialrisk
