#pragma once

// Staged partition: L1Train / L1Valid / InferenceTest, stratified and
// seeded. Sizes follow largest-remainder rounding both globally and within
// each stratum, so partition sizes are fraction-faithful and class
// proportions track the global mix.
//
// Assignment is positional: the plan refers to row indices of the dataset
// it was made from, in that dataset's row order.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/dataset.hpp"

namespace trialrisk {

enum class Part : int { L1Train = 0, L1Valid = 1, InferenceTest = 2 };

inline const std::string& part_name(Part p) {
  static const std::array<std::string, 3> names = {"l1_train", "l1_valid", "inference_test"};
  return names[static_cast<std::size_t>(p)];
}

struct SplitPlan {
  std::uint64_t seed = 0;
  std::array<double, 3> fractions = {0.4, 0.5, 0.1};
  std::string stratify_column;
  std::size_t n_rows = 0;
  std::array<std::vector<std::uint32_t>, 3> parts;  // sorted row indices per partition
  std::vector<std::string> warnings;

  const std::vector<std::uint32_t>& rows(Part p) const {
    return parts[static_cast<std::size_t>(p)];
  }

  // Per-row partition; only meaningful on a plan that passes verify_no_leakage.
  std::vector<Part> assignment() const {
    std::vector<Part> out(n_rows, Part::L1Train);
    for (int p = 0; p < 3; ++p) {
      for (std::uint32_t r : parts[static_cast<std::size_t>(p)]) {
        if (r < n_rows) out[r] = static_cast<Part>(p);
      }
    }
    return out;
  }

  json to_json() const {
    return json{{"seed", seed},
                {"fractions", fractions},
                {"stratify_column", stratify_column},
                {"n_rows", n_rows},
                {"l1_train", parts[0]},
                {"l1_valid", parts[1]},
                {"inference_test", parts[2]}};
  }

  static SplitPlan from_json(const json& j) {
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.fractions = j.at("fractions").get<std::array<double, 3>>();
    plan.stratify_column = j.at("stratify_column").get<std::string>();
    plan.n_rows = j.at("n_rows").get<std::size_t>();
    plan.parts[0] = j.at("l1_train").get<std::vector<std::uint32_t>>();
    plan.parts[1] = j.at("l1_valid").get<std::vector<std::uint32_t>>();
    plan.parts[2] = j.at("inference_test").get<std::vector<std::uint32_t>>();
    return plan;
  }

  std::uint64_t fingerprint() const { return fnv1a64(to_json().dump()); }
};

inline SplitPlan load_split_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("split plan: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("split plan: ") + e.what());
  }
  return SplitPlan::from_json(j);
}

inline void save_split_plan(const SplitPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("split plan: cannot write " + path);
  out << plan.to_json().dump(2) << '\n';
}

namespace detail {

// Largest-remainder apportionment of n seats over the given fractions.
inline std::array<std::size_t, 3> largest_remainder(std::size_t n,
                                                    const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> seats{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = fractions[static_cast<std::size_t>(i)] * static_cast<double>(n);
    seats[static_cast<std::size_t>(i)] = static_cast<std::size_t>(quota);
    remainder[static_cast<std::size_t>(i)] = quota - std::floor(quota);
    assigned += seats[static_cast<std::size_t>(i)];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (remainder[static_cast<std::size_t>(a)] != remainder[static_cast<std::size_t>(b)]) {
      return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  for (int k = 0; assigned < n; ++k) {
    ++seats[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])];
    ++assigned;
  }
  return seats;
}

}  // namespace detail

// Stratified seeded split. Rows with a missing stratify label form their own
// pseudo-stratum and are allotted by the same seeded draw. Deterministic
// given (dataset row order, seed, fractions).
inline SplitPlan make_split(const TabularDataset& ds, const FeatureSchema& schema,
                            const std::string& stratify_column, std::uint64_t seed,
                            std::array<double, 3> fractions = {0.4, 0.5, 0.1}) {
  if (ds.n_rows == 0) throw ValidationError("make_split: dataset has no rows");
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw ConfigError("make_split: fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("make_split: fractions must sum to 1");

  // Stratum key per row; -1 = missing label.
  std::vector<int> key(ds.n_rows, -1);
  if (stratify_column == schema.success_column) {
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      key[r] = ds.success_missing[r] ? -1 : ds.success[r];
    }
  } else if (stratify_column == schema.phase_column) {
    for (std::size_t r = 0; r < ds.n_rows; ++r) key[r] = static_cast<int>(ds.phase[r]);
  } else {
    const int c = schema.feature_index(stratify_column);
    if (c < 0) throw ConfigError("make_split: stratify column not found: " + stratify_column);
    const FeatureSpec& spec = schema.features[static_cast<std::size_t>(c)];
    if (spec.kind == FeatureKind::Numeric) {
      throw ConfigError("make_split: cannot stratify on numeric column " + stratify_column);
    }
    const Column& col = ds.columns[static_cast<std::size_t>(c)];
    for (std::size_t r = 0; r < ds.n_rows; ++r) key[r] = col.missing[r] ? -1 : col.cat[r];
  }

  std::map<int, std::vector<std::uint32_t>> strata;
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    strata[key[r]].push_back(static_cast<std::uint32_t>(r));
  }

  const std::array<std::size_t, 3> target = detail::largest_remainder(ds.n_rows, fractions);

  // Per-stratum floors, then leftover rows to partitions with remaining
  // capacity by descending fractional remainder.
  struct StratumAlloc {
    int key;
    std::array<std::size_t, 3> take{};
    std::size_t leftover = 0;
  };
  std::vector<StratumAlloc> allocs;
  std::array<std::size_t, 3> capacity = target;
  for (const auto& [k, rows] : strata) {
    StratumAlloc a;
    a.key = k;
    std::size_t floored = 0;
    for (int p = 0; p < 3; ++p) {
      const std::size_t f = static_cast<std::size_t>(
          fractions[static_cast<std::size_t>(p)] * static_cast<double>(rows.size()));
      a.take[static_cast<std::size_t>(p)] = f;
      capacity[static_cast<std::size_t>(p)] -= std::min(capacity[static_cast<std::size_t>(p)], f);
      floored += f;
    }
    a.leftover = rows.size() - floored;
    allocs.push_back(a);
  }
  struct Claim {
    double remainder;
    std::size_t stratum;
    int part;
  };
  std::vector<Claim> claims;
  for (std::size_t s = 0; s < allocs.size(); ++s) {
    const std::size_t m = strata.at(allocs[s].key).size();
    for (int p = 0; p < 3; ++p) {
      const double quota = fractions[static_cast<std::size_t>(p)] * static_cast<double>(m);
      claims.push_back({quota - std::floor(quota), s, p});
    }
  }
  std::sort(claims.begin(), claims.end(), [](const Claim& a, const Claim& b) {
    if (a.remainder != b.remainder) return a.remainder > b.remainder;
    if (a.stratum != b.stratum) return a.stratum < b.stratum;
    return a.part < b.part;
  });
  for (const Claim& c : claims) {
    if (allocs[c.stratum].leftover == 0) continue;
    if (capacity[static_cast<std::size_t>(c.part)] == 0) continue;
    ++allocs[c.stratum].take[static_cast<std::size_t>(c.part)];
    --capacity[static_cast<std::size_t>(c.part)];
    --allocs[c.stratum].leftover;
  }
  // Remainder-order pass can strand a leftover when its preferred partitions
  // are full; place the stragglers wherever capacity remains.
  for (auto& a : allocs) {
    while (a.leftover > 0) {
      for (int p = 0; p < 3; ++p) {
        if (capacity[static_cast<std::size_t>(p)] > 0) {
          ++a.take[static_cast<std::size_t>(p)];
          --capacity[static_cast<std::size_t>(p)];
          --a.leftover;
          break;
        }
      }
    }
  }

  SplitPlan plan;
  plan.seed = seed;
  plan.fractions = fractions;
  plan.stratify_column = stratify_column;
  plan.n_rows = ds.n_rows;

  Rng rng(seed);
  for (const auto& a : allocs) {
    std::vector<std::uint32_t> rows = strata.at(a.key);
    rng.shuffle(rows);
    std::size_t pos = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < a.take[static_cast<std::size_t>(p)]; ++i) {
        plan.parts[static_cast<std::size_t>(p)].push_back(rows[pos++]);
      }
    }
  }
  for (auto& part : plan.parts) std::sort(part.begin(), part.end());

  for (int p = 0; p < 3; ++p) {
    if (plan.parts[static_cast<std::size_t>(p)].empty()) {
      plan.warnings.push_back("partition " + part_name(static_cast<Part>(p)) +
                              " is empty at n=" + std::to_string(ds.n_rows));
    }
  }
  return plan;
}

// Empty result iff the partitions are disjoint, exhaustive and
// fraction-faithful for the given dataset. Used as a pipeline gate.
inline std::vector<std::string> verify_no_leakage(const SplitPlan& plan,
                                                  const TabularDataset& ds) {
  std::vector<std::string> violations;
  if (plan.n_rows != ds.n_rows) {
    violations.push_back("plan covers " + std::to_string(plan.n_rows) + " rows, dataset has " +
                         std::to_string(ds.n_rows));
  }
  std::vector<std::uint8_t> seen(ds.n_rows, 0);
  std::size_t total = 0;
  for (int p = 0; p < 3; ++p) {
    for (std::uint32_t r : plan.parts[static_cast<std::size_t>(p)]) {
      if (r >= ds.n_rows) {
        violations.push_back(part_name(static_cast<Part>(p)) + ": row index " +
                             std::to_string(r) + " out of range");
        continue;
      }
      if (seen[r]) {
        violations.push_back("row " + std::to_string(r) + " assigned to more than one partition");
      }
      seen[r] = 1;
      ++total;
    }
  }
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    if (!seen[r]) violations.push_back("row " + std::to_string(r) + " is unassigned");
  }
  if (total != ds.n_rows && violations.empty()) {
    violations.push_back("partition sizes do not sum to n_rows");
  }
  for (int p = 0; p < 3; ++p) {
    const double expect = plan.fractions[static_cast<std::size_t>(p)] *
                          static_cast<double>(ds.n_rows);
    const double got = static_cast<double>(plan.parts[static_cast<std::size_t>(p)].size());
    if (std::abs(got - std::round(expect)) > 1.0 + 1e-9) {
      violations.push_back(part_name(static_cast<Part>(p)) + " size " +
                           std::to_string(static_cast<std::size_t>(got)) +
                           " deviates from fraction target by more than 1");
    }
  }
  return violations;
}

}  // namespace trialrisk
