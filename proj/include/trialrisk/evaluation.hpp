#pragma once

// Classification metrics, the latent-agreement analysis and the
// ordinal-distance sensitivity analysis.
//
// Agreement buckets are keyed by the exact rational proportion of correctly
// predicted latent factors among those with observed ground truth, reduced
// (2/4 and 1/2 land in the same bucket). Rows with no observed factor are
// excluded and counted.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/targets.hpp"

namespace trialrisk {

using json = nlohmann::json;

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<long long> counts;  // row-major [actual * n_classes + predicted]

  explicit ConfusionMatrix(int k = 0) : n_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}

  long long& at(int actual, int predicted) {
    return counts[static_cast<std::size_t>(actual) * n_classes + predicted];
  }
  long long at(int actual, int predicted) const {
    return counts[static_cast<std::size_t>(actual) * n_classes + predicted];
  }
  long long total() const { return std::accumulate(counts.begin(), counts.end(), 0ll); }
  long long trace() const {
    long long t = 0;
    for (int k = 0; k < n_classes; ++k) t += at(k, k);
    return t;
  }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
  bool degenerate = false;  // zero predicted and zero actual support
};

struct ClassificationReport {
  ConfusionMatrix confusion{0};
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> positive_f1;  // class 1, binary only

  json to_json() const {
    json classes = json::array();
    for (const auto& c : per_class) {
      classes.push_back({{"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"support", c.support},
                         {"degenerate", c.degenerate}});
    }
    json j{{"accuracy", accuracy},
           {"per_class", classes},
           {"macro_f1", macro_f1},
           {"weighted_f1", weighted_f1},
           {"n_classes", confusion.n_classes},
           {"confusion", confusion.counts}};
    if (positive_f1.has_value()) j["positive_f1"] = *positive_f1;
    return j;
  }
};

inline ClassificationReport compute_report(std::span<const int> predicted,
                                           std::span<const int> actual, int n_classes) {
  if (predicted.size() != actual.size()) {
    throw ValidationError("compute_report: predicted/actual length mismatch");
  }
  if (predicted.empty()) throw ValidationError("compute_report: empty inputs");
  if (n_classes < 2) throw ConfigError("compute_report: n_classes must be >= 2");

  ClassificationReport rep;
  rep.confusion = ConfusionMatrix(n_classes);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] < 0 || predicted[i] >= n_classes || actual[i] < 0 || actual[i] >= n_classes) {
      throw ValidationError("compute_report: label out of range at row " + std::to_string(i));
    }
    ++rep.confusion.at(actual[i], predicted[i]);
  }
  const long long total = rep.confusion.total();
  rep.accuracy = static_cast<double>(rep.confusion.trace()) / static_cast<double>(total);

  rep.per_class.resize(static_cast<std::size_t>(n_classes));
  double f1_sum = 0.0;
  double f1_weighted = 0.0;
  for (int k = 0; k < n_classes; ++k) {
    long long tp = rep.confusion.at(k, k);
    long long predicted_k = 0, actual_k = 0;
    for (int j = 0; j < n_classes; ++j) {
      predicted_k += rep.confusion.at(j, k);
      actual_k += rep.confusion.at(k, j);
    }
    ClassMetrics& m = rep.per_class[static_cast<std::size_t>(k)];
    m.support = actual_k;
    m.degenerate = predicted_k == 0 && actual_k == 0;
    m.precision = predicted_k > 0 ? static_cast<double>(tp) / static_cast<double>(predicted_k) : 0.0;
    m.recall = actual_k > 0 ? static_cast<double>(tp) / static_cast<double>(actual_k) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    f1_sum += m.f1;
    f1_weighted += m.f1 * static_cast<double>(actual_k);
  }
  rep.macro_f1 = f1_sum / static_cast<double>(n_classes);
  rep.weighted_f1 = f1_weighted / static_cast<double>(total);
  if (n_classes == 2) rep.positive_f1 = rep.per_class[1].f1;
  return rep;
}

struct AgreementBucket {
  int num = 0;
  int den = 1;  // reduced proportion num/den
  long long n = 0;
  long long success_correct = 0;
  long long success_incorrect = 0;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  double prop_correct() const {
    return n > 0 ? static_cast<double>(success_correct) / static_cast<double>(n) : 0.0;
  }
  std::string label() const { return std::to_string(num) + "/" + std::to_string(den); }
};

struct AgreementAnalysis {
  std::vector<AgreementBucket> buckets;  // ascending by proportion value
  long long excluded_rows = 0;           // rows with no observed latent ground truth

  json to_json() const {
    json arr = json::array();
    for (const auto& b : buckets) {
      arr.push_back({{"proportion", b.label()},
                     {"value", b.value()},
                     {"n", b.n},
                     {"success_correct", b.success_correct},
                     {"success_incorrect", b.success_incorrect},
                     {"prop_correct", b.prop_correct()}});
    }
    return json{{"buckets", arr}, {"excluded_rows", excluded_rows}};
  }
};

// latent_pred/latent_actual are [factor][row]; actual -1 marks missing
// ground truth. Agreement denominators count observed factors only.
inline AgreementAnalysis agreement_analysis(const std::vector<std::vector<int>>& latent_pred,
                                            const std::vector<std::vector<int>>& latent_actual,
                                            std::span<const std::uint8_t> success_correct) {
  if (latent_pred.size() != latent_actual.size() || latent_pred.empty()) {
    throw ValidationError("agreement_analysis: factor vectors misaligned or empty");
  }
  const std::size_t n_rows = success_correct.size();
  for (std::size_t f = 0; f < latent_pred.size(); ++f) {
    if (latent_pred[f].size() != n_rows || latent_actual[f].size() != n_rows) {
      throw ValidationError("agreement_analysis: row counts misaligned");
    }
  }
  std::map<std::pair<int, int>, AgreementBucket> buckets;
  AgreementAnalysis out;
  for (std::size_t r = 0; r < n_rows; ++r) {
    int observed = 0;
    int correct = 0;
    for (std::size_t f = 0; f < latent_pred.size(); ++f) {
      if (latent_actual[f][r] < 0) continue;
      ++observed;
      if (latent_pred[f][r] == latent_actual[f][r]) ++correct;
    }
    if (observed == 0) {
      ++out.excluded_rows;
      continue;
    }
    const int g = std::gcd(correct, observed);
    const std::pair<int, int> key = g > 0 ? std::make_pair(correct / g, observed / g)
                                          : std::make_pair(0, 1);
    AgreementBucket& b = buckets[key];
    b.num = key.first;
    b.den = key.second;
    ++b.n;
    if (success_correct[r]) ++b.success_correct;
    else ++b.success_incorrect;
  }
  for (auto& [key, b] : buckets) out.buckets.push_back(b);
  std::sort(out.buckets.begin(), out.buckets.end(),
            [](const AgreementBucket& a, const AgreementBucket& b) {
              if (a.value() != b.value()) return a.value() < b.value();
              return a.den < b.den;
            });
  return out;
}

struct DistanceBucket {
  int distance = 0;  // -1 = NA (missing ground truth)
  long long n = 0;
  long long success_correct = 0;

  double accuracy() const {
    return n > 0 ? static_cast<double>(success_correct) / static_cast<double>(n) : 0.0;
  }
  std::string label() const { return distance < 0 ? "NA" : std::to_string(distance); }
};

struct SensitivityEntry {
  LatentFactor factor = LatentFactor::ProtocolDeviation;
  std::vector<DistanceBucket> buckets;  // distances 0..K-1 then NA

  json to_json() const {
    json arr = json::array();
    for (const auto& b : buckets) {
      arr.push_back({{"distance", b.label()},
                     {"n", b.n},
                     {"success_correct", b.success_correct},
                     {"success_incorrect", b.n - b.success_correct},
                     {"accuracy", b.accuracy()}});
    }
    return json{{"factor", factor_id(factor)}, {"buckets", arr}};
  }
};

inline SensitivityEntry distance_sensitivity(const LatentTargetSpec& spec,
                                             std::span<const int> predicted,
                                             std::span<const int> actual,
                                             std::span<const std::uint8_t> success_correct) {
  if (predicted.size() != actual.size() || predicted.size() != success_correct.size()) {
    throw ValidationError("distance_sensitivity: inputs misaligned");
  }
  SensitivityEntry entry;
  entry.factor = spec.factor;
  entry.buckets.resize(static_cast<std::size_t>(spec.n_classes()) + 1);
  for (int d = 0; d < spec.n_classes(); ++d) entry.buckets[static_cast<std::size_t>(d)].distance = d;
  entry.buckets.back().distance = -1;  // NA
  for (std::size_t r = 0; r < predicted.size(); ++r) {
    DistanceBucket* b;
    if (actual[r] < 0) {
      b = &entry.buckets.back();
    } else {
      const int d = ordinal_distance(spec, predicted[r], actual[r]);
      b = &entry.buckets[static_cast<std::size_t>(d)];
    }
    ++b->n;
    if (success_correct[r]) ++b->success_correct;
  }
  return entry;
}

}  // namespace trialrisk
