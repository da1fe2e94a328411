#pragma once

// The four latent operational risk targets and their encodings.
//
// Protocol deviation and SAE occurrence are binary. Recruitment deviation
// and dropout rate are ordinal with four classes each, cut from the
// underlying continuous quantity (deviation fraction from planned
// enrollment; dropout percentage). Class order is fixed and is what
// ordinal_distance measures over.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trialrisk/common.hpp"

namespace trialrisk {

enum class LatentFactor : int {
  ProtocolDeviation = 0,
  SaeOccurrence = 1,
  RecruitmentDeviation = 2,
  DropoutRate = 3,
};

inline constexpr std::array<LatentFactor, 4> kAllLatentFactors = {
    LatentFactor::ProtocolDeviation,
    LatentFactor::SaeOccurrence,
    LatentFactor::RecruitmentDeviation,
    LatentFactor::DropoutRate,
};

inline const std::string& factor_id(LatentFactor f) {
  static const std::array<std::string, 4> ids = {
      "protocol_deviation", "sae_occurrence", "recruitment_deviation", "dropout_rate"};
  return ids[static_cast<std::size_t>(f)];
}

inline LatentFactor factor_from_id(const std::string& id) {
  for (LatentFactor f : kAllLatentFactors) {
    if (factor_id(f) == id) return f;
  }
  throw ConfigError("unknown latent factor id: " + id);
}

enum class TargetEncoding { Binary, Ordinal4 };

struct LatentTargetSpec {
  LatentFactor factor;
  TargetEncoding encoding;
  std::vector<std::string> class_labels;  // index = class, fixed order

  int n_classes() const { return static_cast<int>(class_labels.size()); }

  int class_index(const std::string& label) const {
    for (int i = 0; i < n_classes(); ++i) {
      if (class_labels[static_cast<std::size_t>(i)] == label) return i;
    }
    return -1;
  }
};

inline const LatentTargetSpec& target_spec(LatentFactor f) {
  static const std::array<LatentTargetSpec, 4> specs = {{
      {LatentFactor::ProtocolDeviation, TargetEncoding::Binary, {"False", "True"}},
      {LatentFactor::SaeOccurrence, TargetEncoding::Binary, {"False", "True"}},
      {LatentFactor::RecruitmentDeviation,
       TargetEncoding::Ordinal4,
       {"AboveTarget", "OnTarget", "BelowTarget", "SeverelyBelowTarget"}},
      {LatentFactor::DropoutRate, TargetEncoding::Ordinal4, {"NoDropout", "Low", "Moderate", "High"}},
  }};
  return specs[static_cast<std::size_t>(f)];
}

// Boundary constants. Recruitment keeps +/-5% inside OnTarget and exactly
// -30% inside BelowTarget (closed on the side nearer zero); the dropout
// outer bounds are strict, so 10 and 40 both land in Moderate.
inline constexpr double kRecruitmentOnTargetBand = 0.05;
inline constexpr double kRecruitmentSevereShortfall = 0.30;
inline constexpr double kDropoutLowCutPct = 10.0;
inline constexpr double kDropoutHighCutPct = 40.0;

enum class RecruitmentClass : int { AboveTarget = 0, OnTarget = 1, BelowTarget = 2, SeverelyBelowTarget = 3 };
enum class DropoutClass : int { NoDropout = 0, Low = 1, Moderate = 2, High = 3 };

// One bin per class over the underlying continuous quantity. Bounds may be
// infinite; the closed flags say whether the bound itself belongs to the bin.
struct OrdinalBin {
  double lo;
  double hi;
  bool lo_closed;
  bool hi_closed;

  bool contains(double x) const {
    const bool above_lo = lo_closed ? x >= lo : x > lo;
    const bool below_hi = hi_closed ? x <= hi : x < hi;
    return above_lo && below_hi;
  }
};

struct OrdinalBins {
  std::vector<OrdinalBin> bins;  // index = class index

  int classify(double x) const {
    for (std::size_t i = 0; i < bins.size(); ++i) {
      if (bins[i].contains(x)) return static_cast<int>(i);
    }
    throw ValidationError("ordinal bins do not cover value " + std::to_string(x));
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Over the deviation fraction d = (enrolled - planned) / planned.
inline const OrdinalBins& recruitment_bins() {
  static const OrdinalBins bins{{
      {kRecruitmentOnTargetBand, kInf, false, false},                          // AboveTarget
      {-kRecruitmentOnTargetBand, kRecruitmentOnTargetBand, true, true},       // OnTarget
      {-kRecruitmentSevereShortfall, -kRecruitmentOnTargetBand, true, false},  // BelowTarget
      {-kInf, -kRecruitmentSevereShortfall, false, false},                     // SeverelyBelowTarget
  }};
  return bins;
}

// Over the percentage r = 100 * dropouts / enrolled.
inline const OrdinalBins& dropout_bins() {
  static const OrdinalBins bins{{
      {0.0, 0.0, true, true},                          // NoDropout
      {0.0, kDropoutLowCutPct, false, false},          // Low
      {kDropoutLowCutPct, kDropoutHighCutPct, true, true},  // Moderate
      {kDropoutHighCutPct, kInf, false, false},        // High
  }};
  return bins;
}

inline RecruitmentClass encode_recruitment(long long enrolled, long long planned) {
  if (planned <= 0) throw ValidationError("encode_recruitment: planned enrollment must be positive");
  if (enrolled < 0) throw ValidationError("encode_recruitment: enrolled count must be non-negative");
  const double deviation =
      static_cast<double>(enrolled - planned) / static_cast<double>(planned);
  return static_cast<RecruitmentClass>(recruitment_bins().classify(deviation));
}

inline DropoutClass encode_dropout(long long dropouts, long long enrolled) {
  if (enrolled <= 0) throw ValidationError("encode_dropout: enrolled count must be positive");
  if (dropouts < 0 || dropouts > enrolled) {
    throw ValidationError("encode_dropout: dropouts must be in [0, enrolled]");
  }
  const double rate = 100.0 * static_cast<double>(dropouts) / static_cast<double>(enrolled);
  return static_cast<DropoutClass>(dropout_bins().classify(rate));
}

inline int encode_binary(bool flag) { return flag ? 1 : 0; }

// Missing raw flags propagate; labels are never fabricated.
inline std::optional<int> encode_binary(std::optional<bool> flag) {
  if (!flag.has_value()) return std::nullopt;
  return encode_binary(*flag);
}

inline int ordinal_distance(const LatentTargetSpec& spec, int predicted, int actual) {
  if (predicted < 0 || predicted >= spec.n_classes() || actual < 0 || actual >= spec.n_classes()) {
    throw ValidationError("ordinal_distance: class index out of range for " +
                          factor_id(spec.factor));
  }
  return predicted >= actual ? predicted - actual : actual - predicted;
}

struct ClassValue {
  LatentFactor factor;
  int index;
};

inline int ordinal_distance(ClassValue predicted, ClassValue actual) {
  if (predicted.factor != actual.factor) {
    throw ValidationError("ordinal_distance: classes belong to different target specs");
  }
  return ordinal_distance(target_spec(predicted.factor), predicted.index, actual.index);
}

}  // namespace trialrisk
