#pragma once

// Typed schema + columnar dataset + CSV ingestion.
//
// Storage is columnar because the learners scan per feature. Every cell is
// either a value of the declared kind or an explicit Missing marker; in CSV
// form Missing is an empty field or the literal "NA" (case-sensitive).
// Categorical cells are stored as level codes into the schema's level list,
// boolean cells as 0/1, latent target cells as class indices into the
// factor's class order.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trialrisk/common.hpp"
#include "trialrisk/csv.hpp"
#include "trialrisk/targets.hpp"

namespace trialrisk {

using json = nlohmann::json;

enum class FeatureKind { Numeric, Categorical, Boolean };

enum class FeatureGroup { Therapy, Disease, Design, Endpoints, Participants, Sponsor, Site };

inline constexpr std::array<FeatureGroup, 7> kAllFeatureGroups = {
    FeatureGroup::Therapy,      FeatureGroup::Disease, FeatureGroup::Design,
    FeatureGroup::Endpoints,    FeatureGroup::Participants,
    FeatureGroup::Sponsor,      FeatureGroup::Site,
};

inline const std::string& feature_kind_name(FeatureKind k) {
  static const std::array<std::string, 3> names = {"numeric", "categorical", "boolean"};
  return names[static_cast<std::size_t>(k)];
}

inline FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "numeric") return FeatureKind::Numeric;
  if (name == "categorical") return FeatureKind::Categorical;
  if (name == "boolean") return FeatureKind::Boolean;
  throw ConfigError("unknown feature kind: " + name);
}

inline const std::string& feature_group_name(FeatureGroup g) {
  static const std::array<std::string, 7> names = {
      "therapy", "disease", "design", "endpoints", "participants", "sponsor", "site"};
  return names[static_cast<std::size_t>(g)];
}

inline FeatureGroup feature_group_from_name(const std::string& name) {
  for (FeatureGroup g : kAllFeatureGroups) {
    if (feature_group_name(g) == name) return g;
  }
  throw ConfigError("unknown feature group: " + name);
}

enum class Phase : int { I = 0, II = 1, III = 2 };

inline const std::string& phase_name(Phase p) {
  static const std::array<std::string, 3> names = {"I", "II", "III"};
  return names[static_cast<std::size_t>(p)];
}

inline Phase phase_from_name(const std::string& name) {
  if (name == "I") return Phase::I;
  if (name == "II") return Phase::II;
  if (name == "III") return Phase::III;
  throw ValidationError("unknown phase label: " + name);
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  FeatureGroup group = FeatureGroup::Design;
  std::vector<std::string> levels;  // categorical only

  int level_index(const std::string& value) const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] == value) return static_cast<int>(i);
    }
    return -1;
  }
};

struct LatentColumnSpec {
  std::string column;
  LatentFactor factor;
};

struct FeatureSchema {
  static constexpr int kSchemaVersion = 1;

  std::vector<FeatureSpec> features;
  std::vector<LatentColumnSpec> latent_targets;
  std::string success_column;
  std::string phase_column;

  int feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  int latent_index(LatentFactor f) const {
    for (std::size_t i = 0; i < latent_targets.size(); ++i) {
      if (latent_targets[i].factor == f) return static_cast<int>(i);
    }
    return -1;
  }

  void check() const {
    std::vector<std::string> seen;
    for (const auto& f : features) {
      if (f.name.empty()) throw ValidationError("schema: feature with empty name");
      if (std::find(seen.begin(), seen.end(), f.name) != seen.end()) {
        throw ValidationError("schema: duplicate feature name " + f.name);
      }
      seen.push_back(f.name);
      if (f.kind == FeatureKind::Categorical && f.levels.size() < 2) {
        throw ValidationError("schema: categorical feature " + f.name +
                              " must declare at least 2 levels");
      }
      if (f.kind != FeatureKind::Categorical && !f.levels.empty()) {
        throw ValidationError("schema: feature " + f.name +
                              " declares levels but is not categorical");
      }
    }
    if (success_column.empty()) throw ValidationError("schema: success_column missing");
    if (phase_column.empty()) throw ValidationError("schema: phase_column missing");
    auto reserved = [&](const std::string& col, const char* what) {
      if (feature_index(col) >= 0) {
        throw ValidationError(std::string("schema: ") + what + " column " + col +
                              " is also listed as a feature");
      }
    };
    reserved(success_column, "success");
    reserved(phase_column, "phase");
    for (const auto& lt : latent_targets) {
      reserved(lt.column, "latent target");
      if (lt.column == success_column || lt.column == phase_column) {
        throw ValidationError("schema: latent target column " + lt.column +
                              " collides with success/phase column");
      }
    }
    for (std::size_t i = 0; i < latent_targets.size(); ++i) {
      for (std::size_t j = i + 1; j < latent_targets.size(); ++j) {
        if (latent_targets[i].factor == latent_targets[j].factor ||
            latent_targets[i].column == latent_targets[j].column) {
          throw ValidationError("schema: duplicate latent target entry");
        }
      }
    }
  }

  json to_json() const {
    json features_json = json::array();
    for (const auto& f : features) {
      json item{{"name", f.name},
                {"kind", feature_kind_name(f.kind)},
                {"group", feature_group_name(f.group)}};
      if (f.kind == FeatureKind::Categorical) item["levels"] = f.levels;
      features_json.push_back(std::move(item));
    }
    json targets_json = json::array();
    for (const auto& lt : latent_targets) {
      targets_json.push_back({{"column", lt.column}, {"factor", factor_id(lt.factor)}});
    }
    return json{{"schema_version", kSchemaVersion},
                {"features", features_json},
                {"latent_targets", targets_json},
                {"success_column", success_column},
                {"phase_column", phase_column}};
  }

  static FeatureSchema from_json(const json& j) {
    if (!j.contains("schema_version")) {
      throw ParseError("schema: missing mandatory schema_version field");
    }
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion) {
      throw ParseError("schema: unsupported schema_version " + std::to_string(version) +
                       ", expected " + std::to_string(kSchemaVersion));
    }
    FeatureSchema schema;
    for (const auto& item : j.at("features")) {
      FeatureSpec f;
      f.name = item.at("name").get<std::string>();
      f.kind = feature_kind_from_name(item.at("kind").get<std::string>());
      f.group = feature_group_from_name(item.at("group").get<std::string>());
      if (item.contains("levels")) f.levels = item.at("levels").get<std::vector<std::string>>();
      schema.features.push_back(std::move(f));
    }
    for (const auto& item : j.at("latent_targets")) {
      schema.latent_targets.push_back(
          {item.at("column").get<std::string>(), factor_from_id(item.at("factor").get<std::string>())});
    }
    schema.success_column = j.at("success_column").get<std::string>();
    schema.phase_column = j.at("phase_column").get<std::string>();
    schema.check();
    return schema;
  }

  std::uint64_t fingerprint() const { return fnv1a64(to_json().dump()); }
};

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("schema: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("schema: " + path + ": " + e.what());
  }
  return FeatureSchema::from_json(j);
}

inline void save_schema(const FeatureSchema& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("schema: cannot write " + path);
  out << schema.to_json().dump(2) << '\n';
}

struct Column {
  FeatureKind kind = FeatureKind::Numeric;
  std::vector<double> num;       // kind == Numeric
  std::vector<std::int32_t> cat; // kind == Categorical (level code) or Boolean (0/1)
  std::vector<std::uint8_t> missing;

  std::size_t size() const { return missing.size(); }
};

struct TargetColumn {
  LatentFactor factor = LatentFactor::ProtocolDeviation;
  std::vector<std::int8_t> cls;  // class index in the factor's order
  std::vector<std::uint8_t> missing;
};

struct TabularDataset {
  std::uint64_t schema_fingerprint = 0;
  std::size_t n_rows = 0;
  std::vector<Column> columns;        // parallel to schema.features
  std::vector<TargetColumn> targets;  // parallel to schema.latent_targets
  std::vector<std::int8_t> success;
  std::vector<std::uint8_t> success_missing;
  std::vector<Phase> phase;
  std::vector<std::string> warnings;  // e.g. ignored extra CSV columns
};

struct Violation {
  std::string column;
  std::size_t row = 0;
  std::string reason;
};

namespace detail {

inline bool is_missing_token(const std::string& cell) { return cell.empty() || cell == "NA"; }

inline double parse_numeric_cell(const std::string& cell, const std::string& column,
                                 std::size_t row) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError("column " + column + ", row " + std::to_string(row) +
                          ": cannot parse numeric cell \"" + cell + "\"");
  }
  return value;
}

inline bool parse_boolean_cell(const std::string& cell, const std::string& column,
                               std::size_t row) {
  if (cell == "true" || cell == "True" || cell == "1") return true;
  if (cell == "false" || cell == "False" || cell == "0") return false;
  throw ValidationError("column " + column + ", row " + std::to_string(row) +
                        ": cannot parse boolean cell \"" + cell + "\"");
}

inline std::string format_numeric(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("numeric formatting failed");
  return std::string(buf, ptr);
}

}  // namespace detail

// Parses by declared kind; empty string and "NA" become Missing. Columns not
// named in the schema are skipped with a warning record.
inline TabularDataset load_csv(const std::string& path, const FeatureSchema& schema) {
  schema.check();
  CsvTable table = read_csv(path);

  std::map<std::string, std::size_t> header_pos;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (header_pos.count(table.header[i])) {
      throw ParseError("csv: duplicate header column " + table.header[i]);
    }
    header_pos[table.header[i]] = i;
  }

  TabularDataset ds;
  ds.schema_fingerprint = schema.fingerprint();
  ds.n_rows = table.rows.size();

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = header_pos.find(name);
    if (it == header_pos.end()) {
      throw ValidationError("csv: header is missing schema column " + name);
    }
    return it->second;
  };

  std::vector<std::size_t> feature_pos;
  for (const auto& f : schema.features) feature_pos.push_back(require(f.name));
  std::vector<std::size_t> target_pos;
  for (const auto& lt : schema.latent_targets) target_pos.push_back(require(lt.column));
  const std::size_t success_pos = require(schema.success_column);
  const std::size_t phase_pos = require(schema.phase_column);

  {
    std::vector<std::string> known;
    for (const auto& f : schema.features) known.push_back(f.name);
    for (const auto& lt : schema.latent_targets) known.push_back(lt.column);
    known.push_back(schema.success_column);
    known.push_back(schema.phase_column);
    for (const auto& col : table.header) {
      if (std::find(known.begin(), known.end(), col) == known.end()) {
        ds.warnings.push_back("ignored extra column: " + col);
      }
    }
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size()) {
      throw ParseError("csv: row " + std::to_string(r + 1) + " has " +
                       std::to_string(table.rows[r].size()) + " fields, expected " +
                       std::to_string(table.header.size()));
    }
  }

  ds.columns.resize(schema.features.size());
  for (std::size_t c = 0; c < schema.features.size(); ++c) {
    const FeatureSpec& spec = schema.features[c];
    Column& col = ds.columns[c];
    col.kind = spec.kind;
    col.missing.assign(ds.n_rows, 0);
    if (spec.kind == FeatureKind::Numeric) col.num.assign(ds.n_rows, 0.0);
    else col.cat.assign(ds.n_rows, 0);
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      const std::string& cell = table.rows[r][feature_pos[c]];
      if (detail::is_missing_token(cell)) {
        col.missing[r] = 1;
        continue;
      }
      switch (spec.kind) {
        case FeatureKind::Numeric:
          col.num[r] = detail::parse_numeric_cell(cell, spec.name, r + 1);
          break;
        case FeatureKind::Categorical: {
          const int code = spec.level_index(cell);
          if (code < 0) {
            throw ValidationError("column " + spec.name + ", row " + std::to_string(r + 1) +
                                  ": unknown categorical level \"" + cell + "\"");
          }
          col.cat[r] = code;
          break;
        }
        case FeatureKind::Boolean:
          col.cat[r] = detail::parse_boolean_cell(cell, spec.name, r + 1) ? 1 : 0;
          break;
      }
    }
  }

  ds.targets.resize(schema.latent_targets.size());
  for (std::size_t t = 0; t < schema.latent_targets.size(); ++t) {
    const LatentColumnSpec& lt = schema.latent_targets[t];
    const LatentTargetSpec& spec = target_spec(lt.factor);
    TargetColumn& col = ds.targets[t];
    col.factor = lt.factor;
    col.cls.assign(ds.n_rows, 0);
    col.missing.assign(ds.n_rows, 0);
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      const std::string& cell = table.rows[r][target_pos[t]];
      if (detail::is_missing_token(cell)) {
        col.missing[r] = 1;
        continue;
      }
      const int idx = spec.class_index(cell);
      if (idx < 0) {
        throw ValidationError("column " + lt.column + ", row " + std::to_string(r + 1) +
                              ": unknown class label \"" + cell + "\"");
      }
      col.cls[r] = static_cast<std::int8_t>(idx);
    }
  }

  ds.success.assign(ds.n_rows, 0);
  ds.success_missing.assign(ds.n_rows, 0);
  ds.phase.assign(ds.n_rows, Phase::I);
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    const std::string& success_cell = table.rows[r][success_pos];
    if (detail::is_missing_token(success_cell)) {
      ds.success_missing[r] = 1;
    } else if (success_cell == "0" || success_cell == "1") {
      ds.success[r] = static_cast<std::int8_t>(success_cell == "1" ? 1 : 0);
    } else {
      throw ValidationError("column " + schema.success_column + ", row " +
                            std::to_string(r + 1) + ": success label must be 0 or 1, got \"" +
                            success_cell + "\"");
    }
    const std::string& phase_cell = table.rows[r][phase_pos];
    if (detail::is_missing_token(phase_cell)) {
      throw ValidationError("column " + schema.phase_column + ", row " + std::to_string(r + 1) +
                            ": phase label is required");
    }
    ds.phase[r] = phase_from_name(phase_cell);
  }
  return ds;
}

inline void save_csv(const TabularDataset& ds, const FeatureSchema& schema,
                     const std::string& path) {
  std::vector<std::string> header;
  for (const auto& f : schema.features) header.push_back(f.name);
  for (const auto& lt : schema.latent_targets) header.push_back(lt.column);
  header.push_back(schema.success_column);
  header.push_back(schema.phase_column);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("csv: cannot write " + path);
  write_csv_row(out, header);
  std::vector<std::string> row(header.size());
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < schema.features.size(); ++c) {
      const Column& col = ds.columns[c];
      if (col.missing[r]) {
        row[k++] = "NA";
        continue;
      }
      switch (col.kind) {
        case FeatureKind::Numeric:
          row[k++] = detail::format_numeric(col.num[r]);
          break;
        case FeatureKind::Categorical:
          row[k++] = schema.features[c].levels[static_cast<std::size_t>(col.cat[r])];
          break;
        case FeatureKind::Boolean:
          row[k++] = col.cat[r] ? "true" : "false";
          break;
      }
    }
    for (std::size_t t = 0; t < ds.targets.size(); ++t) {
      const TargetColumn& col = ds.targets[t];
      row[k++] = col.missing[r]
                     ? "NA"
                     : target_spec(col.factor).class_labels[static_cast<std::size_t>(col.cls[r])];
    }
    row[k++] = ds.success_missing[r] ? "NA" : (ds.success[r] ? "1" : "0");
    row[k++] = phase_name(ds.phase[r]);
    write_csv_row(out, row);
  }
  if (!out) throw IoError("csv: write failed for " + path);
}

// Violations are data, not errors: the constructor path (load_csv) cannot
// produce them, but hand-built or corrupted datasets can.
inline std::vector<Violation> validate(const TabularDataset& ds, const FeatureSchema& schema) {
  std::vector<Violation> out;
  if (ds.columns.size() != schema.features.size()) {
    out.push_back({"", 0, "column count does not match schema"});
    return out;
  }
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    const Column& col = ds.columns[c];
    const FeatureSpec& spec = schema.features[c];
    const std::vector<std::size_t> lens = {
        col.missing.size(),
        spec.kind == FeatureKind::Numeric ? col.num.size() : col.cat.size()};
    for (std::size_t len : lens) {
      if (len != ds.n_rows) {
        out.push_back({spec.name, 0, "column length " + std::to_string(len) +
                                         " does not match n_rows"});
      }
    }
    if (col.kind != spec.kind) {
      out.push_back({spec.name, 0, "column kind does not match schema"});
      continue;
    }
    for (std::size_t r = 0; r < std::min(ds.n_rows, col.missing.size()); ++r) {
      if (col.missing[r]) continue;
      if (spec.kind == FeatureKind::Numeric) {
        if (r < col.num.size() && !std::isfinite(col.num[r])) {
          out.push_back({spec.name, r, "non-finite numeric cell"});
        }
      } else if (spec.kind == FeatureKind::Categorical) {
        if (r < col.cat.size() &&
            (col.cat[r] < 0 || col.cat[r] >= static_cast<std::int32_t>(spec.levels.size()))) {
          out.push_back({spec.name, r, "categorical code out of range"});
        }
      } else {
        if (r < col.cat.size() && col.cat[r] != 0 && col.cat[r] != 1) {
          out.push_back({spec.name, r, "boolean cell is not two-valued"});
        }
      }
    }
  }
  for (std::size_t t = 0; t < ds.targets.size(); ++t) {
    const TargetColumn& col = ds.targets[t];
    const LatentTargetSpec& spec = target_spec(col.factor);
    const std::string& name = t < schema.latent_targets.size()
                                  ? schema.latent_targets[t].column
                                  : factor_id(col.factor);
    if (col.cls.size() != ds.n_rows || col.missing.size() != ds.n_rows) {
      out.push_back({name, 0, "target column length does not match n_rows"});
      continue;
    }
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      if (!col.missing[r] && (col.cls[r] < 0 || col.cls[r] >= spec.n_classes())) {
        out.push_back({name, r, "target class index out of range"});
      }
    }
  }
  if (ds.success.size() != ds.n_rows || ds.success_missing.size() != ds.n_rows ||
      ds.phase.size() != ds.n_rows) {
    out.push_back({"", 0, "success/phase column length does not match n_rows"});
  } else {
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      if (!ds.success_missing[r] && ds.success[r] != 0 && ds.success[r] != 1) {
        out.push_back({schema.success_column, r, "success label must be 0 or 1"});
      }
    }
  }
  return out;
}

inline TabularDataset select_rows(const TabularDataset& ds, const std::vector<std::size_t>& rows) {
  TabularDataset out;
  out.schema_fingerprint = ds.schema_fingerprint;
  out.n_rows = rows.size();
  out.columns.resize(ds.columns.size());
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    const Column& src = ds.columns[c];
    Column& dst = out.columns[c];
    dst.kind = src.kind;
    dst.missing.reserve(rows.size());
    if (src.kind == FeatureKind::Numeric) dst.num.reserve(rows.size());
    else dst.cat.reserve(rows.size());
    for (std::size_t r : rows) {
      dst.missing.push_back(src.missing[r]);
      if (src.kind == FeatureKind::Numeric) dst.num.push_back(src.num[r]);
      else dst.cat.push_back(src.cat[r]);
    }
  }
  out.targets.resize(ds.targets.size());
  for (std::size_t t = 0; t < ds.targets.size(); ++t) {
    out.targets[t].factor = ds.targets[t].factor;
    for (std::size_t r : rows) {
      out.targets[t].cls.push_back(ds.targets[t].cls[r]);
      out.targets[t].missing.push_back(ds.targets[t].missing[r]);
    }
  }
  for (std::size_t r : rows) {
    out.success.push_back(ds.success[r]);
    out.success_missing.push_back(ds.success_missing[r]);
    out.phase.push_back(ds.phase[r]);
  }
  return out;
}

// Rows with the requested phase, original order; fingerprint is unchanged.
inline TabularDataset filter_phase(const TabularDataset& ds, Phase phase) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    if (ds.phase[r] == phase) rows.push_back(r);
  }
  return select_rows(ds, rows);
}

struct ColumnSummary {
  std::string name;
  double missing_fraction = 0.0;
  std::optional<double> mean;
  std::optional<double> sd;
  std::map<std::string, std::size_t> level_counts;  // categorical/boolean
};

inline std::vector<ColumnSummary> summarize(const TabularDataset& ds,
                                            const FeatureSchema& schema) {
  std::vector<ColumnSummary> out;
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    const Column& col = ds.columns[c];
    const FeatureSpec& spec = schema.features[c];
    ColumnSummary s;
    s.name = spec.name;
    std::size_t n_missing = 0;
    for (std::size_t r = 0; r < ds.n_rows; ++r) n_missing += col.missing[r] ? 1u : 0u;
    s.missing_fraction = ds.n_rows == 0 ? 0.0
                                        : static_cast<double>(n_missing) /
                                              static_cast<double>(ds.n_rows);
    const std::size_t n_obs = ds.n_rows - n_missing;
    if (spec.kind == FeatureKind::Numeric) {
      if (n_obs > 0) {
        double sum = 0.0;
        for (std::size_t r = 0; r < ds.n_rows; ++r) {
          if (!col.missing[r]) sum += col.num[r];
        }
        const double mean = sum / static_cast<double>(n_obs);
        double ss = 0.0;
        for (std::size_t r = 0; r < ds.n_rows; ++r) {
          if (!col.missing[r]) ss += (col.num[r] - mean) * (col.num[r] - mean);
        }
        s.mean = mean;
        s.sd = n_obs > 1 ? std::sqrt(ss / static_cast<double>(n_obs - 1)) : 0.0;
      }
    } else {
      for (std::size_t r = 0; r < ds.n_rows; ++r) {
        if (col.missing[r]) continue;
        const std::string label =
            spec.kind == FeatureKind::Boolean
                ? std::string(col.cat[r] ? "true" : "false")
                : spec.levels[static_cast<std::size_t>(col.cat[r])];
        ++s.level_counts[label];
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace trialrisk
