// Command-line front end for the pipeline: synth, diagnose, split, train,
// predict, evaluate.
//
// Every command writes only into its --out directory. Content outputs are
// deterministic given identical inputs and seed; wall-clock timestamps live
// in a separate run_info.json so determinism stays byte-testable.
//
// Exit codes: 0 ok, 2 validation error, 3 leakage violation, 4 I/O error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trialrisk/trialrisk.hpp"

namespace fs = std::filesystem;
using namespace trialrisk;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string data_path;
  std::string schema_path;
  std::string split_path;
  std::string artifact_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string phase;
  std::string factors = "4";
  std::string learner = "gbdt";
  std::string imputation;
  std::optional<double> threshold;
  double alpha = 0.05;
  int threads = 1;
  bool agreement = false;
  bool sensitivity = false;
  bool svg = false;
};

long long now_unix_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("--out directory is required");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir);
}

void write_json_file(const std::string& path, const json& j, int indent = 2) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(indent) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + path + ": " + e.what());
  }
  return j;
}

void write_run_info(const std::string& out_dir, const std::string& command, long long started_ms) {
  write_json_file(out_dir + "/run_info.json",
                  json{{"command", command},
                       {"started_unix_ms", started_ms},
                       {"finished_unix_ms", now_unix_ms()}});
}

std::vector<LatentFactor> parse_factors(const std::string& arg) {
  if (arg == "4") {
    return {kAllLatentFactors.begin(), kAllLatentFactors.end()};
  }
  if (arg == "3") {
    return {LatentFactor::ProtocolDeviation, LatentFactor::SaeOccurrence,
            LatentFactor::RecruitmentDeviation};
  }
  std::vector<LatentFactor> out;
  std::size_t pos = 0;
  while (pos <= arg.size()) {
    const std::size_t comma = std::min(arg.find(',', pos), arg.size());
    const std::string token = arg.substr(pos, comma - pos);
    if (!token.empty()) out.push_back(factor_from_id(token));
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("--factors: no factors parsed from \"" + arg + "\"");
  return out;
}

struct LoadedData {
  FeatureSchema schema;
  TabularDataset data;
};

LoadedData load_data(const CommonOpts& opts, const std::optional<Phase>& phase) {
  if (opts.schema_path.empty()) throw ConfigError("--schema is required");
  if (opts.data_path.empty()) throw ConfigError("--data is required");
  LoadedData loaded;
  loaded.schema = load_schema(opts.schema_path);
  loaded.data = load_csv(opts.data_path, loaded.schema);
  const auto violations = validate(loaded.data, loaded.schema);
  if (!violations.empty()) {
    throw ValidationError("dataset failed validation: column " + violations.front().column +
                          ", row " + std::to_string(violations.front().row) + ": " +
                          violations.front().reason);
  }
  if (phase.has_value()) loaded.data = filter_phase(loaded.data, *phase);
  return loaded;
}

CascadeConfig build_cascade_config(const CommonOpts& opts, const json& run_config,
                                   const std::optional<Phase>& phase, std::uint64_t seed) {
  CascadeConfig config;
  if (run_config.contains("cascade")) {
    config = CascadeConfig::from_json(run_config.at("cascade"));
  } else {
    LearnerConfig learner;
    learner.kind = learner_kind_from_name(opts.learner);
    learner.seed = seed;
    config = make_cascade_config(parse_factors(opts.factors), learner, learner);
  }
  // Flag overrides on top of the config document.
  if (!opts.factors.empty() && opts.factors != "4") {
    const auto factors = parse_factors(opts.factors);
    LearnerConfig l1_template = config.level1.empty() ? config.level2 : config.level1.begin()->second;
    config.factors = factors;
    for (LatentFactor f : factors) {
      if (!config.level1.count(f)) config.level1[f] = l1_template;
    }
  }
  if (!opts.imputation.empty()) config.imputation = ImputationSpec::from_name(opts.imputation);
  if (opts.threshold.has_value()) config.threshold = *opts.threshold;
  config.phase = phase;
  config.level2.seed = seed;
  for (auto& [f, cfg] : config.level1) cfg.seed = seed;
  config.check();
  return config;
}

json classification_to_json_or_null(const std::optional<ClassificationReport>& rep) {
  return rep.has_value() ? rep->to_json() : json(nullptr);
}

// Measures end-to-end metrics of a trained cascade on a row subset.
struct InferenceEval {
  std::optional<ClassificationReport> classification;
  long long rows = 0;
  long long missing_success = 0;
};

InferenceEval evaluate_rows(const TrainedCascade& tc, const TabularDataset& ds,
                            const FeatureSchema& schema, const std::vector<std::uint32_t>& rows) {
  InferenceEval eval;
  const TabularDataset subset = select_rows(ds, {rows.begin(), rows.end()});
  const CascadePredictions preds = predict(tc, subset, schema);
  std::vector<int> predicted, actual;
  for (std::size_t i = 0; i < subset.n_rows; ++i) {
    if (subset.success_missing[i]) {
      ++eval.missing_success;
      continue;
    }
    predicted.push_back(preds.predicted[i]);
    actual.push_back(subset.success[i]);
  }
  eval.rows = static_cast<long long>(predicted.size());
  if (!predicted.empty()) eval.classification = compute_report(predicted, actual, 2);
  return eval;
}

int cmd_synth(const CommonOpts& opts) {
  const long long started = now_unix_ms();
  ensure_out_dir(opts.out_dir);
  GeneratorConfig config;
  if (!opts.config_path.empty()) {
    const json j = load_json_file(opts.config_path);
    config = GeneratorConfig::from_json(j.contains("generator") ? j.at("generator") : j);
  }
  if (opts.seed.has_value()) config.seed = *opts.seed;
  const Generated gen = generate(config);
  write_generated(gen, opts.out_dir);
  write_json_file(opts.out_dir + "/generator_config.json", config.to_json());
  for (const auto& w : gen.warnings) std::cerr << "warning: " << w << '\n';
  write_run_info(opts.out_dir, "synth", started);
  std::cout << "wrote " << gen.data.n_rows << " rows to " << opts.out_dir << "/data.csv\n";
  return 0;
}

int cmd_diagnose(const CommonOpts& opts) {
  const long long started = now_unix_ms();
  ensure_out_dir(opts.out_dir);
  const LoadedData loaded = load_data(opts, std::nullopt);
  const MissingnessReport report = diagnose(loaded.data, loaded.schema, opts.alpha);
  write_json_file(opts.out_dir + "/missingness_report.json", report.to_json());
  write_run_info(opts.out_dir, "diagnose", started);
  std::size_t flagged = 0;
  for (const auto& e : report.entries) flagged += e.flag == MechanismFlag::MarEvidence ? 1u : 0u;
  std::cout << report.entries.size() << " features diagnosed, " << flagged
            << " with MAR evidence\n";
  return 0;
}

int cmd_split(const CommonOpts& opts) {
  const long long started = now_unix_ms();
  ensure_out_dir(opts.out_dir);
  std::optional<Phase> phase;
  if (!opts.phase.empty()) phase = phase_from_name(opts.phase);
  const LoadedData loaded = load_data(opts, phase);
  const std::uint64_t seed = opts.seed.value_or(0);
  const SplitPlan plan =
      make_split(loaded.data, loaded.schema, loaded.schema.success_column, seed);
  const auto violations = verify_no_leakage(plan, loaded.data);
  if (!violations.empty()) throw LeakageError("split: " + violations.front());
  save_split_plan(plan, opts.out_dir + "/split_plan.json");
  write_run_info(opts.out_dir, "split", started);
  std::cout << "split sizes " << plan.rows(Part::L1Train).size() << "/"
            << plan.rows(Part::L1Valid).size() << "/" << plan.rows(Part::InferenceTest).size()
            << "\n";
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  const long long started = now_unix_ms();
  ensure_out_dir(opts.out_dir);
  json run_config = json::object();
  if (!opts.config_path.empty()) run_config = load_json_file(opts.config_path);

  std::optional<Phase> phase;
  if (!opts.phase.empty()) phase = phase_from_name(opts.phase);
  else if (run_config.contains("phase") && !run_config.at("phase").is_null()) {
    phase = phase_from_name(run_config.at("phase").get<std::string>());
  }
  const std::uint64_t seed =
      opts.seed.has_value() ? *opts.seed : run_config.value("seed", std::uint64_t{0});

  const LoadedData loaded = load_data(opts, phase);

  SplitPlan plan;
  if (!opts.split_path.empty()) {
    plan = load_split_plan(opts.split_path);
  } else {
    std::array<double, 3> fractions = {0.4, 0.5, 0.1};
    if (run_config.contains("split") && run_config.at("split").contains("fractions")) {
      fractions = run_config.at("split").at("fractions").get<std::array<double, 3>>();
    }
    plan = make_split(loaded.data, loaded.schema, loaded.schema.success_column, seed, fractions);
  }
  {
    const auto violations = verify_no_leakage(plan, loaded.data);
    if (!violations.empty()) throw LeakageError("train: aborting, " + violations.front());
  }

  const CascadeConfig config = build_cascade_config(opts, run_config, phase, seed);
  CascadeTrainResult result = train_cascade(loaded.data, loaded.schema, config, plan, opts.threads);

  save_artifact(result.cascade, opts.out_dir + "/artifact.json");
  save_split_plan(plan, opts.out_dir + "/split_plan.json");

  const InferenceEval inference =
      evaluate_rows(result.cascade, loaded.data, loaded.schema, plan.rows(Part::InferenceTest));

  json level1_json = json::object();
  for (const auto& [f, rep] : result.level1_validation) level1_json[factor_id(f)] = rep.to_json();
  write_json_file(opts.out_dir + "/validation_report.json",
                  json{{"seed", seed},
                       {"config_digest", hex64(config.digest())},
                       {"imputation_arm", config.imputation.name()},
                       {"threshold", config.threshold},
                       {"level1", level1_json},
                       {"level2", result.level2_validation.to_json()},
                       {"inference",
                        {{"classification", classification_to_json_or_null(inference.classification)},
                         {"rows", inference.rows},
                         {"excluded_missing_success", inference.missing_success}}}});
  write_run_info(opts.out_dir, "train", started);
  std::cout << "artifact written; level-2 holdout accuracy "
            << result.level2_validation.accuracy;
  if (inference.classification.has_value()) {
    std::cout << ", inference accuracy " << inference.classification->accuracy;
  }
  std::cout << "\n";
  return 0;
}

int cmd_predict(const CommonOpts& opts) {
  const long long started = now_unix_ms();
  ensure_out_dir(opts.out_dir);
  if (opts.artifact_path.empty()) throw ConfigError("--artifact is required");
  const TrainedCascade tc = load_artifact(opts.artifact_path);
  const LoadedData loaded = load_data(opts, std::nullopt);
  const CascadePredictions preds = predict(tc, loaded.data, loaded.schema);

  std::vector<std::string> header = {"row"};
  for (LatentFactor f : preds.factors) {
    const LatentTargetSpec& spec = target_spec(f);
    header.push_back(factor_id(f) + "_class");
    for (const auto& label : spec.class_labels) header.push_back(factor_id(f) + "_p_" + label);
  }
  header.push_back("p_op");
  header.push_back("predicted");

  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 0; r < loaded.data.n_rows; ++r) {
    std::vector<std::string> row = {std::to_string(r)};
    for (LatentFactor f : preds.factors) {
      const LatentTargetSpec& spec = target_spec(f);
      const LatentPredictions& lp = preds.latent.at(f);
      row.push_back(spec.class_labels[static_cast<std::size_t>(lp.cls[r])]);
      for (int k = 0; k < spec.n_classes(); ++k) {
        row.push_back(detail::format_numeric(lp.proba[r][static_cast<std::size_t>(k)]));
      }
    }
    row.push_back(detail::format_numeric(preds.p_op[r]));
    row.push_back(std::to_string(preds.predicted[r]));
    rows.push_back(std::move(row));
  }
  write_csv(opts.out_dir + "/predictions.csv", header, rows);
  write_run_info(opts.out_dir, "predict", started);
  std::cout << "wrote " << rows.size() << " predictions\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts) {
  const long long started = now_unix_ms();
  ensure_out_dir(opts.out_dir);
  if (opts.artifact_path.empty()) throw ConfigError("--artifact is required");
  const TrainedCascade tc = load_artifact(opts.artifact_path);
  const LoadedData loaded = load_data(opts, tc.config.phase);

  std::vector<std::uint32_t> rows;
  if (!opts.split_path.empty()) {
    const SplitPlan plan = load_split_plan(opts.split_path);
    const auto violations = verify_no_leakage(plan, loaded.data);
    if (!violations.empty()) throw LeakageError("evaluate: " + violations.front());
    rows = plan.rows(Part::InferenceTest);
  } else {
    rows.resize(loaded.data.n_rows);
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = static_cast<std::uint32_t>(r);
  }

  const TabularDataset subset = select_rows(loaded.data, {rows.begin(), rows.end()});
  const CascadePredictions preds = predict(tc, subset, loaded.schema);

  EvaluationReport report;
  report.run_id = hex64(tc.config.digest() ^ tc.split_fingerprint);
  report.phase = tc.config.phase;
  report.config_digest = hex64(tc.config.digest());
  report.threshold = opts.threshold.value_or(tc.config.threshold);

  // Rows with an observed success label drive every analysis.
  std::vector<std::size_t> scored;
  std::vector<int> predicted, actual;
  for (std::size_t i = 0; i < subset.n_rows; ++i) {
    if (subset.success_missing[i]) {
      ++report.excluded_missing_success;
      continue;
    }
    scored.push_back(i);
    predicted.push_back(preds.p_op[i] >= report.threshold ? 1 : 0);
    actual.push_back(subset.success[i]);
  }
  if (predicted.empty()) throw ValidationError("evaluate: no rows with observed success label");
  report.rows_evaluated = static_cast<long long>(predicted.size());
  report.classification = compute_report(predicted, actual, 2);

  std::vector<std::uint8_t> success_correct(scored.size(), 0);
  for (std::size_t i = 0; i < scored.size(); ++i) {
    success_correct[i] = predicted[i] == actual[i] ? 1 : 0;
  }

  if (opts.agreement || opts.sensitivity) {
    std::vector<std::vector<int>> latent_pred, latent_actual;
    for (LatentFactor f : tc.config.factors) {
      const int t = loaded.schema.latent_index(f);
      const TargetColumn& target = subset.targets[static_cast<std::size_t>(t)];
      std::vector<int> p(scored.size()), a(scored.size());
      for (std::size_t i = 0; i < scored.size(); ++i) {
        p[i] = preds.latent.at(f).cls[scored[i]];
        a[i] = target.missing[scored[i]] ? -1 : target.cls[scored[i]];
      }
      if (opts.sensitivity) {
        report.sensitivity.push_back(distance_sensitivity(target_spec(f), p, a, success_correct));
      }
      latent_pred.push_back(std::move(p));
      latent_actual.push_back(std::move(a));
    }
    if (opts.agreement) {
      report.agreement = agreement_analysis(latent_pred, latent_actual, success_correct);
    }
  }

  ReportFormats formats;
  formats.svg = opts.svg;
  emit_report(report, opts.out_dir, formats);
  write_run_info(opts.out_dir, "evaluate", started);
  std::cout << "evaluated " << report.rows_evaluated << " rows, accuracy "
            << report.classification.accuracy << "\n";
  return 0;
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts, bool with_data) {
  cmd->add_option("--config", opts.config_path, "run config document (JSON)");
  cmd->add_option("--out", opts.out_dir, "output directory")->required();
  cmd->add_option("--seed", opts.seed, "seed override");
  cmd->add_option("--threads", opts.threads, "worker threads (never affects results)");
  if (with_data) {
    cmd->add_option("--data", opts.data_path, "dataset CSV");
    cmd->add_option("--schema", opts.schema_path, "schema JSON");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical latent risk-aware pipeline for clinical-trial operational success"};
  app.require_subcommand(1);

  CommonOpts opts;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic trial portfolio");
  add_common_flags(synth, opts, false);

  CLI::App* diagnose_cmd = app.add_subcommand("diagnose", "missingness mechanism report");
  add_common_flags(diagnose_cmd, opts, true);
  diagnose_cmd->add_option("--alpha", opts.alpha, "significance level");

  CLI::App* split = app.add_subcommand("split", "staged 40/50/10 stratified split");
  add_common_flags(split, opts, true);
  split->add_option("--phase", opts.phase, "restrict to phase {I|II|III}");

  CLI::App* train = app.add_subcommand("train", "train the two-level cascade");
  add_common_flags(train, opts, true);
  train->add_option("--split", opts.split_path, "existing split plan JSON");
  train->add_option("--phase", opts.phase, "restrict to phase {I|II|III}");
  train->add_option("--factors", opts.factors, "3, 4, or comma-separated factor ids");
  train->add_option("--learner", opts.learner, "gbdt or ebm")
      ->check(CLI::IsMember({"gbdt", "ebm"}));
  train->add_option("--imputation", opts.imputation, "none, mean, mode, or knn");
  train->add_flag_callback("--no-imputation", [&opts] { opts.imputation = "none"; },
                           "alias for --imputation none");
  train->add_option("--threshold", opts.threshold, "decision threshold for class 1");

  CLI::App* predict_cmd = app.add_subcommand("predict", "per-row cascade outputs as CSV");
  add_common_flags(predict_cmd, opts, true);
  predict_cmd->add_option("--artifact", opts.artifact_path, "trained cascade artifact")->required();

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "metrics and figure-style analyses");
  add_common_flags(evaluate_cmd, opts, true);
  evaluate_cmd->add_option("--artifact", opts.artifact_path, "trained cascade artifact")->required();
  evaluate_cmd->add_option("--split", opts.split_path, "split plan; evaluates InferenceTest rows");
  evaluate_cmd->add_option("--threshold", opts.threshold, "decision threshold override");
  evaluate_cmd->add_flag("--agreement", opts.agreement, "agreement-bucket analysis");
  evaluate_cmd->add_flag("--sensitivity", opts.sensitivity, "ordinal-distance analysis");
  evaluate_cmd->add_flag("--svg", opts.svg, "emit SVG charts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(opts);
    if (diagnose_cmd->parsed()) return cmd_diagnose(opts);
    if (split->parsed()) return cmd_split(opts);
    if (train->parsed()) return cmd_train(opts);
    if (predict_cmd->parsed()) return cmd_predict(opts);
    if (evaluate_cmd->parsed()) return cmd_evaluate(opts);
  } catch (const LeakageError& e) {
    std::cerr << "leakage violation: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 4;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
