#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "trialrisk/csv.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = TRIALRISK_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::path("cli_ws_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string operator/(const std::string& sub) const { return (root / sub).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

json load_json(const std::string& path) { return json::parse(slurp(path)); }

}  // namespace

TEST_CASE("synth writes dataset, schema and ground truth deterministically") {
  Workspace ws("synth");
  write_file(ws / "gen.json", R"({"n_rows": 300, "mcar_rate": 0.1, "seed": 5})");

  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "a")) == 0);
  for (const char* f : {"data.csv", "schema.json", "ground_truth.json", "run_info.json"}) {
    CHECK(fs::exists(fs::path(ws / "a") / f));
  }

  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "b")) == 0);
  CHECK(slurp(ws / "a/data.csv") == slurp(ws / "b/data.csv"));  // byte-identical rerun

  REQUIRE(run("synth --config " + (ws / "gen.json") + " --seed 6 --out " + (ws / "c")) == 0);
  CHECK(slurp(ws / "a/data.csv") != slurp(ws / "c/data.csv"));
}

TEST_CASE("missing config file exits nonzero and names the path") {
  Workspace ws("badcfg");
  const std::string cmd = kCli + " synth --config " + (ws / "nope.json") + " --out " +
                          (ws / "out") + " 2> " + (ws / "err.txt");
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 4);
  CHECK(slurp(ws / "err.txt").find("nope.json") != std::string::npos);
}

TEST_CASE("train, evaluate and predict work end to end") {
  Workspace ws("train");
  write_file(ws / "gen.json",
             R"({"n_rows": 700, "seed": 9, "label_missing_rate": [0.1, 0.1, 0.1, 0.1]})");
  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "data")) == 0);

  const std::string data_args =
      " --data " + (ws / "data/data.csv") + " --schema " + (ws / "data/schema.json");

  REQUIRE(run("train" + data_args + " --seed 3 --out " + (ws / "run")) == 0);
  CHECK(fs::exists(fs::path(ws / "run") / "artifact.json"));
  CHECK(fs::exists(fs::path(ws / "run") / "split_plan.json"));
  const json report = load_json(ws / "run/validation_report.json");
  CHECK(report.contains("level1"));
  CHECK(report.contains("level2"));
  CHECK(report.at("inference").at("classification").is_object());

  // evaluate on the recorded split reproduces the recorded inference metrics
  REQUIRE(run("evaluate" + data_args + " --artifact " + (ws / "run/artifact.json") +
              " --split " + (ws / "run/split_plan.json") + " --agreement --sensitivity --svg" +
              " --out " + (ws / "eval")) == 0);
  const json eval_report = load_json(ws / "eval/report.json");
  CHECK(eval_report.at("classification") == report.at("inference").at("classification"));
  CHECK(eval_report.at("agreement").is_array());
  CHECK_FALSE(eval_report.at("agreement").empty());
  CHECK(eval_report.at("sensitivity").contains("dropout_rate"));
  CHECK(fs::exists(fs::path(ws / "eval") / "agreement.svg"));

  // predict emits one row per input row
  REQUIRE(run("predict" + data_args + " --artifact " + (ws / "run/artifact.json") + " --out " +
              (ws / "pred")) == 0);
  const trialrisk::CsvTable preds = trialrisk::read_csv(ws / "pred/predictions.csv");
  CHECK(preds.rows.size() == 700);
  CHECK(std::find(preds.header.begin(), preds.header.end(), "p_op") != preds.header.end());
}

TEST_CASE("three- and four-factor artifacts differ by the expected width") {
  Workspace ws("factors");
  write_file(ws / "gen.json", R"({"n_rows": 500, "seed": 12})");
  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "data")) == 0);
  const std::string data_args =
      " --data " + (ws / "data/data.csv") + " --schema " + (ws / "data/schema.json");

  REQUIRE(run("train" + data_args + " --seed 1 --factors 3 --out " + (ws / "f3")) == 0);
  REQUIRE(run("train" + data_args + " --seed 1 --factors 4 --out " + (ws / "f4")) == 0);
  const json a3 = load_json(ws / "f3/artifact.json");
  const json a4 = load_json(ws / "f4/artifact.json");
  const std::size_t w3 = a3.at("augmented_feature_names").size();
  const std::size_t w4 = a4.at("augmented_feature_names").size();
  CHECK(w4 - w3 == 5);  // dropout: 1 label + 4 probabilities
}

TEST_CASE("determinism: identical seeds give byte-identical artifacts and reports") {
  Workspace ws("determinism");
  write_file(ws / "gen.json", R"({"n_rows": 400, "seed": 31, "mcar_rate": 0.1})");
  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "data")) == 0);
  const std::string data_args =
      " --data " + (ws / "data/data.csv") + " --schema " + (ws / "data/schema.json");

  REQUIRE(run("train" + data_args + " --seed 8 --threads 1 --out " + (ws / "r1")) == 0);
  REQUIRE(run("train" + data_args + " --seed 8 --threads 4 --out " + (ws / "r2")) == 0);
  CHECK(slurp(ws / "r1/artifact.json") == slurp(ws / "r2/artifact.json"));
  CHECK(slurp(ws / "r1/validation_report.json") == slurp(ws / "r2/validation_report.json"));
  CHECK(slurp(ws / "r1/split_plan.json") == slurp(ws / "r2/split_plan.json"));
}

TEST_CASE("validation failures exit with code 2") {
  Workspace ws("baddata");
  write_file(ws / "gen.json", R"({"n_rows": 60, "seed": 2})");
  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "data")) == 0);
  // corrupt one numeric cell
  std::string csv = slurp(ws / "data/data.csv");
  const std::size_t pos = csv.find('\n') + 1;
  csv.replace(pos, csv.find(',', pos) - pos, "not_a_number");
  write_file(ws / "data/data.csv", csv);
  CHECK(run("train --data " + (ws / "data/data.csv") + " --schema " + (ws / "data/schema.json") +
            " --out " + (ws / "run")) == 2);
}

TEST_CASE("diagnose reports planted MAR structure") {
  Workspace ws("diagnose");
  write_file(ws / "gen.json",
             R"({"n_rows": 1500, "seed": 44,
                 "mar_specs": [{"masked_feature": "num_03", "driver_feature": "num_01", "slope": 3.0}]})");
  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "data")) == 0);
  REQUIRE(run("diagnose --data " + (ws / "data/data.csv") + " --schema " +
              (ws / "data/schema.json") + " --out " + (ws / "diag")) == 0);
  const json report = load_json(ws / "diag/missingness_report.json");
  CHECK(report.at("features").at("num_03").at("mechanism_flag") == "mar_evidence");
}

TEST_CASE("imputation arms complete and are recorded") {
  Workspace ws("arms");
  write_file(ws / "gen.json", R"({"n_rows": 500, "seed": 7, "mcar_rate": 0.2})");
  REQUIRE(run("synth --config " + (ws / "gen.json") + " --out " + (ws / "data")) == 0);
  const std::string data_args =
      " --data " + (ws / "data/data.csv") + " --schema " + (ws / "data/schema.json");

  REQUIRE(run("train" + data_args + " --seed 5 --no-imputation --out " + (ws / "native")) == 0);
  REQUIRE(run("train" + data_args + " --seed 5 --imputation knn --out " + (ws / "knn")) == 0);
  CHECK(load_json(ws / "native/validation_report.json").at("imputation_arm") == "none");
  CHECK(load_json(ws / "knn/validation_report.json").at("imputation_arm") == "knn");
  const json artifact = load_json(ws / "knn/artifact.json");
  CHECK_FALSE(artifact.at("imputer").is_null());
}
