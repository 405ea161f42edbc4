#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "oobval/cli.hpp"
#include "oobval/dataset.hpp"
#include "oobval/ensemble.hpp"
#include "oobval/experiments.hpp"
#include "oobval/valuation.hpp"

using namespace oobval;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("oobval_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::filesystem::path write_json(const std::string& name, const json& j) {
  const auto p = std::filesystem::temp_directory_path() / ("oobval_cli_" + name);
  std::ofstream out(p);
  out << j.dump(2);
  return p;
}

RunConfig tiny_synth_config(const std::string& out_dir) {
  RunConfig c;
  c.synth_n = 60;
  c.synth_d = 4;
  c.n_test = 50;
  c.trees = 30;
  c.out_dir = out_dir;
  return c;
}

json report_of(const std::filesystem::path& out_dir) {
  std::ifstream in(out_dir / "report.json");
  REQUIRE(in.good());
  return json::parse(in);
}

}  // namespace

TEST_CASE("config serialization round-trips every field") {
  RunConfig c;
  c.data = "somewhere.csv";
  c.labels = "3";
  c.has_header = false;
  c.synth_n = 42;
  c.synth_class_sep = 1.25;
  c.trees = 7;
  c.feature_ratio = 0.3;
  c.weak_learner = "logistic";
  c.tree_max_depth = 9;
  c.score_fn = "dist-reg-accuracy";
  c.impute_missing = true;
  c.fix_budgets = {0.0, 0.5};
  c.fix_mode = "column_mean";
  c.image_channels = 3;
  c.trigger_value = 0.75;
  c.oracle_instances = 5;
  c.seed = 31337;
  c.threads = 2;
  c.out_dir = "elsewhere";

  const json j = config_to_json(c);
  const RunConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.data == c.data);
  CHECK(back.labels == c.labels);
  CHECK(back.has_header == c.has_header);
  CHECK(back.fix_budgets == c.fix_budgets);
  CHECK(back.trigger_value == c.trigger_value);
  CHECK(back.seed == c.seed);
}

TEST_CASE("unknown config keys are rejected") {
  json j = config_to_json(RunConfig{});
  j["tres"] = 100;  // typo for trees
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("tres") != std::string::npos);
  }
}

TEST_CASE("wrongly typed config values name the key") {
  json j;
  j["trees"] = "many";
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("trees") != std::string::npos);
  }

  json j2;
  j2["fix_budgets"] = 0.5;  // must be an array
  CHECK_THROWS_AS(config_from_json(j2), ConfigError);
}

TEST_CASE("config files load with key tracking") {
  json j;
  j["trees"] = 12;
  j["score_fn"] = "neg-squared-error";
  const auto p = write_json("load.json", j);

  std::set<std::string> seen;
  const RunConfig c = load_config_file(p.string(), &seen);
  CHECK(c.trees == 12);
  CHECK(c.score_fn == "neg-squared-error");
  CHECK(c.feature_ratio == 0.5);  // untouched default
  CHECK(seen == std::set<std::string>{"trees", "score_fn"});

  CHECK_THROWS_AS(load_config_file("/nonexistent/config.json", nullptr), ConfigError);

  const auto broken = std::filesystem::temp_directory_path() / "oobval_cli_broken.json";
  std::ofstream(broken) << "{not json";
  CHECK_THROWS_AS(load_config_file(broken.string(), nullptr), ConfigError);
}

TEST_CASE("config validation rejects out-of-range settings") {
  RunConfig c;
  c.trees = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.feature_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.weak_learner = "forest";
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.score_fn = "f1";
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.fix_budgets = {0.5, 1.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.fix_mode = "oracle";
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.image_height = 15;  // odd
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.source_class = 1;
  c.target_class = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.poison_fraction = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  c = {};
  c.out_dir = "";
  CHECK_THROWS_AS(c.validate(), ConfigError);

  CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("the value command writes scores and a report") {
  const auto out = temp_dir("value");
  const RunConfig c = tiny_synth_config(out.string());
  CHECK(run_command("value", c) == kExitOk);

  CHECK(std::filesystem::exists(out / "cell_scores.csv"));
  CHECK(std::filesystem::exists(out / "point_scores.csv"));

  const json report = report_of(out);
  CHECK(report["command"] == "value");
  CHECK(report["config"]["trees"] == 30);
  CHECK(report["metrics"]["rows"] == 60);
  CHECK(report["metrics"]["features"] == 4);
  CHECK(report["metrics"].contains("mean_point_score"));
  CHECK(report["timings"].contains("total_s"));
  CHECK(report["timings"].contains("train_s"));
  CHECK(report["outputs"].size() == 2);

  // the cell score matrix has a header plus one line per training row
  std::ifstream csv(out / "cell_scores.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 61);
}

TEST_CASE("unknown commands are configuration errors") {
  const RunConfig c = tiny_synth_config(temp_dir("unknown").string());
  CHECK_THROWS_AS(run_command("valuate", c), ConfigError);
}

TEST_CASE("an extreme planted cell sinks to the bottom of the ranking") {
  Dataset ds = synth_gaussian(60, 4, 2.0, 1);
  // row 6 carries label 0; the huge value drags the prediction toward class 1
  // and dominates every learner's distance scale
  ds.features(6, 2) = 20.0;

  EnsembleConfig ec;
  ec.num_learners = 400;
  ec.feature_ratio = 0.5;
  ec.master_seed = 9;
  const EnsembleRecord rec = train_ensemble(ds, ec);
  const CellValuation cv = compute_2d_oob(rec, ds, ScoreFn::dist_reg_accuracy);

  const double planted = cv.scores(6, 2);
  REQUIRE(!is_missing(planted));
  CHECK(planted < 0.0);
  for (std::size_t idx = 0; idx < cv.scores.data.size(); ++idx) {
    const double s = cv.scores.data[idx];
    if (is_missing(s) || idx == 6 * 4 + 2) continue;
    CHECK(s > planted);
  }
}

TEST_CASE("outlier-bench reports detection quality above chance") {
  const auto out = temp_dir("bench");
  RunConfig c = tiny_synth_config(out.string());
  c.trees = 150;
  c.synth_n = 120;
  c.score_fn = "dist-reg-accuracy";
  CHECK(run_command("outlier-bench", c) == kExitOk);
  const json report = report_of(out);
  CHECK(report["metrics"]["detection_auc"].get<double>() > 0.5);
  CHECK(report["metrics"]["random_baseline_auc"].get<double>() > 0.3);
  CHECK(report["metrics"]["random_baseline_auc"].get<double>() < 0.7);
  CHECK(report["metrics"]["corrupted_cells"] == 24);  // 20% of 120 rows, 1 cell each
  const auto& detection = report["curves"]["detection"];
  CHECK(detection["inspected_fraction"].size() == detection["detection_rate"].size());
  CHECK(detection["auc"] == report["metrics"]["detection_auc"]);
}

TEST_CASE("fix writes a budget curve") {
  const auto out = temp_dir("fix");
  RunConfig c = tiny_synth_config(out.string());
  c.trees = 100;
  c.score_fn = "dist-reg-accuracy";
  c.fix_budgets = {0.0, 0.1, 1.0};
  CHECK(run_command("fix", c) == kExitOk);
  const json report = report_of(out);
  const auto& curve = report["curves"]["fixation"];
  REQUIRE(curve["budgets"].size() == 3);
  CHECK(curve["accuracy"].size() == 3);
  CHECK(curve["repaired_corrupted"].size() == 3);
  CHECK(report["metrics"].contains("clean_accuracy"));
  CHECK(report["metrics"].contains("detection_auc"));
}

TEST_CASE("mislabel ranks flipped points and removes them") {
  const auto out = temp_dir("mislabel");
  RunConfig c = tiny_synth_config(out.string());
  c.trees = 120;
  c.synth_n = 100;
  c.remove_fraction = 0.1;
  c.removal_step = 0.05;
  CHECK(run_command("mislabel", c) == kExitOk);
  const json report = report_of(out);
  CHECK(report["metrics"].contains("aucpr"));
  CHECK(report["metrics"]["prevalence"].get<double>() == doctest::Approx(0.1).epsilon(1e-12));
  const auto& removal = report["curves"]["removal"];
  CHECK(removal["fractions"].size() >= 2);
  CHECK(removal["accuracy"].size() == removal["fractions"].size());
}

TEST_CASE("backdoor emits per-sample heat maps") {
  const auto out = temp_dir("backdoor");
  RunConfig c;
  c.out_dir = out.string();
  c.image_count = 80;
  c.image_height = 8;
  c.image_width = 8;
  c.trigger_size = 2;
  c.trees = 60;
  c.feature_ratio = 0.25;
  CHECK(run_command("backdoor", c) == kExitOk);
  const json report = report_of(out);
  const std::size_t poisoned = report["metrics"]["poisoned_samples"].get<std::size_t>();
  CHECK(poisoned == 6);  // 15% of 40 source images
  CHECK(report["metrics"]["grid_cells"] == 16);
  CHECK(report["metrics"].contains("mean_per_sample_auc"));
  std::size_t heatmaps = 0;
  for (const auto& entry : std::filesystem::directory_iterator(out / "heatmaps")) {
    (void)entry;
    ++heatmaps;
  }
  CHECK(heatmaps == poisoned);
}

TEST_CASE("oracle-check accepts its own identities") {
  const auto out = temp_dir("oracle");
  RunConfig c;
  c.out_dir = out.string();
  c.oracle_instances = 1;
  CHECK(run_command("oracle-check", c) == kExitOk);
  const json report = report_of(out);
  REQUIRE(report["metrics"].contains("checks"));
  CHECK(report["metrics"]["all_passed"] == true);
  for (const auto& check : report["metrics"]["checks"]) {
    CHECK(check["passed"] == true);
    CHECK(check["observed"].get<double>() <= check["bound"].get<double>());
  }
}

TEST_CASE("reports capture warnings from degenerate data") {
  const auto out = temp_dir("warn");
  // constant column via a tiny CSV
  const auto csv = std::filesystem::temp_directory_path() / "oobval_cli_const.csv";
  {
    std::ofstream f(csv);
    f << "a,b,label\n";
    for (int i = 0; i < 40; ++i)
      f << (i % 2 ? 0.4 + 0.01 * i : -0.4 - 0.01 * i) << ",7.0," << (i % 2 ? "x" : "y") << "\n";
  }
  RunConfig c;
  c.data = csv.string();
  c.trees = 40;
  c.n_train = 30;
  c.out_dir = out.string();
  CHECK(run_command("value", c) == kExitOk);
  const json report = report_of(out);
  CHECK(!report["warnings"].empty());
}
