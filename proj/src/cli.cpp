#include "oobval/cli.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <utility>

#include "oobval/dataset.hpp"
#include "oobval/ensemble.hpp"
#include "oobval/experiments.hpp"
#include "oobval/rng.hpp"
#include "oobval/shapley.hpp"
#include "oobval/valuation.hpp"
#include "oobval/version.hpp"

namespace oobval {

namespace {

// Stage tags for deriving stage seeds from the run seed.
constexpr std::uint64_t kSeedSynthTrain = 1;
constexpr std::uint64_t kSeedSynthTest = 2;
constexpr std::uint64_t kSeedSplit = 3;
constexpr std::uint64_t kSeedCorrupt = 4;
constexpr std::uint64_t kSeedEnsemble = 5;
constexpr std::uint64_t kSeedBaseline = 6;
constexpr std::uint64_t kSeedOracle = 7;

using json = nlohmann::json;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

void RunConfig::validate() const {
  if (trees < 1) throw ConfigError("trees must be at least 1");
  if (!(feature_ratio > 0.0) || feature_ratio > 1.0) throw ConfigError("feature_ratio must be in (0,1]");
  if (weak_learner != "tree" && weak_learner != "logistic") {
    throw ConfigError("weak_learner must be 'tree' or 'logistic'");
  }
  score_fn_from_string(score_fn);  // throws on unknown names
  if (tree_max_depth < -1) throw ConfigError("tree_max_depth must be >= -1");
  if (tree_min_weight_leaf < 0.0) throw ConfigError("tree_min_weight_leaf must be >= 0");
  if (logistic_lr <= 0.0) throw ConfigError("logistic_lr must be positive");
  if (logistic_iterations < 1) throw ConfigError("logistic_iterations must be at least 1");
  if (logistic_l2 < 0.0) throw ConfigError("logistic_l2 must be >= 0");
  if (synth_n < 2) throw ConfigError("synth_n must be at least 2");
  if (synth_d < 1) throw ConfigError("synth_d must be at least 1");
  if (synth_class_sep < 0.0) throw ConfigError("synth_class_sep must be >= 0");
  if (outlier_row_ratio < 0.0 || outlier_row_ratio > 1.0) throw ConfigError("outlier_row_ratio must be in [0,1]");
  if (outlier_col_ratio < 0.0 || outlier_col_ratio > 1.0) throw ConfigError("outlier_col_ratio must be in [0,1]");
  if (!(outlier_tail_prob > 0.0) || outlier_tail_prob >= 1.0) {
    throw ConfigError("outlier_tail_prob must be in (0,1)");
  }
  if (fix_mode != "ground_truth" && fix_mode != "column_mean") {
    throw ConfigError("fix_mode must be 'ground_truth' or 'column_mean'");
  }
  if (fix_budgets.empty()) throw ConfigError("fix_budgets must not be empty");
  for (double b : fix_budgets) {
    if (b < 0.0 || b > 1.0) throw ConfigError("fix_budgets entries must be in [0,1]");
  }
  if (flip_ratio < 0.0 || flip_ratio > 1.0) throw ConfigError("flip_ratio must be in [0,1]");
  if (remove_fraction < 0.0 || remove_fraction >= 1.0) throw ConfigError("remove_fraction must be in [0,1)");
  if (!(removal_step > 0.0) || removal_step > 1.0) throw ConfigError("removal_step must be in (0,1]");
  if (image_count < 2) throw ConfigError("image_count must be at least 2");
  if (image_height < 2 || image_width < 2) throw ConfigError("image dimensions must be at least 2");
  if (image_height % 2 != 0 || image_width % 2 != 0) throw ConfigError("image dimensions must be even");
  if (image_channels < 1) throw ConfigError("image_channels must be at least 1");
  if (trigger_size < 1) throw ConfigError("trigger_size must be at least 1");
  if (trigger_size > image_height || trigger_size > image_width) {
    throw ConfigError("trigger_size must fit inside the image");
  }
  if (trigger_value < 0.0 || trigger_value > 1.0) throw ConfigError("trigger_value must be in [0,1]");
  if (poison_fraction < 0.0 || poison_fraction > 1.0) throw ConfigError("poison_fraction must be in [0,1]");
  if (source_class == target_class) throw ConfigError("source_class and target_class must differ");
  if (source_class < 0 || target_class < 0) throw ConfigError("class indices must be >= 0");
  if (texture_std < 0.0) throw ConfigError("texture_std must be >= 0");
  if (oracle_instances < 1) throw ConfigError("oracle_instances must be at least 1");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (threads > 4096) throw ConfigError("threads out of range");
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& field) {
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  static const std::set<std::string> known = {
      "data", "labels", "has_header", "synth_n", "synth_d", "synth_class_sep", "n_train", "n_test",
      "norm_pooled", "trees", "feature_ratio", "weak_learner", "tree_max_depth",
      "tree_min_samples_split", "tree_min_weight_leaf", "logistic_lr", "logistic_iterations",
      "logistic_l2", "score_fn", "impute_missing", "outlier_row_ratio", "outlier_col_ratio",
      "outlier_tail_prob", "fix_budgets", "fix_mode", "flip_ratio", "remove_fraction",
      "removal_step", "image_count", "image_height", "image_width", "image_channels",
      "trigger_size", "trigger_value", "poison_fraction", "source_class", "target_class",
      "texture_mean0", "texture_mean1", "texture_std", "oracle_instances", "seed", "threads",
      "out_dir"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  }
  if (j.contains("data")) read_key(j, "data", c.data);
  if (j.contains("labels")) read_key(j, "labels", c.labels);
  if (j.contains("has_header")) read_key(j, "has_header", c.has_header);
  if (j.contains("synth_n")) read_key(j, "synth_n", c.synth_n);
  if (j.contains("synth_d")) read_key(j, "synth_d", c.synth_d);
  if (j.contains("synth_class_sep")) read_key(j, "synth_class_sep", c.synth_class_sep);
  if (j.contains("n_train")) read_key(j, "n_train", c.n_train);
  if (j.contains("n_test")) read_key(j, "n_test", c.n_test);
  if (j.contains("norm_pooled")) read_key(j, "norm_pooled", c.norm_pooled);
  if (j.contains("trees")) read_key(j, "trees", c.trees);
  if (j.contains("feature_ratio")) read_key(j, "feature_ratio", c.feature_ratio);
  if (j.contains("weak_learner")) read_key(j, "weak_learner", c.weak_learner);
  if (j.contains("tree_max_depth")) read_key(j, "tree_max_depth", c.tree_max_depth);
  if (j.contains("tree_min_samples_split")) read_key(j, "tree_min_samples_split", c.tree_min_samples_split);
  if (j.contains("tree_min_weight_leaf")) read_key(j, "tree_min_weight_leaf", c.tree_min_weight_leaf);
  if (j.contains("logistic_lr")) read_key(j, "logistic_lr", c.logistic_lr);
  if (j.contains("logistic_iterations")) read_key(j, "logistic_iterations", c.logistic_iterations);
  if (j.contains("logistic_l2")) read_key(j, "logistic_l2", c.logistic_l2);
  if (j.contains("score_fn")) read_key(j, "score_fn", c.score_fn);
  if (j.contains("impute_missing")) read_key(j, "impute_missing", c.impute_missing);
  if (j.contains("outlier_row_ratio")) read_key(j, "outlier_row_ratio", c.outlier_row_ratio);
  if (j.contains("outlier_col_ratio")) read_key(j, "outlier_col_ratio", c.outlier_col_ratio);
  if (j.contains("outlier_tail_prob")) read_key(j, "outlier_tail_prob", c.outlier_tail_prob);
  if (j.contains("fix_budgets")) read_key(j, "fix_budgets", c.fix_budgets);
  if (j.contains("fix_mode")) read_key(j, "fix_mode", c.fix_mode);
  if (j.contains("flip_ratio")) read_key(j, "flip_ratio", c.flip_ratio);
  if (j.contains("remove_fraction")) read_key(j, "remove_fraction", c.remove_fraction);
  if (j.contains("removal_step")) read_key(j, "removal_step", c.removal_step);
  if (j.contains("image_count")) read_key(j, "image_count", c.image_count);
  if (j.contains("image_height")) read_key(j, "image_height", c.image_height);
  if (j.contains("image_width")) read_key(j, "image_width", c.image_width);
  if (j.contains("image_channels")) read_key(j, "image_channels", c.image_channels);
  if (j.contains("trigger_size")) read_key(j, "trigger_size", c.trigger_size);
  if (j.contains("trigger_value")) read_key(j, "trigger_value", c.trigger_value);
  if (j.contains("poison_fraction")) read_key(j, "poison_fraction", c.poison_fraction);
  if (j.contains("source_class")) read_key(j, "source_class", c.source_class);
  if (j.contains("target_class")) read_key(j, "target_class", c.target_class);
  if (j.contains("texture_mean0")) read_key(j, "texture_mean0", c.texture_mean0);
  if (j.contains("texture_mean1")) read_key(j, "texture_mean1", c.texture_mean1);
  if (j.contains("texture_std")) read_key(j, "texture_std", c.texture_std);
  if (j.contains("oracle_instances")) read_key(j, "oracle_instances", c.oracle_instances);
  if (j.contains("seed")) read_key(j, "seed", c.seed);
  if (j.contains("threads")) read_key(j, "threads", c.threads);
  if (j.contains("out_dir")) read_key(j, "out_dir", c.out_dir);
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["data"] = c.data;
  j["labels"] = c.labels;
  j["has_header"] = c.has_header;
  j["synth_n"] = c.synth_n;
  j["synth_d"] = c.synth_d;
  j["synth_class_sep"] = c.synth_class_sep;
  j["n_train"] = c.n_train;
  j["n_test"] = c.n_test;
  j["norm_pooled"] = c.norm_pooled;
  j["trees"] = c.trees;
  j["feature_ratio"] = c.feature_ratio;
  j["weak_learner"] = c.weak_learner;
  j["tree_max_depth"] = c.tree_max_depth;
  j["tree_min_samples_split"] = c.tree_min_samples_split;
  j["tree_min_weight_leaf"] = c.tree_min_weight_leaf;
  j["logistic_lr"] = c.logistic_lr;
  j["logistic_iterations"] = c.logistic_iterations;
  j["logistic_l2"] = c.logistic_l2;
  j["score_fn"] = c.score_fn;
  j["impute_missing"] = c.impute_missing;
  j["outlier_row_ratio"] = c.outlier_row_ratio;
  j["outlier_col_ratio"] = c.outlier_col_ratio;
  j["outlier_tail_prob"] = c.outlier_tail_prob;
  j["fix_budgets"] = c.fix_budgets;
  j["fix_mode"] = c.fix_mode;
  j["flip_ratio"] = c.flip_ratio;
  j["remove_fraction"] = c.remove_fraction;
  j["removal_step"] = c.removal_step;
  j["image_count"] = c.image_count;
  j["image_height"] = c.image_height;
  j["image_width"] = c.image_width;
  j["image_channels"] = c.image_channels;
  j["trigger_size"] = c.trigger_size;
  j["trigger_value"] = c.trigger_value;
  j["poison_fraction"] = c.poison_fraction;
  j["source_class"] = c.source_class;
  j["target_class"] = c.target_class;
  j["texture_mean0"] = c.texture_mean0;
  j["texture_mean1"] = c.texture_mean1;
  j["texture_std"] = c.texture_std;
  j["oracle_instances"] = c.oracle_instances;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out_dir"] = c.out_dir;
  return j;
}

RunConfig load_config_file(const std::string& path, std::set<std::string>* keys_seen) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  if (keys_seen && j.is_object()) {
    for (const auto& item : j.items()) keys_seen->insert(item.key());
  }
  return config_from_json(j);
}

namespace {

EnsembleConfig make_ensemble_config(const RunConfig& c) {
  EnsembleConfig e;
  e.num_learners = static_cast<std::uint32_t>(c.trees);
  e.feature_ratio = c.feature_ratio;
  e.weak_learner = c.weak_learner == "tree" ? WeakLearner::tree : WeakLearner::logistic;
  e.tree_params.max_depth = static_cast<int>(c.tree_max_depth);
  e.tree_params.min_samples_split = static_cast<std::uint32_t>(c.tree_min_samples_split);
  e.tree_params.min_weight_leaf = c.tree_min_weight_leaf;
  e.logistic_params.learning_rate = c.logistic_lr;
  e.logistic_params.iterations = static_cast<int>(c.logistic_iterations);
  e.logistic_params.l2 = c.logistic_l2;
  e.master_seed = derive_seed(c.seed, kSeedEnsemble);
  e.threads = static_cast<unsigned>(c.threads);
  return e;
}

LogisticParams evaluator_params(const RunConfig& c) {
  LogisticParams p;
  p.learning_rate = c.logistic_lr;
  p.iterations = static_cast<int>(c.logistic_iterations);
  p.l2 = c.logistic_l2;
  return p;
}

Dataset concat_rows(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.features = Matrix(a.n() + b.n(), a.d());
  std::copy(a.features.data.begin(), a.features.data.end(), out.features.data.begin());
  std::copy(b.features.data.begin(), b.features.data.end(),
            out.features.data.begin() + static_cast<std::ptrdiff_t>(a.features.data.size()));
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

struct TabularData {
  Dataset train;
  Dataset test;  // empty unless the command needs one
  bool has_test = false;
  std::vector<std::string> warnings;
};

void warn_constant_columns(const Dataset& ds, const NormalizationParams& params,
                           std::vector<std::string>& warnings) {
  for (std::size_t j = 0; j < params.constant.size(); ++j) {
    if (!params.constant[j]) continue;
    warnings.push_back("column " + std::to_string(j) + " ('" + ds.feature_names[j] +
                       "') is constant in the normalization fit; values set to zero");
  }
}

// Loads or synthesizes, then standardizes on train statistics (or pooled
// train+test when configured).
TabularData prepare_tabular(const RunConfig& c, bool need_test) {
  TabularData td;
  if (c.data.empty()) {
    td.train = synth_gaussian(c.synth_n, c.synth_d, c.synth_class_sep,
                              derive_seed(c.seed, kSeedSynthTrain));
    if (need_test) {
      const std::size_t n_test = c.n_test == 0 ? 1000 : c.n_test;
      td.test = synth_gaussian(n_test, c.synth_d, c.synth_class_sep,
                               derive_seed(c.seed, kSeedSynthTest));
    }
  } else {
    Dataset all = load_csv(c.data, c.labels, c.has_header);
    if (need_test) {
      const std::size_t n_train = c.n_train == 0 ? all.n() * 7 / 10 : c.n_train;
      const std::size_t n_test = c.n_test == 0 ? all.n() - n_train : c.n_test;
      auto parts = split(all, n_train, n_test, derive_seed(c.seed, kSeedSplit));
      td.train = std::move(parts.first);
      td.test = std::move(parts.second);
    } else {
      td.train = std::move(all);
    }
  }
  td.has_test = need_test;

  if (need_test && c.norm_pooled) {
    auto [pooled_norm, params] = normalize(concat_rows(td.train, td.test));
    (void)pooled_norm;
    warn_constant_columns(td.train, params, td.warnings);
    td.train = apply_normalization(td.train, params);
    td.test = apply_normalization(td.test, params);
  } else {
    auto [train_norm, params] = normalize(td.train);
    warn_constant_columns(td.train, params, td.warnings);
    td.train = std::move(train_norm);
    if (need_test) td.test = apply_normalization(td.test, params);
  }
  return td;
}

json curve_to_json(const DetectionCurve& curve) {
  json j;
  j["inspected_fraction"] = curve.inspected_fraction;
  j["detection_rate"] = curve.detection_rate;
  j["auc"] = curve.auc;
  j["num_excluded"] = curve.num_excluded;
  j["num_excluded_true"] = curve.num_excluded_true;
  return j;
}

std::vector<double> random_scores(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> scores(count);
  for (double& s : scores) s = rng.uniform();
  return scores;
}

std::size_t count_missing(const CellValuation& cv) {
  std::size_t missing = 0;
  for (double s : cv.scores.data) missing += is_missing(s) ? 1 : 0;
  return missing;
}

json base_report(const char* command, const RunConfig& c) {
  json report;
  report["command"] = command;
  report["version"] = kVersion;
  report["config"] = config_to_json(c);
  report["warnings"] = json::array();
  report["timings"] = json::object();
  return report;
}

void finish_report(json& report, const RunConfig& c, double total_seconds) {
  report["timings"]["total_s"] = total_seconds;
  write_file_atomic((std::filesystem::path(c.out_dir) / "report.json").string(), report.dump());
}

void write_score_outputs(const RunConfig& c, const CellValuation& cv, const PointValuation& pv,
                         std::span<const std::string> names, json& report) {
  const std::filesystem::path dir(c.out_dir);
  write_cell_scores_csv(cv, names, (dir / "cell_scores.csv").string());
  write_point_scores_csv(pv, (dir / "point_scores.csv").string());
  report["outputs"].push_back("cell_scores.csv");
  report["outputs"].push_back("point_scores.csv");
}

int run_value(const RunConfig& c) {
  Stopwatch total;
  json report = base_report("value", c);
  report["outputs"] = json::array();

  TabularData td = prepare_tabular(c, false);
  for (const auto& w : td.warnings) report["warnings"].push_back(w);
  const EnsembleConfig ec = make_ensemble_config(c);

  Stopwatch train_watch;
  const EnsembleRecord rec = train_ensemble(td.train, ec);
  report["timings"]["train_s"] = train_watch.seconds();

  Stopwatch value_watch;
  const ScoreFn fn = score_fn_from_string(c.score_fn);
  const CellValuation cv = compute_2d_oob(rec, td.train, fn, ec.threads);
  const PointValuation pv = marginalize(cv);
  report["timings"]["valuation_s"] = value_watch.seconds();

  write_score_outputs(c, cv, pv, td.train.feature_names, report);

  double point_sum = 0.0;
  std::size_t point_present = 0;
  for (double s : pv.scores) {
    if (is_missing(s)) continue;
    point_sum += s;
    ++point_present;
  }
  report["metrics"]["missing_cells"] = count_missing(cv);
  report["metrics"]["mean_point_score"] = point_present ? point_sum / point_present : 0.0;
  report["metrics"]["rows"] = td.train.n();
  report["metrics"]["features"] = td.train.d();

  std::cout << "value: n=" << td.train.n() << " d=" << td.train.d()
            << " missing_cells=" << count_missing(cv) << "\n";
  finish_report(report, c, total.seconds());
  return kExitOk;
}

int run_outlier_bench(const RunConfig& c) {
  Stopwatch total;
  json report = base_report("outlier-bench", c);
  report["outputs"] = json::array();

  TabularData td = prepare_tabular(c, false);
  for (const auto& w : td.warnings) report["warnings"].push_back(w);
  OutlierInjection inj = inject_cell_outliers(td.train, c.outlier_row_ratio, c.outlier_col_ratio,
                                              c.outlier_tail_prob, derive_seed(c.seed, kSeedCorrupt));
  for (const auto& w : inj.warnings) report["warnings"].push_back(w);

  const EnsembleConfig ec = make_ensemble_config(c);
  Stopwatch train_watch;
  const EnsembleRecord rec = train_ensemble(inj.data, ec);
  report["timings"]["train_s"] = train_watch.seconds();

  Stopwatch value_watch;
  const ScoreFn fn = score_fn_from_string(c.score_fn);
  const CellValuation cv = compute_2d_oob(rec, inj.data, fn, ec.threads);
  report["timings"]["valuation_s"] = value_watch.seconds();

  const Matrix ranking_scores = c.impute_missing ? impute_missing_with_column_mean(cv) : cv.scores;
  const DetectionCurve curve =
      detection_curve(ranking_scores.data, inj.mask.data, RankOrder::ascending);
  const DetectionCurve baseline = detection_curve(
      random_scores(inj.mask.data.size(), derive_seed(c.seed, kSeedBaseline)), inj.mask.data,
      RankOrder::ascending);

  const PointValuation pv = marginalize(cv);
  write_score_outputs(c, cv, pv, td.train.feature_names, report);

  std::size_t corrupted_cells = 0;
  for (auto m : inj.mask.data) corrupted_cells += m;
  report["metrics"]["detection_auc"] = curve.auc;
  report["metrics"]["random_baseline_auc"] = baseline.auc;
  report["metrics"]["corrupted_cells"] = corrupted_cells;
  report["metrics"]["missing_cells"] = count_missing(cv);
  report["curves"]["detection"] = curve_to_json(curve);

  std::cout << "outlier-bench: detection_auc=" << curve.auc << " baseline=" << baseline.auc << "\n";
  finish_report(report, c, total.seconds());
  return kExitOk;
}

int run_fix(const RunConfig& c) {
  Stopwatch total;
  json report = base_report("fix", c);
  report["outputs"] = json::array();

  TabularData td = prepare_tabular(c, true);
  for (const auto& w : td.warnings) report["warnings"].push_back(w);
  const Dataset clean_train = td.train;
  OutlierInjection inj = inject_cell_outliers(clean_train, c.outlier_row_ratio, c.outlier_col_ratio,
                                              c.outlier_tail_prob, derive_seed(c.seed, kSeedCorrupt));
  for (const auto& w : inj.warnings) report["warnings"].push_back(w);

  const EnsembleConfig ec = make_ensemble_config(c);
  Stopwatch train_watch;
  const EnsembleRecord rec = train_ensemble(inj.data, ec);
  report["timings"]["train_s"] = train_watch.seconds();

  Stopwatch value_watch;
  const ScoreFn fn = score_fn_from_string(c.score_fn);
  const CellValuation cv = compute_2d_oob(rec, inj.data, fn, ec.threads);
  report["timings"]["valuation_s"] = value_watch.seconds();

  const Matrix ranking_scores = c.impute_missing ? impute_missing_with_column_mean(cv) : cv.scores;
  const FixMode mode = c.fix_mode == "ground_truth" ? FixMode::ground_truth : FixMode::column_mean;
  Stopwatch fix_watch;
  const FixationResult fixation = cell_fixation_run(inj.data, inj.mask, clean_train, ranking_scores,
                                                    td.test, c.fix_budgets, mode, evaluator_params(c));
  report["timings"]["fixation_s"] = fix_watch.seconds();

  const LogisticModel clean_model =
      fit_logistic(clean_train.features, clean_train.labels, evaluator_params(c));
  const double clean_accuracy = accuracy(clean_model, td.test);

  const DetectionCurve curve =
      detection_curve(ranking_scores.data, inj.mask.data, RankOrder::ascending);
  const PointValuation pv = marginalize(cv);
  write_score_outputs(c, cv, pv, td.train.feature_names, report);

  report["metrics"]["detection_auc"] = curve.auc;
  report["metrics"]["clean_accuracy"] = clean_accuracy;
  report["curves"]["fixation"] = {{"budgets", fixation.curve.fractions},
                                  {"accuracy", fixation.curve.accuracy},
                                  {"repaired_corrupted", fixation.repaired_corrupted}};
  report["curves"]["detection"] = curve_to_json(curve);

  std::cout << "fix: budgets=" << c.fix_budgets.size()
            << " clean_accuracy=" << clean_accuracy << "\n";
  for (std::size_t i = 0; i < fixation.curve.fractions.size(); ++i) {
    std::cout << "  budget " << fixation.curve.fractions[i] << ": accuracy "
              << fixation.curve.accuracy[i] << "\n";
  }
  finish_report(report, c, total.seconds());
  return kExitOk;
}

int run_mislabel(const RunConfig& c) {
  Stopwatch total;
  json report = base_report("mislabel", c);
  report["outputs"] = json::array();

  TabularData td = prepare_tabular(c, true);
  for (const auto& w : td.warnings) report["warnings"].push_back(w);
  auto [flipped, mask] = flip_labels(td.train, c.flip_ratio, derive_seed(c.seed, kSeedCorrupt));

  const EnsembleConfig ec = make_ensemble_config(c);
  Stopwatch train_watch;
  const EnsembleRecord rec = train_ensemble(flipped, ec);
  report["timings"]["train_s"] = train_watch.seconds();

  Stopwatch value_watch;
  const ScoreFn fn = score_fn_from_string(c.score_fn);
  const CellValuation cv = compute_2d_oob(rec, flipped, fn, ec.threads);
  const PointValuation pv = marginalize(cv);
  report["timings"]["valuation_s"] = value_watch.seconds();

  const double pr_auc = aucpr(pv.scores, mask, RankOrder::ascending);
  std::size_t flipped_count = 0;
  for (auto m : mask) flipped_count += m;

  Stopwatch removal_watch;
  const AccuracyCurve removal = point_removal_run(flipped, pv, td.test, c.remove_fraction,
                                                  c.removal_step, evaluator_params(c));
  report["timings"]["removal_s"] = removal_watch.seconds();

  write_score_outputs(c, cv, pv, td.train.feature_names, report);

  report["metrics"]["aucpr"] = pr_auc;
  report["metrics"]["prevalence"] =
      static_cast<double>(flipped_count) / static_cast<double>(td.train.n());
  report["curves"]["removal"] = {{"fractions", removal.fractions},
                                 {"accuracy", removal.accuracy},
                                 {"truncated", removal.truncated}};

  std::cout << "mislabel: aucpr=" << pr_auc << " flipped=" << flipped_count << "\n";
  finish_report(report, c, total.seconds());
  return kExitOk;
}

int run_backdoor(const RunConfig& c) {
  Stopwatch total;
  json report = base_report("backdoor", c);
  report["outputs"] = json::array();

  ImageDataset images;
  if (c.data.empty()) {
    images = synth_texture_images(c.image_count, c.image_height, c.image_width, c.image_channels,
                                  c.texture_mean0, c.texture_mean1, c.texture_std,
                                  derive_seed(c.seed, kSeedSynthTrain));
  } else {
    images = load_image_csv(c.data, c.labels, c.image_height, c.image_width, c.image_channels,
                            c.has_header);
  }

  TriggerSpec spec;
  spec.pattern = Matrix(c.trigger_size, c.trigger_size, c.trigger_value);
  spec.poison_fraction = c.poison_fraction;
  spec.source_class = static_cast<int>(c.source_class);
  spec.target_class = static_cast<int>(c.target_class);
  TriggerInjection inj = inject_trigger(images, spec, derive_seed(c.seed, kSeedCorrupt));

  const Dataset ds = superpixelize(inj.data);
  const EnsembleConfig ec = make_ensemble_config(c);
  Stopwatch train_watch;
  const EnsembleRecord rec = train_ensemble(ds, ec);
  report["timings"]["train_s"] = train_watch.seconds();

  Stopwatch value_watch;
  const ScoreFn fn = score_fn_from_string(c.score_fn);
  const CellValuation cv = compute_2d_oob(rec, ds, fn, ec.threads);
  report["timings"]["valuation_s"] = value_watch.seconds();

  const Matrix ranking_scores = c.impute_missing ? impute_missing_with_column_mean(cv) : cv.scores;

  const std::size_t grid_h = images.height / 2, grid_w = images.width / 2;
  const std::filesystem::path heatmap_dir = std::filesystem::path(c.out_dir) / "heatmaps";
  std::filesystem::create_directories(heatmap_dir);

  double auc_sum = 0.0;
  std::size_t poisoned = 0;
  json samples = json::array();
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (!inj.point_mask[i]) continue;
    ++poisoned;
    const DetectionCurve curve =
        detection_curve(ranking_scores.row(i), inj.cell_mask.row(i), RankOrder::descending);
    auc_sum += curve.auc;

    Matrix heat(grid_h, grid_w);
    for (std::size_t g = 0; g < grid_h * grid_w; ++g) heat.data[g] = cv.scores(i, g);
    char name[32];
    std::snprintf(name, sizeof(name), "heatmap_%05zu.pgm", i);
    write_pgm(heat, (heatmap_dir / name).string());

    json s;
    s["row"] = i;
    s["auc"] = curve.auc;
    s["curve"] = curve_to_json(curve);
    samples.push_back(std::move(s));
  }
  if (poisoned == 0) throw ComputeError("backdoor: no poisoned samples were produced");
  const double mean_auc = auc_sum / static_cast<double>(poisoned);

  const PointValuation pv = marginalize(cv);
  write_score_outputs(c, cv, pv, ds.feature_names, report);
  report["outputs"].push_back("heatmaps/");

  report["metrics"]["mean_per_sample_auc"] = mean_auc;
  report["metrics"]["poisoned_samples"] = poisoned;
  report["metrics"]["grid_cells"] = grid_h * grid_w;
  report["curves"]["per_sample"] = std::move(samples);

  std::cout << "backdoor: poisoned=" << poisoned << " mean_per_sample_auc=" << mean_auc << "\n";
  finish_report(report, c, total.seconds());
  return kExitOk;
}

struct OracleCheck {
  std::string name;
  bool passed = false;
  double observed = 0.0;
  double bound = 0.0;
};

void print_check(const OracleCheck& check) {
  std::cout << (check.passed ? "[PASS] " : "[FAIL] ") << check.name << ": observed "
            << check.observed << " vs bound " << check.bound << "\n";
}

int run_oracle_check(const RunConfig& c) {
  Stopwatch total;
  json report = base_report("oracle-check", c);
  report["outputs"] = json::array();
  std::vector<OracleCheck> checks;

  // Joint-valuation identities on small random instances.
  {
    double max_cell_delta = 0.0;
    double max_row_delta = 0.0;
    for (std::uint64_t k = 0; k < c.oracle_instances; ++k) {
      const std::uint64_t base = derive_seed(c.seed, kSeedOracle + k);
      const Dataset ds = synth_gaussian(20, 5, 2.0, base);
      EnsembleConfig ec = make_ensemble_config(c);
      ec.num_learners = 30;
      ec.feature_ratio = 0.5;
      ec.weak_learner = WeakLearner::tree;
      ec.master_seed = derive_seed(base, 1);
      const EnsembleRecord rec = train_ensemble(ds, ec);
      const ScoreFn fn = score_fn_from_string(c.score_fn);
      const CellValuation cv = compute_2d_oob(rec, ds, fn, ec.threads);
      const PointValuation pv = marginalize(cv);
      for (std::size_t i = 0; i < ds.n(); ++i) {
        bool full_row = true;
        for (std::size_t j = 0; j < ds.d(); ++j) {
          if (cv.pair_counts(i, j) == 0) {
            full_row = false;
            continue;
          }
          const double expect = conditional_oob_expectation(rec, ds, fn, i, j);
          max_cell_delta = std::max(max_cell_delta, std::abs(expect - cv.scores(i, j)));
        }
        if (full_row) {
          const double expect = marginal_oob_expectation(rec, ds, fn, i);
          max_row_delta = std::max(max_row_delta, std::abs(expect - pv.scores[i]));
        }
      }
    }
    checks.push_back({"cell values match conditional-expectation route", max_cell_delta <= 1e-12,
                      max_cell_delta, 1e-12});
    checks.push_back({"marginalized values match weighted per-subset route", max_row_delta <= 1e-12,
                      max_row_delta, 1e-12});
  }

  // Exact cooperative-game oracles.
  {
    const Utility2D product([](std::uint32_t s, std::uint32_t f) {
      return static_cast<double>(std::popcount(s)) * static_cast<double>(std::popcount(f));
    });
    const Matrix psi = exact_2d_shapley(product, 4, 3);
    double delta = 0.0;
    for (double v : psi.data) delta = std::max(delta, std::abs(v - 1.0));
    checks.push_back({"exact joint values of the product game are all ones", delta <= 1e-12, delta, 1e-12});
  }
  {
    Rng rng(derive_seed(c.seed, kSeedOracle + 100));
    std::vector<double> table(1u << 8);
    for (double& v : table) v = rng.uniform();
    const Utility1D u([&table](std::uint32_t mask) { return table[mask]; });
    const auto phi = exact_data_shapley(u, 8);
    double sum = 0.0;
    for (double p : phi) sum += p;
    const double delta = std::abs(sum - (table[(1u << 8) - 1] - table[0]));
    checks.push_back({"exact point values satisfy efficiency", delta <= 1e-12, delta, 1e-12});
  }
  {
    Rng rng(derive_seed(c.seed, kSeedOracle + 101));
    std::vector<double> table((1u << 4) * (1u << 3));
    for (double& v : table) v = rng.uniform();
    const Utility2D u([&table](std::uint32_t s, std::uint32_t f) { return table[(s << 3) | f]; });
    const Matrix exact = exact_2d_shapley(u, 4, 3);
    const Mc2dResult mc = mc_2d_shapley(u, 4, 3, 5000, derive_seed(c.seed, kSeedOracle + 102));
    double worst = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        const double err = std::abs(mc.estimate(i, j) - exact(i, j));
        worst = std::max(worst, err);
        const double bound = std::max(4.0 * mc.standard_error(i, j), 0.05);
        if (err > bound) ok = false;
      }
    }
    checks.push_back({"mc estimates converge to exact joint values", ok, worst, 0.05});
  }

  bool all_passed = true;
  json check_json = json::array();
  for (const auto& check : checks) {
    print_check(check);
    all_passed = all_passed && check.passed;
    check_json.push_back({{"name", check.name},
                          {"passed", check.passed},
                          {"observed", check.observed},
                          {"bound", check.bound}});
  }
  report["metrics"]["checks"] = std::move(check_json);
  report["metrics"]["all_passed"] = all_passed;

  finish_report(report, c, total.seconds());
  return all_passed ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  std::cout << "effective config: " << config_to_json(config).dump() << "\n";

  if (command == "value") return run_value(config);
  if (command == "outlier-bench") return run_outlier_bench(config);
  if (command == "fix") return run_fix(config);
  if (command == "mislabel") return run_mislabel(config);
  if (command == "backdoor") return run_backdoor(config);
  if (command == "oracle-check") return run_oracle_check(config);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace oobval
