#include <cstdint>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oobval/cli.hpp"
#include "oobval/version.hpp"

namespace {

// One slot per flag; only the subcommand that parsed owns the values, and
// apply_flags consults count() so untouched slots never override the config.
struct FlagBag {
  std::string data, labels, config, weak_learner, score_fn, fix_mode, out_dir;
  bool no_header = false, norm_pooled = false, impute_missing = false;
  std::uint64_t seed = 0, trees = 0, threads = 0;
  std::uint64_t synth_n = 0, synth_d = 0, n_train = 0, n_test = 0;
  std::uint64_t tree_min_samples_split = 0, image_count = 0, image_height = 0, image_width = 0;
  std::uint64_t image_channels = 0, trigger_size = 0, oracle_instances = 0;
  std::int64_t tree_max_depth = 0, logistic_iterations = 0, source_class = 0, target_class = 0;
  double feature_ratio = 0, class_sep = 0, tree_min_weight_leaf = 0, logistic_lr = 0;
  double logistic_l2 = 0, row_ratio = 0, col_ratio = 0, tail_prob = 0, flip_ratio = 0;
  double remove_fraction = 0, removal_step = 0, trigger_value = 0, poison_fraction = 0;
  double texture_mean0 = 0, texture_mean1 = 0, texture_std = 0;
  std::vector<double> budgets;
};

void add_options(CLI::App* sub, FlagBag& f) {
  sub->add_option("--data", f.data, "CSV input path (omit to use synthetic data)");
  sub->add_option("--labels", f.labels, "label column name, or 0-based index without a header");
  sub->add_flag("--no-header", f.no_header, "treat the first CSV row as data");
  sub->add_option("--config", f.config, "JSON config file; flags override it");
  sub->add_option("--seed", f.seed, "run seed; every random stage derives from it");
  sub->add_option("--trees", f.trees, "number of weak learners");
  sub->add_option("--feature-ratio", f.feature_ratio, "fraction of features per learner, (0,1]");
  sub->add_option("--weak-learner", f.weak_learner, "tree | logistic");
  sub->add_option("--score-fn", f.score_fn, "accuracy | neg-squared-error | dist-reg-accuracy");
  sub->add_option("--threads", f.threads, "worker threads; 0 = hardware default");
  sub->add_option("--out-dir", f.out_dir, "output directory");
  sub->add_option("--synth-n", f.synth_n, "synthetic train rows");
  sub->add_option("--synth-d", f.synth_d, "synthetic feature count");
  sub->add_option("--class-sep", f.class_sep, "synthetic distance between class means");
  sub->add_option("--n-train", f.n_train, "train rows taken from the CSV (0 = 70%)");
  sub->add_option("--n-test", f.n_test, "test rows (0 = CSV remainder, or 1000 synthetic)");
  sub->add_flag("--norm-pooled", f.norm_pooled, "fit normalization on train+test pooled");
  sub->add_flag("--impute-missing", f.impute_missing,
                "rank missing cells at their column mean score");
  sub->add_option("--tree-max-depth", f.tree_max_depth, "-1 = unlimited");
  sub->add_option("--tree-min-samples-split", f.tree_min_samples_split,
                  "weighted rows needed to split");
  sub->add_option("--tree-min-weight-leaf", f.tree_min_weight_leaf, "minimum leaf weight");
  sub->add_option("--logistic-lr", f.logistic_lr, "gradient-descent step size");
  sub->add_option("--logistic-iterations", f.logistic_iterations, "gradient-descent steps");
  sub->add_option("--logistic-l2", f.logistic_l2, "L2 penalty on non-bias weights");
  sub->add_option("--row-ratio", f.row_ratio, "fraction of rows that receive outliers");
  sub->add_option("--col-ratio", f.col_ratio, "fraction of cells per corrupted row");
  sub->add_option("--tail-prob", f.tail_prob, "two-sided tail mass of the outlier draws");
  sub->add_option("--budgets", f.budgets, "repair budgets as cell fractions")->expected(-1);
  sub->add_option("--fix-mode", f.fix_mode, "ground_truth | column_mean");
  sub->add_option("--flip-ratio", f.flip_ratio, "fraction of labels to flip");
  sub->add_option("--remove-fraction", f.remove_fraction, "largest point-removal fraction");
  sub->add_option("--removal-step", f.removal_step, "point-removal step size");
  sub->add_option("--images", f.image_count, "synthetic image count");
  sub->add_option("--image-height", f.image_height, "pixels, must be even");
  sub->add_option("--image-width", f.image_width, "pixels, must be even");
  sub->add_option("--image-channels", f.image_channels, "channels per pixel");
  sub->add_option("--trigger-size", f.trigger_size, "square trigger side length in pixels");
  sub->add_option("--trigger-value", f.trigger_value, "trigger pixel value in [0,1]");
  sub->add_option("--poison-fraction", f.poison_fraction, "fraction of source-class images");
  sub->add_option("--source-class", f.source_class, "class that receives the trigger");
  sub->add_option("--target-class", f.target_class, "label written on poisoned images");
  sub->add_option("--texture-mean0", f.texture_mean0, "class-0 texture mean");
  sub->add_option("--texture-mean1", f.texture_mean1, "class-1 texture mean");
  sub->add_option("--texture-std", f.texture_std, "texture noise std");
  sub->add_option("--oracle-instances", f.oracle_instances, "random instances per oracle check");
}

void apply_flags(const CLI::App* sub, const FlagBag& f, oobval::RunConfig& c) {
  const auto set = [sub](const char* name) { return sub->count(name) > 0; };
  if (set("--data")) c.data = f.data;
  if (set("--labels")) c.labels = f.labels;
  if (set("--no-header")) c.has_header = false;
  if (set("--seed")) c.seed = f.seed;
  if (set("--trees")) c.trees = f.trees;
  if (set("--feature-ratio")) c.feature_ratio = f.feature_ratio;
  if (set("--weak-learner")) c.weak_learner = f.weak_learner;
  if (set("--score-fn")) c.score_fn = f.score_fn;
  if (set("--threads")) c.threads = f.threads;
  if (set("--out-dir")) c.out_dir = f.out_dir;
  if (set("--synth-n")) c.synth_n = f.synth_n;
  if (set("--synth-d")) c.synth_d = f.synth_d;
  if (set("--class-sep")) c.synth_class_sep = f.class_sep;
  if (set("--n-train")) c.n_train = f.n_train;
  if (set("--n-test")) c.n_test = f.n_test;
  if (set("--norm-pooled")) c.norm_pooled = true;
  if (set("--impute-missing")) c.impute_missing = true;
  if (set("--tree-max-depth")) c.tree_max_depth = f.tree_max_depth;
  if (set("--tree-min-samples-split")) c.tree_min_samples_split = f.tree_min_samples_split;
  if (set("--tree-min-weight-leaf")) c.tree_min_weight_leaf = f.tree_min_weight_leaf;
  if (set("--logistic-lr")) c.logistic_lr = f.logistic_lr;
  if (set("--logistic-iterations")) c.logistic_iterations = f.logistic_iterations;
  if (set("--logistic-l2")) c.logistic_l2 = f.logistic_l2;
  if (set("--row-ratio")) c.outlier_row_ratio = f.row_ratio;
  if (set("--col-ratio")) c.outlier_col_ratio = f.col_ratio;
  if (set("--tail-prob")) c.outlier_tail_prob = f.tail_prob;
  if (set("--budgets")) c.fix_budgets = f.budgets;
  if (set("--fix-mode")) c.fix_mode = f.fix_mode;
  if (set("--flip-ratio")) c.flip_ratio = f.flip_ratio;
  if (set("--remove-fraction")) c.remove_fraction = f.remove_fraction;
  if (set("--removal-step")) c.removal_step = f.removal_step;
  if (set("--images")) c.image_count = f.image_count;
  if (set("--image-height")) c.image_height = f.image_height;
  if (set("--image-width")) c.image_width = f.image_width;
  if (set("--image-channels")) c.image_channels = f.image_channels;
  if (set("--trigger-size")) c.trigger_size = f.trigger_size;
  if (set("--trigger-value")) c.trigger_value = f.trigger_value;
  if (set("--poison-fraction")) c.poison_fraction = f.poison_fraction;
  if (set("--source-class")) c.source_class = f.source_class;
  if (set("--target-class")) c.target_class = f.target_class;
  if (set("--texture-mean0")) c.texture_mean0 = f.texture_mean0;
  if (set("--texture-mean1")) c.texture_mean1 = f.texture_mean1;
  if (set("--texture-std")) c.texture_std = f.texture_std;
  if (set("--oracle-instances")) c.oracle_instances = f.oracle_instances;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint data-feature valuation for tabular classifiers"};
  app.set_version_flag("--version", oobval::kVersion);
  app.require_subcommand(1);

  FlagBag flags;
  const std::pair<const char*, const char*> commands[] = {
      {"value", "score every cell and point of a training set"},
      {"outlier-bench", "inject cell outliers and measure detection quality"},
      {"fix", "repair the worst-scored cells under budgets and track accuracy"},
      {"mislabel", "flip labels, detect them, and remove the worst points"},
      {"backdoor", "poison textures with a trigger and localize it per image"},
      {"oracle-check", "verify the fast valuation against independent oracles"},
  };
  for (const auto& [name, desc] : commands) add_options(app.add_subcommand(name, desc), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? oobval::kExitOk : oobval::kExitConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    oobval::RunConfig config;
    std::set<std::string> config_keys;
    if (sub->count("--config") > 0) config = oobval::load_config_file(flags.config, &config_keys);
    apply_flags(sub, flags, config);
    // Fine trigger localization wants narrower subsets; keep the usual
    // default everywhere the user did not choose one.
    if (sub->get_name() == "backdoor" && sub->count("--feature-ratio") == 0 &&
        config_keys.count("feature_ratio") == 0) {
      config.feature_ratio = 0.25;
    }
    // Value outliers by where they sit, not only by what they break: the
    // outlier protocols default to the distance-regularized score.
    if ((sub->get_name() == "outlier-bench" || sub->get_name() == "fix") &&
        sub->count("--score-fn") == 0 && config_keys.count("score_fn") == 0) {
      config.score_fn = "dist-reg-accuracy";
    }
    return oobval::run_command(sub->get_name(), config);
  } catch (const oobval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return oobval::kExitConfigError;
  } catch (const oobval::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return oobval::kExitDataError;
  } catch (const oobval::ComputeError& e) {
    std::cerr << "compute error: " << e.what() << "\n";
    return oobval::kExitComputeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return oobval::kExitComputeError;
  }
}
