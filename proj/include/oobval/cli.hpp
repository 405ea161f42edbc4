#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "oobval/common.hpp"

namespace oobval {

// Effective settings for one command run. Defaults here, then config-file
// values, then explicit flags, in that order of precedence.
struct RunConfig {
  // input
  std::string data;                  // CSV path; empty selects synthetic data
  std::string labels = "label";      // label column name or 0-based index
  bool has_header = true;
  std::uint64_t synth_n = 1000;
  std::uint64_t synth_d = 20;
  double synth_class_sep = 2.0;
  std::uint64_t n_train = 0;         // CSV split sizes; 0 means 70/30
  std::uint64_t n_test = 0;          // synthetic test-set size; 0 means 1000
  bool norm_pooled = false;          // fit normalization on train+test pooled

  // ensemble
  std::uint64_t trees = 1000;
  double feature_ratio = 0.5;
  std::string weak_learner = "tree";
  std::int64_t tree_max_depth = -1;
  std::uint64_t tree_min_samples_split = 2;
  double tree_min_weight_leaf = 1.0;
  double logistic_lr = 0.1;
  std::int64_t logistic_iterations = 500;
  double logistic_l2 = 1e-4;

  // valuation
  std::string score_fn = "accuracy";
  bool impute_missing = false;       // ranking option; exports keep cells missing

  // experiment parameters
  double outlier_row_ratio = 0.2;
  double outlier_col_ratio = 0.2;
  double outlier_tail_prob = 0.01;
  std::vector<double> fix_budgets = {0.0, 0.04, 0.1, 0.2, 0.5, 1.0};
  std::string fix_mode = "ground_truth";
  double flip_ratio = 0.1;
  double remove_fraction = 0.2;
  double removal_step = 0.01;
  std::uint64_t image_count = 1000;
  std::uint64_t image_height = 16;
  std::uint64_t image_width = 16;
  std::uint64_t image_channels = 1;
  std::uint64_t trigger_size = 3;
  double trigger_value = 1.0;
  double poison_fraction = 0.15;
  std::int64_t source_class = 0;
  std::int64_t target_class = 1;
  double texture_mean0 = 0.15;
  double texture_mean1 = 0.35;
  double texture_std = 0.08;
  std::uint64_t oracle_instances = 3;

  // run
  std::uint64_t seed = 0;
  std::uint64_t threads = 0;
  std::string out_dir = "out";

  void validate() const;  // throws ConfigError
};

// Unknown keys are rejected so typos cannot silently fall back to defaults.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

RunConfig load_config_file(const std::string& path, std::set<std::string>* keys_seen = nullptr);

// Runs one of: value, outlier-bench, fix, mislabel, backdoor, oracle-check.
// Writes the command's artifacts under config.out_dir and echoes the
// effective config. Returns the process exit code (nonzero only when
// oracle-check finds a violated identity).
int run_command(const std::string& command, const RunConfig& config);

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerificationFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitComputeError = 4;

}  // namespace oobval
