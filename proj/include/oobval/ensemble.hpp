#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "oobval/dataset.hpp"
#include "oobval/learners.hpp"

namespace oobval {

enum class WeakLearner { tree, logistic };

struct EnsembleConfig {
  std::uint32_t num_learners = 1000;
  double feature_ratio = 0.5;
  WeakLearner weak_learner = WeakLearner::tree;
  TreeParams tree_params;
  LogisticParams logistic_params;
  std::uint64_t master_seed = 0;
  unsigned threads = 0;  // 0 picks hardware concurrency; results do not depend on it

  // K = max(1, round(feature_ratio * d)), round half up.
  std::uint32_t subset_size(std::size_t d) const;
  void validate(std::size_t d) const;

  bool operator==(const EnsembleConfig&) const = default;
};

struct Learner {
  std::vector<std::uint32_t> counts;  // bootstrap multiplicities, length n, sum n
  std::vector<std::uint32_t> subset;  // feature subset, ascending, size K
  std::variant<Tree, LogisticModel> model;

  // x_sub holds the subset columns in subset order.
  int predict(std::span<const double> x_sub) const;

  bool operator==(const Learner&) const = default;
};

// Everything needed to re-run valuation without retraining.
struct EnsembleRecord {
  EnsembleConfig config;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t num_rows = 0;
  std::uint64_t num_features = 0;
  int num_classes = 0;
  std::vector<Learner> learners;

  bool operator==(const EnsembleRecord&) const = default;
};

// n multinomial draws: counts[i] = number of times row i was drawn.
std::vector<std::uint32_t> bootstrap_counts(std::size_t n, std::uint64_t seed);

// k distinct features out of d, ascending.
std::vector<std::uint32_t> sample_subset(std::size_t d, std::size_t k, std::uint64_t seed);

// Trains config.num_learners weak learners, learner b on the rows with
// positive bootstrap count (as weights) restricted to its feature subset.
// A single-class bootstrap yields a constant-prediction leaf. Per-learner
// seeds derive from (master_seed, b), so results are schedule-independent.
EnsembleRecord train_ensemble(const Dataset& ds, const EnsembleConfig& config);

// Little-endian binary format, round-trip exact.
void save_ensemble(const EnsembleRecord& rec, const std::string& path);
EnsembleRecord load_ensemble(const std::string& path);

}  // namespace oobval
