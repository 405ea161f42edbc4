#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oobval/common.hpp"
#include "oobval/dataset.hpp"

namespace oobval {

struct TreeParams {
  int max_depth = -1;                   // -1 means unlimited
  std::uint32_t min_samples_split = 2;  // weighted row count needed to split
  double min_weight_leaf = 1.0;

  bool operator==(const TreeParams&) const = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf; otherwise a column of the training matrix
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t predicted_class = -1;  // leaves only
  std::vector<double> class_counts;   // leaves only, weighted

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

// Nodes in preorder, root at index 0.
struct Tree {
  std::vector<TreeNode> nodes;
  int num_classes = 0;

  bool operator==(const Tree&) const = default;
};

// CART with exact greedy splits: maximizes weighted Gini impurity decrease,
// thresholds at midpoints between consecutive distinct values, ties broken
// toward the lowest feature index then the lowest threshold. Rows with zero
// weight are ignored; integer weights behave exactly like row replication.
Tree fit_tree(const Matrix& X, std::span<const int> y, std::span<const std::uint32_t> weights,
              int num_classes, const TreeParams& params = {});

int predict_tree(const Tree& tree, std::span<const double> x);

struct LogisticParams {
  double learning_rate = 0.1;
  int iterations = 500;
  double l2 = 1e-4;

  bool operator==(const LogisticParams&) const = default;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;

  double decision(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
  // Probability threshold 0.5, ties to class 1.
  int predict(std::span<const double> x) const;

  bool operator==(const LogisticModel&) const = default;
};

// Binary logistic regression by full-batch gradient descent from zero init.
// The data term is averaged over the total weight, so duplicating rows (or
// scaling all weights) leaves the fit unchanged.
LogisticModel fit_logistic(const Matrix& X, std::span<const int> y, const LogisticParams& params = {});

LogisticModel fit_logistic_weighted(const Matrix& X, std::span<const int> y,
                                    std::span<const std::uint32_t> weights,
                                    const LogisticParams& params = {});

// Average NLL over total weight plus (l2/2)*||w||^2; bias unregularized.
double logistic_loss(const Matrix& X, std::span<const int> y, std::span<const std::uint32_t> weights,
                     const std::vector<double>& w, double bias, double l2);

void logistic_gradient(const Matrix& X, std::span<const int> y, std::span<const std::uint32_t> weights,
                       const std::vector<double>& w, double bias, double l2,
                       std::vector<double>& grad_w, double& grad_b);

// Fraction of correct predictions on ds. A non-empty subset restricts the
// model's inputs to those columns (model trained on K columns, subset size K).
double accuracy(const Tree& tree, const Dataset& ds, std::span<const std::uint32_t> subset = {});
double accuracy(const LogisticModel& model, const Dataset& ds,
                std::span<const std::uint32_t> subset = {});

}  // namespace oobval
