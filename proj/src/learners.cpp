#include "oobval/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oobval {

namespace {

struct TreeBuilder {
  const Matrix& X;
  std::span<const int> y;
  std::span<const std::uint32_t> w;
  int C;
  TreeParams params;
  Tree tree;

  std::vector<std::uint32_t> rows;     // active rows, partitioned per node
  std::vector<std::uint32_t> scratch;  // sort buffer

  TreeBuilder(const Matrix& X_, std::span<const int> y_, std::span<const std::uint32_t> w_, int C_,
              const TreeParams& p)
      : X(X_), y(y_), w(w_), C(C_), params(p) {}

  std::int32_t make_leaf(const std::vector<double>& counts) {
    TreeNode node;
    node.class_counts = counts;
    int best = 0;
    for (int c = 1; c < C; ++c) {
      if (counts[c] > counts[best]) best = c;
    }
    node.predicted_class = best;
    tree.nodes.push_back(std::move(node));
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  }

  static double gini(const std::vector<double>& counts, double total) {
    double g = 1.0;
    for (double c : counts) {
      const double p = c / total;
      g -= p * p;
    }
    return g;
  }

  std::int32_t build(std::size_t begin, std::size_t end, int depth) {
    std::vector<double> counts(C, 0.0);
    double total = 0.0;
    for (std::size_t r = begin; r < end; ++r) {
      const std::uint32_t row = rows[r];
      counts[y[row]] += w[row];
      total += w[row];
    }

    int present = 0;
    for (double c : counts) present += c > 0.0 ? 1 : 0;
    const bool depth_capped = params.max_depth >= 0 && depth >= params.max_depth;
    if (present <= 1 || total < params.min_samples_split || depth_capped) {
      return make_leaf(counts);
    }

    // Exact greedy search: features ascending, thresholds ascending, strict
    // improvement only, so ties resolve to the lowest (feature, threshold).
    const double parent_gini = gini(counts, total);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = -std::numeric_limits<double>::infinity();

    const std::size_t m = end - begin;
    scratch.assign(rows.begin() + begin, rows.begin() + end);
    std::vector<double> left_counts(C);
    for (std::size_t k = 0; k < X.cols; ++k) {
      std::sort(scratch.begin(), scratch.end(), [&](std::uint32_t a, std::uint32_t b) {
        return X(a, k) < X(b, k);
      });
      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      double left_total = 0.0;
      for (std::size_t r = 0; r + 1 < m; ++r) {
        const std::uint32_t row = scratch[r];
        left_counts[y[row]] += w[row];
        left_total += w[row];
        const double v = X(row, k);
        const double v_next = X(scratch[r + 1], k);
        if (v == v_next) continue;
        const double right_total = total - left_total;
        if (left_total < params.min_weight_leaf || right_total < params.min_weight_leaf) continue;
        double left_gini = 1.0, right_gini = 1.0;
        for (int c = 0; c < C; ++c) {
          const double pl = left_counts[c] / left_total;
          const double pr = (counts[c] - left_counts[c]) / right_total;
          left_gini -= pl * pl;
          right_gini -= pr * pr;
        }
        const double gain =
            parent_gini - (left_total / total) * left_gini - (right_total / total) * right_gini;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(k);
          best_threshold = v + (v_next - v) / 2.0;
        }
      }
    }

    if (best_feature < 0) return make_leaf(counts);

    const auto mid_it = std::stable_partition(
        rows.begin() + begin, rows.begin() + end,
        [&](std::uint32_t row) { return X(row, best_feature) <= best_threshold; });
    const std::size_t mid = static_cast<std::size_t>(mid_it - rows.begin());

    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    tree.nodes.push_back(std::move(node));
    const auto self = static_cast<std::int32_t>(tree.nodes.size() - 1);
    const std::int32_t left = build(begin, mid, depth + 1);
    const std::int32_t right = build(mid, end, depth + 1);
    tree.nodes[self].left = left;
    tree.nodes[self].right = right;
    return self;
  }
};

}  // namespace

Tree fit_tree(const Matrix& X, std::span<const int> y, std::span<const std::uint32_t> weights,
              int num_classes, const TreeParams& params) {
  if (X.rows == 0 || X.cols == 0) throw ComputeError("fit_tree: empty matrix");
  if (y.size() != X.rows || weights.size() != X.rows) throw ComputeError("fit_tree: length mismatch");
  if (num_classes < 2) throw ComputeError("fit_tree: need at least two classes");

  TreeBuilder builder(X, y, weights, num_classes, params);
  for (std::uint32_t i = 0; i < X.rows; ++i) {
    if (weights[i] > 0) builder.rows.push_back(i);
  }
  if (builder.rows.empty()) throw ComputeError("fit_tree: all weights are zero");
  builder.build(0, builder.rows.size(), 0);
  builder.tree.num_classes = num_classes;
  return std::move(builder.tree);
}

int predict_tree(const Tree& tree, std::span<const double> x) {
  std::int32_t node = 0;
  while (!tree.nodes[node].is_leaf()) {
    const TreeNode& nd = tree.nodes[node];
    node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[node].predicted_class;
}

double LogisticModel::decision(std::span<const double> x) const {
  double z = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
  return z;
}

double LogisticModel::probability(std::span<const double> x) const {
  return 1.0 / (1.0 + std::exp(-decision(x)));
}

int LogisticModel::predict(std::span<const double> x) const {
  return decision(x) >= 0.0 ? 1 : 0;
}

namespace {

double total_weight(std::span<const std::uint32_t> weights) {
  double sum = 0.0;
  for (std::uint32_t wi : weights) sum += wi;
  return sum;
}

}  // namespace

double logistic_loss(const Matrix& X, std::span<const int> y, std::span<const std::uint32_t> weights,
                     const std::vector<double>& w, double bias, double l2) {
  const double W = total_weight(weights);
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    if (weights[i] == 0) continue;
    double z = bias;
    for (std::size_t j = 0; j < X.cols; ++j) z += w[j] * X(i, j);
    // softplus(z) - y*z, stable for large |z|
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    loss += weights[i] * (softplus - y[i] * z);
  }
  loss /= W;
  double reg = 0.0;
  for (double wi : w) reg += wi * wi;
  return loss + 0.5 * l2 * reg;
}

void logistic_gradient(const Matrix& X, std::span<const int> y, std::span<const std::uint32_t> weights,
                       const std::vector<double>& w, double bias, double l2,
                       std::vector<double>& grad_w, double& grad_b) {
  const double W = total_weight(weights);
  grad_w.assign(X.cols, 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    if (weights[i] == 0) continue;
    double z = bias;
    for (std::size_t j = 0; j < X.cols; ++j) z += w[j] * X(i, j);
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double r = weights[i] * (p - y[i]);
    for (std::size_t j = 0; j < X.cols; ++j) grad_w[j] += r * X(i, j);
    grad_b += r;
  }
  for (std::size_t j = 0; j < X.cols; ++j) grad_w[j] = grad_w[j] / W + l2 * w[j];
  grad_b /= W;
}

LogisticModel fit_logistic_weighted(const Matrix& X, std::span<const int> y,
                                    std::span<const std::uint32_t> weights,
                                    const LogisticParams& params) {
  if (X.rows == 0 || X.cols == 0) throw ComputeError("fit_logistic: empty matrix");
  if (y.size() != X.rows || weights.size() != X.rows) throw ComputeError("fit_logistic: length mismatch");
  bool seen[2] = {false, false};
  for (std::size_t i = 0; i < X.rows; ++i) {
    if (weights[i] == 0) continue;
    if (y[i] != 0 && y[i] != 1) throw ComputeError("fit_logistic: labels must be 0/1");
    seen[y[i]] = true;
  }
  if (!seen[0] || !seen[1]) throw ComputeError("fit_logistic: both classes required");

  LogisticModel model;
  model.weights.assign(X.cols, 0.0);
  std::vector<double> grad_w;
  double grad_b = 0.0;
  for (int it = 0; it < params.iterations; ++it) {
    logistic_gradient(X, y, weights, model.weights, model.bias, params.l2, grad_w, grad_b);
    for (std::size_t j = 0; j < X.cols; ++j) model.weights[j] -= params.learning_rate * grad_w[j];
    model.bias -= params.learning_rate * grad_b;
  }
  return model;
}

LogisticModel fit_logistic(const Matrix& X, std::span<const int> y, const LogisticParams& params) {
  std::vector<std::uint32_t> unit(X.rows, 1);
  return fit_logistic_weighted(X, y, unit, params);
}

namespace {

template <typename Model>
double accuracy_impl(const Model& model, const Dataset& ds, std::span<const std::uint32_t> subset) {
  ds.validate();
  std::vector<double> buf;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    int pred;
    if (subset.empty()) {
      pred = [&] {
        if constexpr (std::is_same_v<Model, Tree>) return predict_tree(model, ds.features.row(i));
        else return model.predict(ds.features.row(i));
      }();
    } else {
      buf.resize(subset.size());
      for (std::size_t k = 0; k < subset.size(); ++k) buf[k] = ds.features(i, subset[k]);
      if constexpr (std::is_same_v<Model, Tree>) pred = predict_tree(model, buf);
      else pred = model.predict(buf);
    }
    correct += pred == ds.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.n());
}

}  // namespace

double accuracy(const Tree& tree, const Dataset& ds, std::span<const std::uint32_t> subset) {
  return accuracy_impl(tree, ds, subset);
}

double accuracy(const LogisticModel& model, const Dataset& ds, std::span<const std::uint32_t> subset) {
  return accuracy_impl(model, ds, subset);
}

}  // namespace oobval
