#include "oobval/ensemble.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "oobval/parallel.hpp"
#include "oobval/rng.hpp"

namespace oobval {

std::uint32_t EnsembleConfig::subset_size(std::size_t d) const {
  const double k = std::floor(feature_ratio * static_cast<double>(d) + 0.5);
  return static_cast<std::uint32_t>(std::max(1.0, k));
}

void EnsembleConfig::validate(std::size_t d) const {
  if (num_learners == 0) throw ConfigError("ensemble: num_learners must be positive");
  if (!(feature_ratio > 0.0) || feature_ratio > 1.0) {
    throw ConfigError("ensemble: feature_ratio must be in (0,1]");
  }
  if (subset_size(d) > d) throw ConfigError("ensemble: subset size exceeds feature count");
  if (tree_params.max_depth < -1) throw ConfigError("ensemble: max_depth must be >= -1");
  if (tree_params.min_weight_leaf < 0) throw ConfigError("ensemble: min_weight_leaf must be >= 0");
  if (logistic_params.iterations < 1) throw ConfigError("ensemble: iterations must be positive");
  if (logistic_params.learning_rate <= 0) throw ConfigError("ensemble: learning_rate must be positive");
  if (logistic_params.l2 < 0) throw ConfigError("ensemble: l2 must be >= 0");
}

int Learner::predict(std::span<const double> x_sub) const {
  if (const Tree* tree = std::get_if<Tree>(&model)) return predict_tree(*tree, x_sub);
  return std::get<LogisticModel>(model).predict(x_sub);
}

std::vector<std::uint32_t> bootstrap_counts(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ComputeError("bootstrap_counts: n must be positive");
  Rng rng(seed);
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[rng.uniform_below(n)];
  return counts;
}

std::vector<std::uint32_t> sample_subset(std::size_t d, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > d) throw ComputeError("sample_subset: need 0 < k <= d");
  Rng rng(seed);
  return sample_without_replacement(d, k, rng);
}

namespace {

Learner train_one(const Dataset& ds, const EnsembleConfig& config, std::uint32_t k,
                  std::uint64_t learner_seed) {
  Learner learner;
  learner.counts = bootstrap_counts(ds.n(), derive_seed(learner_seed, 0));
  learner.subset = sample_subset(ds.d(), k, derive_seed(learner_seed, 1));

  std::vector<std::uint32_t> in_rows;
  for (std::uint32_t i = 0; i < ds.n(); ++i) {
    if (learner.counts[i] > 0) in_rows.push_back(i);
  }

  int first_class = ds.labels[in_rows[0]];
  bool single_class = true;
  for (std::uint32_t r : in_rows) {
    if (ds.labels[r] != first_class) {
      single_class = false;
      break;
    }
  }
  if (single_class) {
    Tree leaf;
    leaf.num_classes = ds.num_classes;
    TreeNode node;
    node.predicted_class = first_class;
    node.class_counts.assign(ds.num_classes, 0.0);
    for (std::uint32_t r : in_rows) node.class_counts[first_class] += learner.counts[r];
    leaf.nodes.push_back(std::move(node));
    learner.model = std::move(leaf);
    return learner;
  }

  Matrix X_sub(in_rows.size(), k);
  std::vector<int> y_sub(in_rows.size());
  std::vector<std::uint32_t> w_sub(in_rows.size());
  for (std::size_t r = 0; r < in_rows.size(); ++r) {
    const std::uint32_t row = in_rows[r];
    for (std::uint32_t c = 0; c < k; ++c) X_sub(r, c) = ds.features(row, learner.subset[c]);
    y_sub[r] = ds.labels[row];
    w_sub[r] = learner.counts[row];
  }

  if (config.weak_learner == WeakLearner::tree) {
    learner.model = fit_tree(X_sub, y_sub, w_sub, ds.num_classes, config.tree_params);
  } else {
    learner.model = fit_logistic_weighted(X_sub, y_sub, w_sub, config.logistic_params);
  }
  return learner;
}

}  // namespace

EnsembleRecord train_ensemble(const Dataset& ds, const EnsembleConfig& config) {
  ds.validate();
  config.validate(ds.d());
  if (config.weak_learner == WeakLearner::logistic && ds.num_classes != 2) {
    throw ConfigError("ensemble: logistic weak learners require binary labels");
  }

  EnsembleRecord rec;
  rec.config = config;
  rec.dataset_fingerprint = fingerprint(ds);
  rec.num_rows = ds.n();
  rec.num_features = ds.d();
  rec.num_classes = ds.num_classes;
  rec.learners.resize(config.num_learners);

  const std::uint32_t k = config.subset_size(ds.d());
  parallel_for(config.num_learners, config.threads, [&](std::size_t b) {
    rec.learners[b] = train_one(ds, config, k, derive_seed(config.master_seed, b));
  });
  return rec;
}

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw DataError("cannot write '" + path + "'");
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void close() {
    out_.flush();
    if (!out_) throw DataError("write failed for '" + path_ + "'");
  }

 private:
  void raw(const void* p, std::size_t len) { out_.write(static_cast<const char*>(p), len); }
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot open '" + path + "'");
  }
  std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
  std::int32_t i32() { std::int32_t v; raw(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
  double f64() { double v; raw(&v, 8); return v; }

 private:
  void raw(void* p, std::size_t len) {
    in_.read(static_cast<char*>(p), len);
    if (in_.gcount() != static_cast<std::streamsize>(len)) {
      throw DataError("'" + path_ + "': truncated ensemble file");
    }
  }
  std::ifstream in_;
  std::string path_;
};

constexpr std::uint32_t kMagic = 0x4c41564fu;  // "OVAL"
constexpr std::uint32_t kFormatVersion = 1;

void write_tree(Writer& w, const Tree& tree) {
  w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
  for (const TreeNode& node : tree.nodes) {
    w.i32(node.feature);
    if (node.is_leaf()) {
      w.i32(node.predicted_class);
      w.u32(static_cast<std::uint32_t>(node.class_counts.size()));
      for (double c : node.class_counts) w.f64(c);
    } else {
      w.f64(node.threshold);
      w.i32(node.left);
      w.i32(node.right);
    }
  }
}

Tree read_tree(Reader& r, int num_classes) {
  Tree tree;
  tree.num_classes = num_classes;
  const std::uint32_t count = r.u32();
  tree.nodes.resize(count);
  for (TreeNode& node : tree.nodes) {
    node.feature = r.i32();
    if (node.feature < 0) {
      node.predicted_class = r.i32();
      node.class_counts.resize(r.u32());
      for (double& c : node.class_counts) c = r.f64();
    } else {
      node.threshold = r.f64();
      node.left = r.i32();
      node.right = r.i32();
    }
  }
  return tree;
}

}  // namespace

void save_ensemble(const EnsembleRecord& rec, const std::string& path) {
  Writer w(path);
  w.u32(kMagic);
  w.u32(kFormatVersion);
  w.u32(rec.config.num_learners);
  w.f64(rec.config.feature_ratio);
  w.u8(rec.config.weak_learner == WeakLearner::tree ? 0 : 1);
  w.i32(rec.config.tree_params.max_depth);
  w.u32(rec.config.tree_params.min_samples_split);
  w.f64(rec.config.tree_params.min_weight_leaf);
  w.f64(rec.config.logistic_params.learning_rate);
  w.i32(rec.config.logistic_params.iterations);
  w.f64(rec.config.logistic_params.l2);
  w.u64(rec.config.master_seed);
  w.u64(rec.dataset_fingerprint);
  w.u64(rec.num_rows);
  w.u64(rec.num_features);
  w.i32(rec.num_classes);
  for (const Learner& learner : rec.learners) {
    for (std::uint32_t c : learner.counts) w.u32(c);
    w.u32(static_cast<std::uint32_t>(learner.subset.size()));
    for (std::uint32_t s : learner.subset) w.u32(s);
    if (const Tree* tree = std::get_if<Tree>(&learner.model)) {
      w.u8(0);
      write_tree(w, *tree);
    } else {
      const auto& model = std::get<LogisticModel>(learner.model);
      w.u8(1);
      w.u32(static_cast<std::uint32_t>(model.weights.size()));
      for (double wt : model.weights) w.f64(wt);
      w.f64(model.bias);
    }
  }
  w.close();
}

EnsembleRecord load_ensemble(const std::string& path) {
  Reader r(path);
  if (r.u32() != kMagic) throw DataError("'" + path + "': not an ensemble file");
  if (r.u32() != kFormatVersion) throw DataError("'" + path + "': unsupported format version");
  EnsembleRecord rec;
  rec.config.num_learners = r.u32();
  rec.config.feature_ratio = r.f64();
  rec.config.weak_learner = r.u8() == 0 ? WeakLearner::tree : WeakLearner::logistic;
  rec.config.tree_params.max_depth = r.i32();
  rec.config.tree_params.min_samples_split = r.u32();
  rec.config.tree_params.min_weight_leaf = r.f64();
  rec.config.logistic_params.learning_rate = r.f64();
  rec.config.logistic_params.iterations = r.i32();
  rec.config.logistic_params.l2 = r.f64();
  rec.config.master_seed = r.u64();
  rec.dataset_fingerprint = r.u64();
  rec.num_rows = r.u64();
  rec.num_features = r.u64();
  rec.num_classes = r.i32();
  rec.learners.resize(rec.config.num_learners);
  for (Learner& learner : rec.learners) {
    learner.counts.resize(rec.num_rows);
    for (std::uint32_t& c : learner.counts) c = r.u32();
    learner.subset.resize(r.u32());
    for (std::uint32_t& s : learner.subset) s = r.u32();
    if (r.u8() == 0) {
      learner.model = read_tree(r, rec.num_classes);
    } else {
      LogisticModel model;
      model.weights.resize(r.u32());
      for (double& wt : model.weights) wt = r.f64();
      model.bias = r.f64();
      learner.model = std::move(model);
    }
  }
  return rec;
}

}  // namespace oobval
