#include "oobval/valuation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "oobval/parallel.hpp"

namespace oobval {

ScoreFn score_fn_from_string(const std::string& name) {
  if (name == "accuracy") return ScoreFn::accuracy;
  if (name == "neg-squared-error") return ScoreFn::neg_squared_error;
  if (name == "dist-reg-accuracy") return ScoreFn::dist_reg_accuracy;
  throw ConfigError("unknown score function '" + name + "'");
}

std::string to_string(ScoreFn fn) {
  switch (fn) {
    case ScoreFn::accuracy: return "accuracy";
    case ScoreFn::neg_squared_error: return "neg-squared-error";
    case ScoreFn::dist_reg_accuracy: return "dist-reg-accuracy";
  }
  throw ConfigError("invalid score function");
}

namespace {

void check_match(const EnsembleRecord& rec, const Dataset& ds) {
  ds.validate();
  if (rec.num_rows != ds.n() || rec.num_features != ds.d() || rec.num_classes != ds.num_classes) {
    throw DataError("valuation: ensemble record and dataset shapes differ");
  }
  if (rec.dataset_fingerprint != fingerprint(ds)) {
    throw DataError("valuation: dataset fingerprint does not match the trained record");
  }
}

// Distance context for dist_reg_accuracy, one per learner.
struct DistCtx {
  Matrix class_means;                       // C x K, weighted in-bag mean per class
  std::vector<std::uint8_t> class_present;  // classes with in-bag weight
  std::vector<double> overall_mean;         // fallback for absent classes
  double inv_max_dist = 0.0;                // 0 when the max distance degenerates
};

double oob_distance(const Dataset& ds, const Learner& learner, const DistCtx& ctx, std::size_t i) {
  const int cls = ds.labels[i];
  const double* mean = ctx.class_present[cls] ? ctx.class_means.row(cls).data()
                                              : ctx.overall_mean.data();
  double ss = 0.0;
  for (std::size_t c = 0; c < learner.subset.size(); ++c) {
    const double delta = ds.features(i, learner.subset[c]) - mean[c];
    ss += delta * delta;
  }
  return std::sqrt(ss);
}

DistCtx build_dist_ctx(const Dataset& ds, const Learner& learner, int num_classes) {
  DistCtx ctx;
  const std::size_t k = learner.subset.size();
  ctx.class_means = Matrix(num_classes, k, 0.0);
  ctx.class_present.assign(num_classes, 0);
  ctx.overall_mean.assign(k, 0.0);
  std::vector<double> class_weight(num_classes, 0.0);
  double total_weight = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const std::uint32_t w = learner.counts[i];
    if (w == 0) continue;
    const int cls = ds.labels[i];
    class_weight[cls] += w;
    total_weight += w;
    for (std::size_t c = 0; c < k; ++c) {
      const double x = ds.features(i, learner.subset[c]);
      ctx.class_means(cls, c) += w * x;
      ctx.overall_mean[c] += w * x;
    }
  }
  for (int cls = 0; cls < num_classes; ++cls) {
    if (class_weight[cls] > 0.0) {
      ctx.class_present[cls] = 1;
      for (std::size_t c = 0; c < k; ++c) ctx.class_means(cls, c) /= class_weight[cls];
    }
  }
  for (std::size_t c = 0; c < k; ++c) ctx.overall_mean[c] /= total_weight;

  double max_dist = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (learner.counts[i] != 0) continue;
    max_dist = std::max(max_dist, oob_distance(ds, learner, ctx, i));
  }
  ctx.inv_max_dist = max_dist > 0.0 ? 1.0 / max_dist : 0.0;
  return ctx;
}

struct LearnerScorer {
  const EnsembleRecord& rec;
  const Dataset& ds;
  ScoreFn score_fn;
  std::vector<DistCtx> dist_ctx;  // per learner, dist_reg_accuracy only

  LearnerScorer(const EnsembleRecord& r, const Dataset& data, ScoreFn fn, unsigned threads)
      : rec(r), ds(data), score_fn(fn) {
    if (score_fn == ScoreFn::dist_reg_accuracy) {
      dist_ctx.resize(rec.learners.size());
      parallel_for(rec.learners.size(), threads, [&](std::size_t b) {
        dist_ctx[b] = build_dist_ctx(ds, rec.learners[b], rec.num_classes);
      });
    }
  }

  // T for learner b on OOB row i; x_sub is a scratch buffer of subset size.
  double operator()(std::size_t b, std::size_t i, std::vector<double>& x_sub) const {
    const Learner& learner = rec.learners[b];
    x_sub.resize(learner.subset.size());
    for (std::size_t c = 0; c < learner.subset.size(); ++c) {
      x_sub[c] = ds.features(i, learner.subset[c]);
    }
    const int pred = learner.predict(x_sub);
    switch (score_fn) {
      case ScoreFn::accuracy:
        return pred == ds.labels[i] ? 1.0 : 0.0;
      case ScoreFn::neg_squared_error: {
        const double diff = static_cast<double>(ds.labels[i]) - static_cast<double>(pred);
        return -diff * diff;
      }
      case ScoreFn::dist_reg_accuracy: {
        const double acc = pred == ds.labels[i] ? 1.0 : 0.0;
        const DistCtx& ctx = dist_ctx[b];
        const double d_norm = -oob_distance(ds, learner, ctx, i) * ctx.inv_max_dist;
        return acc + d_norm;
      }
    }
    throw ComputeError("invalid score function");
  }
};

}  // namespace

CellValuation compute_2d_oob(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                             unsigned threads) {
  check_match(rec, ds);
  const std::size_t n = ds.n(), d = ds.d();
  const LearnerScorer scorer(rec, ds, score_fn, threads);

  CellValuation cv;
  cv.scores = Matrix(n, d, 0.0);
  cv.pair_counts = Grid<std::uint32_t>(n, d, 0);

  // Rows accumulate independently in learner order: the result is identical
  // for any thread count.
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<double> x_sub;
    double* sums = cv.scores.row(i).data();
    std::uint32_t* counts = cv.pair_counts.row(i).data();
    for (std::size_t b = 0; b < rec.learners.size(); ++b) {
      const Learner& learner = rec.learners[b];
      if (learner.counts[i] != 0) continue;
      const double t = scorer(b, i, x_sub);
      for (std::uint32_t j : learner.subset) {
        sums[j] += t;
        counts[j] += 1;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      sums[j] = counts[j] > 0 ? sums[j] / counts[j] : kMissingScore;
    }
  });
  return cv;
}

PointValuation compute_data_oob(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                                unsigned threads) {
  check_match(rec, ds);
  const std::size_t n = ds.n();
  const LearnerScorer scorer(rec, ds, score_fn, threads);

  PointValuation pv;
  pv.scores.assign(n, 0.0);
  pv.counts.assign(n, 0);

  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<double> x_sub;
    double sum = 0.0;
    std::uint32_t count = 0;
    for (std::size_t b = 0; b < rec.learners.size(); ++b) {
      if (rec.learners[b].counts[i] != 0) continue;
      sum += scorer(b, i, x_sub);
      ++count;
    }
    pv.scores[i] = count > 0 ? sum / count : kMissingScore;
    pv.counts[i] = count;
  });
  return pv;
}

PointValuation marginalize(const CellValuation& cv) {
  const std::size_t n = cv.scores.rows, d = cv.scores.cols;
  PointValuation pv;
  pv.scores.assign(n, kMissingScore);
  pv.counts.assign(n, 0);
  pv.partial.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::uint32_t present = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double s = cv.scores(i, j);
      if (is_missing(s)) continue;
      sum += s;
      ++present;
    }
    pv.counts[i] = present;
    if (present > 0) pv.scores[i] = sum / present;
    pv.partial[i] = (present > 0 && present < d) ? 1 : 0;
  }
  return pv;
}

namespace {

// Learner indices grouped by identical feature subset, in lexicographic
// subset order.
std::map<std::vector<std::uint32_t>, std::vector<std::size_t>> group_by_subset(
    const EnsembleRecord& rec) {
  std::map<std::vector<std::uint32_t>, std::vector<std::size_t>> groups;
  for (std::size_t b = 0; b < rec.learners.size(); ++b) {
    groups[rec.learners[b].subset].push_back(b);
  }
  return groups;
}

struct GroupStats {
  std::vector<std::uint32_t> subset;
  std::uint32_t oob_count = 0;  // learners in the group with row i out of bag
  double phi = 0.0;             // per-subset Data-OOB value for row i
};

std::vector<GroupStats> per_subset_values(const EnsembleRecord& rec, const Dataset& ds,
                                          ScoreFn score_fn, std::size_t i) {
  const LearnerScorer scorer(rec, ds, score_fn, 1);
  std::vector<GroupStats> stats;
  std::vector<double> x_sub;
  for (const auto& [subset, members] : group_by_subset(rec)) {
    GroupStats g;
    g.subset = subset;
    double sum = 0.0;
    for (std::size_t b : members) {
      if (rec.learners[b].counts[i] != 0) continue;
      sum += scorer(b, i, x_sub);
      ++g.oob_count;
    }
    if (g.oob_count > 0) g.phi = sum / g.oob_count;
    stats.push_back(std::move(g));
  }
  return stats;
}

}  // namespace

double conditional_oob_expectation(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                                   std::size_t i, std::size_t j) {
  check_match(rec, ds);
  if (i >= ds.n() || j >= ds.d()) throw ComputeError("conditional_oob_expectation: index out of range");
  double num = 0.0, den = 0.0;
  for (const GroupStats& g : per_subset_values(rec, ds, score_fn, i)) {
    if (g.oob_count == 0) continue;
    if (!std::binary_search(g.subset.begin(), g.subset.end(), static_cast<std::uint32_t>(j))) continue;
    num += static_cast<double>(g.oob_count) * g.phi;
    den += static_cast<double>(g.oob_count);
  }
  if (den == 0.0) throw ComputeError("conditional_oob_expectation: cell has no out-of-bag evidence");
  return num / den;
}

double marginal_oob_expectation(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                                std::size_t i) {
  check_match(rec, ds);
  if (i >= ds.n()) throw ComputeError("marginal_oob_expectation: index out of range");
  const std::size_t d = ds.d();
  const auto stats = per_subset_values(rec, ds, score_fn, i);

  // Per-column normalizers of the subset-group weights.
  std::vector<double> column_total(d, 0.0);
  for (const GroupStats& g : stats) {
    for (std::uint32_t j : g.subset) column_total[j] += g.oob_count;
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (column_total[j] == 0.0) {
      throw ComputeError("marginal_oob_expectation: row has a cell with no out-of-bag evidence");
    }
  }

  double result = 0.0;
  for (const GroupStats& g : stats) {
    if (g.oob_count == 0) continue;
    double weight = 0.0;
    for (std::uint32_t j : g.subset) weight += g.oob_count / column_total[j];
    result += weight / static_cast<double>(d) * g.phi;
  }
  return result;
}

Matrix impute_missing_with_column_mean(const CellValuation& cv) {
  Matrix out = cv.scores;
  const std::size_t n = cv.scores.rows, d = cv.scores.cols;
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (is_missing(cv.scores(i, j))) continue;
      sum += cv.scores(i, j);
      ++present;
    }
    if (present == 0) continue;
    const double mean = sum / present;
    for (std::size_t i = 0; i < n; ++i) {
      if (is_missing(out(i, j))) out(i, j) = mean;
    }
  }
  return out;
}

namespace {

// Writes via a temp file in the same directory, then renames into place.
class AtomicText {
 public:
  explicit AtomicText(const std::string& path) : final_(path), tmp_(path + ".tmp"), out_(tmp_) {
    if (!out_) throw DataError("cannot write '" + tmp_ + "'");
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) throw DataError("write failed for '" + tmp_ + "'");
    out_.close();
    std::filesystem::rename(tmp_, final_);
  }

 private:
  std::string final_, tmp_;
  std::ofstream out_;
};

}  // namespace

void write_cell_scores_csv(const CellValuation& cv, std::span<const std::string> feature_names,
                           const std::string& path) {
  if (feature_names.size() != cv.scores.cols) throw DataError("cell scores: feature name count mismatch");
  AtomicText file(path);
  auto& out = file.stream();
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    if (j > 0) out << ',';
    out << feature_names[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < cv.scores.rows; ++i) {
    for (std::size_t j = 0; j < cv.scores.cols; ++j) {
      if (j > 0) out << ',';
      const double s = cv.scores(i, j);
      if (!is_missing(s)) out << format_double(s);
    }
    out << '\n';
  }
  file.commit();
}

void write_point_scores_csv(const PointValuation& pv, const std::string& path) {
  AtomicText file(path);
  auto& out = file.stream();
  out << "index,score\n";
  for (std::size_t i = 0; i < pv.scores.size(); ++i) {
    out << i << ',';
    if (!is_missing(pv.scores[i])) out << format_double(pv.scores[i]);
    out << '\n';
  }
  file.commit();
}

}  // namespace oobval
