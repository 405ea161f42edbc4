#include "oobval/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "oobval/rng.hpp"

namespace oobval {

namespace {

struct Ranking {
  std::vector<std::size_t> order;  // included items, most suspicious first
  std::size_t num_excluded = 0;
  std::size_t num_excluded_true = 0;
};

Ranking rank_by_suspicion(std::span<const double> scores, std::span<const std::uint8_t> truth,
                          RankOrder order) {
  if (scores.size() != truth.size()) throw ComputeError("ranking: scores/truth length mismatch");
  if (scores.empty()) throw ComputeError("ranking: empty input");
  Ranking r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (is_missing(scores[i])) {
      ++r.num_excluded;
      r.num_excluded_true += truth[i] ? 1 : 0;
    } else {
      r.order.push_back(i);
    }
  }
  if (order == RankOrder::ascending) {
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  } else {
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  }
  return r;
}

}  // namespace

DetectionCurve detection_curve(std::span<const double> scores, std::span<const std::uint8_t> truth,
                               RankOrder order) {
  Ranking r = rank_by_suspicion(scores, truth, order);
  std::size_t total_true = 0;
  for (std::size_t i : r.order) total_true += truth[i] ? 1 : 0;
  if (total_true == 0) throw ComputeError("detection_curve: no positive items");
  const std::size_t m = r.order.size();

  DetectionCurve curve;
  curve.num_excluded = r.num_excluded;
  curve.num_excluded_true = r.num_excluded_true;
  curve.inspected_fraction.reserve(m + 1);
  curve.detection_rate.reserve(m + 1);
  curve.inspected_fraction.push_back(0.0);
  curve.detection_rate.push_back(0.0);
  std::size_t found = 0;
  for (std::size_t pos = 0; pos < m; ++pos) {
    found += truth[r.order[pos]] ? 1 : 0;
    curve.inspected_fraction.push_back(static_cast<double>(pos + 1) / static_cast<double>(m));
    curve.detection_rate.push_back(static_cast<double>(found) / static_cast<double>(total_true));
  }
  double auc = 0.0;
  for (std::size_t p = 1; p < curve.inspected_fraction.size(); ++p) {
    const double dx = curve.inspected_fraction[p] - curve.inspected_fraction[p - 1];
    auc += dx * (curve.detection_rate[p] + curve.detection_rate[p - 1]) / 2.0;
  }
  curve.auc = auc;
  return curve;
}

double aucpr(std::span<const double> scores, std::span<const std::uint8_t> truth, RankOrder order) {
  Ranking r = rank_by_suspicion(scores, truth, order);
  std::size_t total_true = 0;
  for (std::size_t i : r.order) total_true += truth[i] ? 1 : 0;
  if (total_true == 0) throw ComputeError("aucpr: no positive items");

  // Step interpolation: sum of precision at each positive hit over P.
  double sum_precision = 0.0;
  std::size_t found = 0;
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
    if (!truth[r.order[pos]]) continue;
    ++found;
    sum_precision += static_cast<double>(found) / static_cast<double>(pos + 1);
  }
  return sum_precision / static_cast<double>(total_true);
}

OutlierInjection inject_cell_outliers(const Dataset& ds, double row_ratio, double col_ratio,
                                      double tail_prob, std::uint64_t seed) {
  ds.validate();
  if (row_ratio < 0.0 || row_ratio > 1.0 || col_ratio < 0.0 || col_ratio > 1.0) {
    throw ComputeError("inject_cell_outliers: ratios must be in [0,1]");
  }
  if (!(tail_prob > 0.0) || tail_prob >= 1.0) {
    throw ComputeError("inject_cell_outliers: tail_prob must be in (0,1)");
  }
  const std::size_t n = ds.n(), d = ds.d();
  const auto num_rows = static_cast<std::size_t>(std::llround(row_ratio * static_cast<double>(n)));
  const auto num_cols = static_cast<std::size_t>(std::llround(col_ratio * static_cast<double>(d)));

  OutlierInjection out;
  out.data = ds;
  out.mask = CellMask(n, d, 0);

  // Column stats come from the data as given, before any cell is touched.
  std::vector<double> means(d), stds(d);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += ds.features(i, j);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = ds.features(i, j) - mean;
      ss += delta * delta;
    }
    double std_dev = std::sqrt(ss / static_cast<double>(n));
    if (std_dev < kStdFloor) {
      std_dev = kStdFloor;
      out.warnings.push_back("column " + std::to_string(j) +
                             " ('" + ds.feature_names[j] + "') is constant; injected outliers degenerate");
    }
    means[j] = mean;
    stds[j] = std_dev;
  }

  Rng rng(seed);
  const auto rows = sample_without_replacement(n, num_rows, rng);
  const double upper = 1.0 - tail_prob / 2.0;
  for (std::uint32_t i : rows) {
    const auto cols = sample_without_replacement(d, num_cols, rng);
    for (std::uint32_t j : cols) {
      const double side = rng.uniform_below(2) == 0 ? 1.0 : -1.0;
      const double z = normal_quantile(upper + (tail_prob / 2.0) * rng.uniform());
      out.data.features(i, j) = means[j] + side * z * stds[j];
      out.mask(i, j) = 1;
    }
  }
  return out;
}

void ImageDataset::validate() const {
  if (m() == 0) throw DataError("images: empty");
  if (height == 0 || width == 0 || channels == 0) throw DataError("images: zero dimension");
  if (pixels.cols != height * width * channels) throw DataError("images: pixel count mismatch");
  if (labels.size() != m()) throw DataError("images: labels/pixels row mismatch");
  if (num_classes < 2) throw DataError("images: needs at least two classes");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DataError("images: label out of range");
  }
}

TriggerInjection inject_trigger(const ImageDataset& img, const TriggerSpec& spec, std::uint64_t seed) {
  img.validate();
  const std::size_t ph = spec.pattern.rows, pw = spec.pattern.cols;
  if (ph == 0 || pw == 0) throw ComputeError("inject_trigger: empty pattern");
  if (ph + spec.offset_bottom > img.height || pw + spec.offset_right > img.width) {
    throw ComputeError("inject_trigger: pattern does not fit inside the image");
  }
  for (double v : spec.pattern.data) {
    if (v < 0.0 || v > 1.0) throw ComputeError("inject_trigger: pattern values must be in [0,1]");
  }
  if (spec.source_class == spec.target_class) throw ComputeError("inject_trigger: classes must differ");
  if (spec.source_class < 0 || spec.source_class >= img.num_classes || spec.target_class < 0 ||
      spec.target_class >= img.num_classes) {
    throw ComputeError("inject_trigger: class out of range");
  }
  if (spec.poison_fraction < 0.0 || spec.poison_fraction > 1.0) {
    throw ComputeError("inject_trigger: poison_fraction must be in [0,1]");
  }
  if (img.height % 2 != 0 || img.width % 2 != 0) {
    throw ComputeError("inject_trigger: even image dimensions required for the cell mask");
  }

  std::vector<std::uint32_t> source_rows;
  for (std::size_t i = 0; i < img.m(); ++i) {
    if (img.labels[i] == spec.source_class) source_rows.push_back(static_cast<std::uint32_t>(i));
  }
  const auto count =
      static_cast<std::size_t>(std::llround(spec.poison_fraction * static_cast<double>(source_rows.size())));
  Rng rng(seed);
  const auto chosen = sample_without_replacement(source_rows.size(), count, rng);

  const std::size_t r0 = img.height - ph - spec.offset_bottom;
  const std::size_t c0 = img.width - pw - spec.offset_right;
  const std::size_t grid_h = img.height / 2, grid_w = img.width / 2;

  TriggerInjection out;
  out.data = img;
  out.point_mask.assign(img.m(), 0);
  out.cell_mask = CellMask(img.m(), grid_h * grid_w, 0);

  for (std::uint32_t pick : chosen) {
    const std::uint32_t row = source_rows[pick];
    out.point_mask[row] = 1;
    out.data.labels[row] = spec.target_class;
    for (std::size_t pr = 0; pr < ph; ++pr) {
      for (std::size_t pc = 0; pc < pw; ++pc) {
        const std::size_t base = ((r0 + pr) * img.width + (c0 + pc)) * img.channels;
        for (std::size_t ch = 0; ch < img.channels; ++ch) {
          out.data.pixels(row, base + ch) = spec.pattern(pr, pc);
        }
      }
    }
    // Mark grid cells whose 2x2 pixel block is covered at least 25% by the
    // trigger rectangle.
    for (std::size_t gi = 0; gi < grid_h; ++gi) {
      const std::size_t cell_r0 = 2 * gi, cell_r1 = 2 * gi + 2;
      const std::size_t over_r =
          std::min(cell_r1, r0 + ph) > std::max(cell_r0, r0) ? std::min(cell_r1, r0 + ph) - std::max(cell_r0, r0) : 0;
      if (over_r == 0) continue;
      for (std::size_t gj = 0; gj < grid_w; ++gj) {
        const std::size_t cell_c0 = 2 * gj, cell_c1 = 2 * gj + 2;
        const std::size_t over_c =
            std::min(cell_c1, c0 + pw) > std::max(cell_c0, c0) ? std::min(cell_c1, c0 + pw) - std::max(cell_c0, c0) : 0;
        if (over_c == 0) continue;
        if (static_cast<double>(over_r * over_c) >= 0.25 * 4.0) {
          out.cell_mask(row, gi * grid_w + gj) = 1;
        }
      }
    }
  }
  return out;
}

Dataset superpixelize(const ImageDataset& img) {
  img.validate();
  if (img.height % 2 != 0 || img.width % 2 != 0) {
    throw ComputeError("superpixelize: even image dimensions required");
  }
  const std::size_t grid_h = img.height / 2, grid_w = img.width / 2;
  Dataset ds;
  ds.features = Matrix(img.m(), grid_h * grid_w);
  ds.labels = img.labels;
  ds.num_classes = img.num_classes;
  for (std::size_t gi = 0; gi < grid_h; ++gi) {
    for (std::size_t gj = 0; gj < grid_w; ++gj) {
      ds.feature_names.push_back("cell_" + std::to_string(gi) + "_" + std::to_string(gj));
    }
  }
  const double ch_norm = static_cast<double>(img.channels);
  for (std::size_t i = 0; i < img.m(); ++i) {
    for (std::size_t gi = 0; gi < grid_h; ++gi) {
      for (std::size_t gj = 0; gj < grid_w; ++gj) {
        double sum = 0.0;
        for (std::size_t pr = 2 * gi; pr < 2 * gi + 2; ++pr) {
          for (std::size_t pc = 2 * gj; pc < 2 * gj + 2; ++pc) {
            const std::size_t base = (pr * img.width + pc) * img.channels;
            double px = 0.0;
            for (std::size_t ch = 0; ch < img.channels; ++ch) px += img.pixels(i, base + ch);
            sum += px / ch_norm;
          }
        }
        ds.features(i, gi * grid_w + gj) = sum / 4.0;
      }
    }
  }
  return ds;
}

ImageDataset synth_texture_images(std::size_t m, std::size_t height, std::size_t width,
                                  std::size_t channels, double mean0, double mean1, double noise_std,
                                  std::uint64_t seed) {
  if (m < 2 || height == 0 || width == 0 || channels == 0) {
    throw ComputeError("synth_texture_images: need m >= 2 and positive dimensions");
  }
  ImageDataset img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.num_classes = 2;
  img.pixels = Matrix(m, height * width * channels);
  img.labels.resize(m);
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const int y = static_cast<int>(i % 2);
    img.labels[i] = y;
    const double mean = y == 1 ? mean1 : mean0;
    for (std::size_t p = 0; p < img.pixels.cols; ++p) {
      img.pixels(i, p) = std::clamp(mean + noise_std * rng.normal(), 0.0, 1.0);
    }
  }
  return img;
}

ImageDataset load_image_csv(const std::string& path, const std::string& label_column,
                            std::size_t height, std::size_t width, std::size_t channels,
                            bool has_header) {
  Dataset ds = load_csv(path, label_column, has_header);
  if (ds.d() != height * width * channels) {
    throw DataError("'" + path + "': pixel column count " + std::to_string(ds.d()) +
                    " does not match " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                    std::to_string(channels));
  }
  ImageDataset img;
  img.pixels = std::move(ds.features);
  img.labels = std::move(ds.labels);
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.num_classes = ds.num_classes;
  img.validate();
  return img;
}

namespace {

// Cell indices, most repair-worthy first: scored cells ascending by score,
// stable in (row, column) order; missing-score cells after them.
std::vector<std::size_t> fixation_ranking(const Matrix& scores) {
  std::vector<std::size_t> scored, missing;
  for (std::size_t idx = 0; idx < scores.data.size(); ++idx) {
    (is_missing(scores.data[idx]) ? missing : scored).push_back(idx);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [&](std::size_t a, std::size_t b) { return scores.data[a] < scores.data[b]; });
  scored.insert(scored.end(), missing.begin(), missing.end());
  return scored;
}

}  // namespace

FixationResult cell_fixation_run(const Dataset& corrupt, const CellMask& mask, const Dataset& clean,
                                 const Matrix& cell_scores, const Dataset& test,
                                 std::span<const double> budgets, FixMode mode,
                                 const LogisticParams& eval_params) {
  corrupt.validate();
  clean.validate();
  test.validate();
  const std::size_t n = corrupt.n(), d = corrupt.d();
  if (clean.n() != n || clean.d() != d || clean.labels != corrupt.labels) {
    throw DataError("cell_fixation_run: corrupt/clean datasets differ in shape or labels");
  }
  if (mask.rows != n || mask.cols != d) throw DataError("cell_fixation_run: mask shape mismatch");
  if (cell_scores.rows != n || cell_scores.cols != d) {
    throw DataError("cell_fixation_run: score shape mismatch");
  }
  if (corrupt.num_classes != 2) throw DataError("cell_fixation_run: binary evaluator only");

  const auto ranking = fixation_ranking(cell_scores);

  // column_mean imputes from the corrupt data as observed, minus the cell's
  // own row.
  std::vector<double> column_sums(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) column_sums[j] += corrupt.features(i, j);
  }

  FixationResult result;
  for (double budget : budgets) {
    if (budget < 0.0 || budget > 1.0) throw ComputeError("cell_fixation_run: budget out of [0,1]");
    const auto k = static_cast<std::size_t>(std::llround(budget * static_cast<double>(n * d)));
    Dataset repaired = corrupt;
    std::size_t hit = 0;
    for (std::size_t pos = 0; pos < k; ++pos) {
      const std::size_t idx = ranking[pos];
      const std::size_t i = idx / d, j = idx % d;
      if (mode == FixMode::ground_truth) {
        repaired.features(i, j) = clean.features(i, j);
      } else {
        repaired.features(i, j) = (column_sums[j] - corrupt.features(i, j)) / static_cast<double>(n - 1);
      }
      hit += mask(i, j) ? 1 : 0;
    }
    const LogisticModel model = fit_logistic(repaired.features, repaired.labels, eval_params);
    result.curve.fractions.push_back(budget);
    result.curve.accuracy.push_back(accuracy(model, test));
    result.repaired_corrupted.push_back(hit);
  }
  return result;
}

AccuracyCurve point_removal_run(const Dataset& ds, const PointValuation& pv, const Dataset& test,
                                double max_remove_fraction, double step_fraction,
                                const LogisticParams& eval_params) {
  ds.validate();
  test.validate();
  if (pv.scores.size() != ds.n()) throw DataError("point_removal_run: valuation length mismatch");
  if (ds.num_classes != 2) throw DataError("point_removal_run: binary evaluator only");
  if (!(step_fraction > 0.0) || max_remove_fraction < 0.0 || max_remove_fraction >= 1.0) {
    throw ComputeError("point_removal_run: bad fractions");
  }

  // Points ascending by value, missing values last, stable by index.
  std::vector<std::size_t> scored, missing;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    (is_missing(pv.scores[i]) ? missing : scored).push_back(i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [&](std::size_t a, std::size_t b) { return pv.scores[a] < pv.scores[b]; });
  scored.insert(scored.end(), missing.begin(), missing.end());

  AccuracyCurve curve;
  const std::size_t n = ds.n();
  for (std::size_t step = 0;; ++step) {
    const double f = step_fraction * static_cast<double>(step);
    if (f > max_remove_fraction + 1e-12) break;
    const auto k = std::min(static_cast<std::size_t>(std::llround(f * static_cast<double>(n))), n);
    std::vector<std::uint8_t> removed(n, 0);
    for (std::size_t pos = 0; pos < k; ++pos) removed[scored[pos]] = 1;

    std::size_t class_count[2] = {0, 0};
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!removed[i]) {
        ++class_count[ds.labels[i]];
        ++kept;
      }
    }
    if (class_count[0] == 0 || class_count[1] == 0) {
      curve.truncated = true;
      break;
    }

    Matrix X(kept, ds.d());
    std::vector<int> y(kept);
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (removed[i]) continue;
      std::copy_n(ds.features.row(i).data(), ds.d(), X.row(r).data());
      y[r] = ds.labels[i];
      ++r;
    }
    const LogisticModel model = fit_logistic(X, y, eval_params);
    curve.fractions.push_back(f);
    curve.accuracy.push_back(accuracy(model, test));
  }
  return curve;
}

void write_pgm(const Matrix& values, const std::string& path) {
  if (values.rows == 0 || values.cols == 0) throw ComputeError("write_pgm: empty image");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values.data) {
    if (is_missing(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) {  // every cell missing
    lo = 0.0;
    hi = 0.0;
  }
  const double range = hi - lo;

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp);
  if (!out) throw DataError("cannot write '" + tmp + "'");
  out << "P2\n" << values.cols << ' ' << values.rows << "\n255\n";
  for (std::size_t i = 0; i < values.rows; ++i) {
    for (std::size_t j = 0; j < values.cols; ++j) {
      if (j > 0) out << ' ';
      const double v = values(i, j);
      int level = 0;
      if (!is_missing(v) && range > 0.0) {
        level = static_cast<int>(std::lround((v - lo) / range * 255.0));
      }
      out << level;
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw DataError("write failed for '" + tmp + "'");
  out.close();
  std::filesystem::rename(tmp, path);
}

}  // namespace oobval
