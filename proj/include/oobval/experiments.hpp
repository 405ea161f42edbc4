#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oobval/common.hpp"
#include "oobval/dataset.hpp"
#include "oobval/learners.hpp"
#include "oobval/valuation.hpp"

namespace oobval {

enum class RankOrder { ascending, descending };

// Cumulative detection curve over a suspicion ranking. Ties keep original
// index order; missing scores are excluded and reported via the counters.
struct DetectionCurve {
  std::vector<double> inspected_fraction;  // starts at 0, ends at 1
  std::vector<double> detection_rate;      // starts at 0, ends at 1
  double auc = 0.0;                        // trapezoidal
  std::size_t num_excluded = 0;
  std::size_t num_excluded_true = 0;
};

DetectionCurve detection_curve(std::span<const double> scores, std::span<const std::uint8_t> truth,
                               RankOrder order);

// Area under precision-recall with step interpolation (average precision).
double aucpr(std::span<const double> scores, std::span<const std::uint8_t> truth, RankOrder order);

struct OutlierInjection {
  Dataset data;
  CellMask mask;
  std::vector<std::string> warnings;
};

// Overwrites round(row_ratio*n) rows x round(col_ratio*d) cells per row with
// two-sided Gaussian tail draws (|z| >= the 1-tail_prob/2 quantile) from each
// column's own fitted mean/std. Constant columns degenerate and warn.
OutlierInjection inject_cell_outliers(const Dataset& ds, double row_ratio, double col_ratio,
                                      double tail_prob, std::uint64_t seed);

// Pixel layout is row-major (row, column, channel), channel fastest.
struct ImageDataset {
  Matrix pixels;  // m x (height*width*channels)
  std::vector<int> labels;
  std::size_t height = 0, width = 0, channels = 0;
  int num_classes = 0;

  std::size_t m() const { return pixels.rows; }
  void validate() const;
};

struct TriggerSpec {
  Matrix pattern;                  // stamped onto every channel, values in [0,1]
  std::size_t offset_bottom = 0;   // from the lower edge
  std::size_t offset_right = 0;    // from the right edge
  double poison_fraction = 0.15;   // of the source class
  int source_class = 0;
  int target_class = 1;
};

struct TriggerInjection {
  ImageDataset data;
  CellMask cell_mask;    // super-pixel grid coordinates, m x (H/2 * W/2)
  PointMask point_mask;  // poisoned images
};

// Stamps the pattern on a uniform sample of source-class images and relabels
// them to the target class. A grid cell counts as poisoned when the trigger
// covers at least 25% of its 2x2 pixel area.
TriggerInjection inject_trigger(const ImageDataset& img, const TriggerSpec& spec, std::uint64_t seed);

// Channel mean, then 2x2 average pooling, flattened row-major. Requires even
// height and width.
Dataset superpixelize(const ImageDataset& img);

// Two balanced classes of iid Gaussian texture, pixel values clamped to [0,1].
ImageDataset synth_texture_images(std::size_t m, std::size_t height, std::size_t width,
                                  std::size_t channels, double mean0, double mean1, double noise_std,
                                  std::uint64_t seed);

// Flattened pixels plus a label column; column count must be H*W*C+1.
ImageDataset load_image_csv(const std::string& path, const std::string& label_column,
                            std::size_t height, std::size_t width, std::size_t channels,
                            bool has_header);

struct AccuracyCurve {
  std::vector<double> fractions;
  std::vector<double> accuracy;
  bool truncated = false;  // point removal stopped early to keep both classes
};

enum class FixMode { ground_truth, column_mean };

struct FixationResult {
  AccuracyCurve curve;
  std::vector<std::size_t> repaired_corrupted;  // per budget, overlap with the mask
};

// Repairs the budget-fraction lowest-scored cells (missing scores rank last)
// and reports a fresh logistic evaluator's test accuracy per budget.
// column_mean imputes from the corrupt data, excluding the repaired cell's row.
FixationResult cell_fixation_run(const Dataset& corrupt, const CellMask& mask, const Dataset& clean,
                                 const Matrix& cell_scores, const Dataset& test,
                                 std::span<const double> budgets, FixMode mode,
                                 const LogisticParams& eval_params = {});

// Drops the lowest-valued points in steps of step_fraction up to
// max_remove_fraction, refitting the logistic evaluator each time.
AccuracyCurve point_removal_run(const Dataset& ds, const PointValuation& pv, const Dataset& test,
                                double max_remove_fraction, double step_fraction = 0.01,
                                const LogisticParams& eval_params = {});

// P2 (ASCII) PGM, values min-max scaled to 0..255 per image. Atomic write.
void write_pgm(const Matrix& values, const std::string& path);

}  // namespace oobval
