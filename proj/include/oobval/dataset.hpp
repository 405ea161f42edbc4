#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oobval/common.hpp"

namespace oobval {

// Tabular classification data. Labels are dense class indices in
// first-appearance order of the raw label tokens.
struct Dataset {
  Matrix features;                         // n x d
  std::vector<int> labels;                 // length n, values in [0, num_classes)
  std::vector<std::string> feature_names;  // length d, unique
  int num_classes = 0;

  std::size_t n() const { return features.rows; }
  std::size_t d() const { return features.cols; }

  // Throws DataError when a structural invariant is broken.
  void validate() const;
};

struct NormalizationParams {
  std::vector<double> means;
  std::vector<double> stds;              // population std, floored at 1e-12
  std::vector<std::uint8_t> constant;    // columns zeroed wherever params are applied
};

inline constexpr double kStdFloor = 1e-12;

// Comma-separated values, no quoting. The label column may be given by name
// (requires a header) or as a 0-based column index in decimal. Parse errors
// report 1-based (row, column) file positions. Non-finite fields are errors.
Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header);

// Header always written: feature names then the label column.
void save_csv(const Dataset& ds, const std::string& path, const std::string& label_name = "label");

// Per-column standardization fitted on ds itself.
std::pair<Dataset, NormalizationParams> normalize(const Dataset& ds);

// Standardize with previously fitted params (e.g. train stats onto test data).
Dataset apply_normalization(const Dataset& ds, const NormalizationParams& params);

Dataset invert_normalization(const Dataset& ds, const NormalizationParams& params);

// Disjoint uniform row sample: the first n_train drawn rows form the train
// set, the next n_test the test set.
std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t n_train, std::size_t n_test,
                                  std::uint64_t seed);

// Binary only. Flips round(ratio*n) uniformly chosen labels; mask marks them.
std::pair<Dataset, PointMask> flip_labels(const Dataset& ds, double ratio, std::uint64_t seed);

// Two balanced classes from isotropic unit-variance Gaussians with means
// +/- (class_sep/2)*1/sqrt(d), so class_sep is the distance between the
// class means.
Dataset synth_gaussian(std::size_t n, std::size_t d, double class_sep, std::uint64_t seed);

// FNV-1a over shape, labels, feature bit patterns and names. Stored in
// trained ensembles so valuation can reject a mismatched dataset.
std::uint64_t fingerprint(const Dataset& ds);

}  // namespace oobval
