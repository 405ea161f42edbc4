#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oobval/common.hpp"
#include "oobval/dataset.hpp"
#include "oobval/ensemble.hpp"

namespace oobval {

// Per-prediction quality score T(y, yhat) aggregated by the valuations.
// dist_reg_accuracy adds a per-learner distance regularizer: for each OOB
// point, the negative L2 distance between its subset features and the
// weighted in-bag mean of its class, scaled by that learner's largest such
// distance so the term lies in [-1, 0].
enum class ScoreFn { accuracy, neg_squared_error, dist_reg_accuracy };

ScoreFn score_fn_from_string(const std::string& name);
std::string to_string(ScoreFn fn);

struct CellValuation {
  Matrix scores;                  // n x d, NaN where pair_counts is zero
  Grid<std::uint32_t> pair_counts;
};

struct PointValuation {
  std::vector<double> scores;           // NaN where counts is zero
  std::vector<std::uint32_t> counts;    // contributing learners (or cells, for marginalize)
  std::vector<std::uint8_t> partial;    // marginalize only: rows that skipped missing cells
};

// Joint cell values: for cell (i,j), the mean of T over learners that left
// row i out of bag and included column j in their subset.
CellValuation compute_2d_oob(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                             unsigned threads = 0);

// Classical out-of-bag point values; predictions use each learner's own subset.
PointValuation compute_data_oob(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                                unsigned threads = 0);

// Row means over non-missing cells; rows with any missing cell are flagged.
PointValuation marginalize(const CellValuation& cv);

// Independent evaluation route for cell (i,j): group learners by identical
// subset, form per-subset out-of-bag point values, and average them weighted
// by each subset group's OOB count for row i. Agrees with compute_2d_oob up
// to floating-point reassociation. Errors when the cell has no OOB evidence.
double conditional_oob_expectation(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                                   std::size_t i, std::size_t j);

// Same route for the marginalized point value of row i. Requires every cell
// of row i to be non-missing.
double marginal_oob_expectation(const EnsembleRecord& rec, const Dataset& ds, ScoreFn score_fn,
                                std::size_t i);

// Ranking-time imputation: a copy of the score matrix with each missing cell
// replaced by its column's mean over non-missing cells. Columns with no
// evidence at all stay missing.
Matrix impute_missing_with_column_mean(const CellValuation& cv);

// Atomic (temp file + rename). Missing scores become empty fields.
void write_cell_scores_csv(const CellValuation& cv, std::span<const std::string> feature_names,
                           const std::string& path);
void write_point_scores_csv(const PointValuation& pv, const std::string& path);

}  // namespace oobval
