#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lawn/train.hpp"

namespace lawn::tuning {

/// Exhaustive search axes. Grid size is the product of the axis lengths;
/// points enumerate with learning_rate outermost and base_filters innermost.
struct ParamGrid {
  std::vector<double> learning_rate = {1e-3};
  std::vector<double> dropout_rate = {0.3};
  std::vector<double> l2_lambda = {1e-4};
  std::vector<int> base_filters = {32};

  void validate() const;
  size_t size() const;
};

struct GridPoint {
  size_t index = 0;  // enumeration order
  double learning_rate = 1e-3;
  double dropout_rate = 0.3;
  double l2_lambda = 1e-4;
  int base_filters = 32;
};

struct CvResult {
  GridPoint point;
  std::vector<double> fold_mses;
  double mean_mse = 0.0;
};

/// Seeded shuffle of 0..n-1 cut into k disjoint covering folds of size
/// floor(n/k) or ceil(n/k).
std::vector<std::vector<size_t>> kfold_split(size_t n, size_t k, uint64_t seed);

struct GridSearchOptions {
  size_t k = 5;
  uint64_t seed = 0;
  int budget_epochs = 20;
  bool by_origin = true;  // fold over origin_ids rather than records
  int in_h = 64, in_w = 64, in_c = 3;
  training::TrainConfig base_config;  // lr/dropout/l2/filters overridden per point
  training::DataSource source;
};

struct GridSearchResult {
  GridPoint best;
  std::vector<CvResult> results;
};

/// For every grid point: k trainings on k-1 folds scoring held-out MSE.
/// Best point has the lowest mean fold MSE; ties break by enumeration order.
/// Per-point seeds derive from (seed, point index, fold index).
GridSearchResult grid_search(const ParamGrid& grid, const data::Manifest& manifest,
                             const GridSearchOptions& opts);

/// Plain key=list grammar, e.g. `learning_rate=1e-3,1e-4`. Keys:
/// learning_rate, dropout_rate, l2_lambda, base_filters. '#' starts a comment.
ParamGrid parse_param_grid(const std::string& text);

/// One row per (point, fold) plus a summary row per point with fold=mean.
std::string grid_results_to_csv(const std::vector<CvResult>& results);

}  // namespace lawn::tuning
