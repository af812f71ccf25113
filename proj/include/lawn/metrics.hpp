#pragma once

#include <string>
#include <vector>

#include "lawn/checkpoint.hpp"
#include "lawn/dataset.hpp"

namespace lawn::metrics {

enum class Pipeline { cnn, threshold, contour, edges };
enum class Split { training, validation, testing };

Pipeline parse_pipeline(const std::string& name);
std::string to_string(Pipeline p);
imaging::PreprocessMethod preprocess_method(Pipeline p);

Split parse_split(const std::string& name);
std::string to_string(Split s);

/// One reporting row: a pipeline evaluated on one split.
struct EvalResult {
  Pipeline pipeline = Pipeline::cnn;
  Split split = Split::testing;
  size_t n = 0;
  double mse = 0.0;
  double margin_m = 0.0;         // sqrt(mse)
  double accuracy_mean = 0.0;    // 1 - margin / mean(actual)
  double accuracy_median = 0.0;  // 1 - margin / median(actual)
  double mean_predicted_m2 = 0.0;
  double mean_actual_m2 = 0.0;
};

/// Mean squared difference; lengths must match and be nonzero.
double mse_of(const std::vector<double>& preds, const std::vector<double>& targets);

/// Square root of the MSE, the per-house error margin.
double margin(double mse);

/// 1 - sqrt(mse)/center. Not clamped; poor models go to zero and below.
double accuracy(double mse, double center);

/// Pure aggregation of predictions vs targets into a result row.
EvalResult eval_stats(Pipeline pipeline, Split split, const std::vector<double>& preds,
                      const std::vector<double>& targets);

/// Preprocesses every record per the pipeline, runs the model in infer mode,
/// and aggregates. Accuracy centers are the split's own actual mean/median.
EvalResult evaluate_pipeline(const training::Checkpoint& ckpt, const data::Manifest& manifest,
                             Pipeline pipeline, Split split,
                             const std::filesystem::path& data_root);

/// Fixed-order (pipeline, split) report. CSV keeps full precision; the
/// markdown table rounds accuracies to whole percents and areas to two
/// decimals, and prints `-` for the training rows' predicted column.
struct Report {
  std::string csv;
  std::string markdown;
};
Report build_report(std::vector<EvalResult> results);

std::string eval_results_to_csv(const std::vector<EvalResult>& results);
std::vector<EvalResult> eval_results_from_csv(const std::string& text);

}  // namespace lawn::metrics
