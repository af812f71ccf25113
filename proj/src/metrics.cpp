#include "lawn/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace lawn::metrics {

Pipeline parse_pipeline(const std::string& name) {
  if (name == "cnn") return Pipeline::cnn;
  if (name == "threshold") return Pipeline::threshold;
  if (name == "contour") return Pipeline::contour;
  if (name == "edges") return Pipeline::edges;
  throw std::invalid_argument("unknown pipeline: " + name);
}

std::string to_string(Pipeline p) {
  switch (p) {
    case Pipeline::cnn: return "cnn";
    case Pipeline::threshold: return "threshold";
    case Pipeline::contour: return "contour";
    case Pipeline::edges: return "edges";
  }
  throw std::invalid_argument("bad pipeline tag");
}

imaging::PreprocessMethod preprocess_method(Pipeline p) {
  switch (p) {
    case Pipeline::cnn: return imaging::PreprocessMethod::none;
    case Pipeline::threshold: return imaging::PreprocessMethod::threshold;
    case Pipeline::contour: return imaging::PreprocessMethod::contour;
    case Pipeline::edges: return imaging::PreprocessMethod::canny;
  }
  throw std::invalid_argument("bad pipeline tag");
}

Split parse_split(const std::string& name) {
  if (name == "training") return Split::training;
  if (name == "validation") return Split::validation;
  if (name == "testing") return Split::testing;
  throw std::invalid_argument("unknown split: " + name);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::training: return "training";
    case Split::validation: return "validation";
    case Split::testing: return "testing";
  }
  throw std::invalid_argument("bad split tag");
}

double mse_of(const std::vector<double>& preds, const std::vector<double>& targets) {
  if (preds.empty() || preds.size() != targets.size())
    throw std::invalid_argument("mse_of: need equal nonzero lengths");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

double margin(double mse) {
  if (mse < 0.0) throw std::invalid_argument("margin: mse must be >= 0");
  return std::sqrt(mse);
}

double accuracy(double mse, double center) {
  if (!(center > 0.0)) throw std::invalid_argument("accuracy: center must be > 0");
  return 1.0 - margin(mse) / center;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

EvalResult eval_stats(Pipeline pipeline, Split split, const std::vector<double>& preds,
                      const std::vector<double>& targets) {
  EvalResult r;
  r.pipeline = pipeline;
  r.split = split;
  r.n = preds.size();
  r.mse = mse_of(preds, targets);
  r.margin_m = margin(r.mse);
  r.mean_actual_m2 = mean_of(targets);
  r.mean_predicted_m2 = mean_of(preds);
  r.accuracy_mean = accuracy(r.mse, r.mean_actual_m2);
  r.accuracy_median = accuracy(r.mse, median_of(targets));
  return r;
}

EvalResult evaluate_pipeline(const training::Checkpoint& ckpt, const data::Manifest& manifest,
                             Pipeline pipeline, Split split,
                             const std::filesystem::path& data_root) {
  if (manifest.empty()) throw std::invalid_argument("evaluate_pipeline: empty manifest");
  training::DataSource source{data_root, preprocess_method(pipeline), ckpt.preprocess};
  training::LoadedDataset data = training::load_dataset(manifest, source);
  nn::Parameters params = ckpt.params;  // running stats stay const for callers
  std::vector<double> preds = training::predict(ckpt.spec, params, data,
                                                ckpt.config.batch_size, ckpt.target_mean,
                                                ckpt.target_std);
  return eval_stats(pipeline, split, preds, data.targets);
}

namespace {

constexpr const char* kEvalHeader =
    "pipeline,split,n,mse,margin_m,accuracy_mean,accuracy_median,mean_predicted_m2,mean_actual_m2";

std::string display_name(Pipeline p) {
  switch (p) {
    case Pipeline::cnn: return "CNN";
    case Pipeline::threshold: return "Threshold Model";
    case Pipeline::contour: return "Contour Model";
    case Pipeline::edges: return "Edges Model";
  }
  return "?";
}

std::string display_name(Split s) {
  switch (s) {
    case Split::training: return "Training";
    case Split::validation: return "Validation";
    case Split::testing: return "Testing";
  }
  return "?";
}

// Percent rounded half away from zero.
std::string pct(double a) {
  return "~" + std::to_string(static_cast<long long>(std::llround(a * 100.0))) + "%";
}

}  // namespace

std::string eval_results_to_csv(const std::vector<EvalResult>& results) {
  std::string out = std::string(kEvalHeader) + "\n";
  for (const EvalResult& r : results) {
    out += to_string(r.pipeline) + "," + to_string(r.split) + "," + std::to_string(r.n) + "," +
           fmt(r.mse) + "," + fmt(r.margin_m) + "," + fmt(r.accuracy_mean) + "," +
           fmt(r.accuracy_median) + "," + fmt(r.mean_predicted_m2) + "," +
           fmt(r.mean_actual_m2) + "\n";
  }
  return out;
}

std::vector<EvalResult> eval_results_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<EvalResult> out;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kEvalHeader)
        throw std::runtime_error("eval csv: bad header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t pos = 0;
    while (true) {
      size_t c = line.find(',', pos);
      cols.push_back(line.substr(pos, c == std::string::npos ? c : c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (cols.size() != 9)
      throw std::runtime_error("eval csv: line " + std::to_string(lineno) + ": expected 9 columns");
    auto num = [&](const std::string& s) {
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::runtime_error("eval csv: line " + std::to_string(lineno) +
                                 ": bad number '" + s + "'");
      return v;
    };
    EvalResult r;
    r.pipeline = parse_pipeline(cols[0]);
    r.split = parse_split(cols[1]);
    r.n = static_cast<size_t>(num(cols[2]));
    r.mse = num(cols[3]);
    r.margin_m = num(cols[4]);
    r.accuracy_mean = num(cols[5]);
    r.accuracy_median = num(cols[6]);
    r.mean_predicted_m2 = num(cols[7]);
    r.mean_actual_m2 = num(cols[8]);
    out.push_back(r);
  }
  return out;
}

Report build_report(std::vector<EvalResult> results) {
  auto key = [](const EvalResult& r) {
    return static_cast<int>(r.pipeline) * 3 + static_cast<int>(r.split);
  };
  std::stable_sort(results.begin(), results.end(),
                   [&](const EvalResult& a, const EvalResult& b) { return key(a) < key(b); });

  Report rep;
  rep.csv = eval_results_to_csv(results);

  std::string md;
  md += "| Model Used | Highest Accuracy (1 - (error/Average of Original Data)) | "
        "Model Results (Average Predicted Lawn Area) | Average Lawn Area of Used Data |\n";
  md += "| --- | --- | --- | --- |\n";
  for (const EvalResult& r : results) {
    const bool training_row = r.split == Split::training;
    md += "| " + display_name(r.pipeline) + " " + display_name(r.split) + " | " +
          (training_row ? std::string("-") : pct(r.accuracy_mean)) + " | " +
          (training_row ? std::string("-") : fmt_fixed2(r.mean_predicted_m2)) + " | " +
          fmt_fixed2(r.mean_actual_m2) + " |\n";
  }
  md += "\n`-` = not reported for training rows (training-time MSE does not match "
        "post-hoc predictions).\n";
  rep.markdown = md;
  return rep;
}

}  // namespace lawn::metrics
