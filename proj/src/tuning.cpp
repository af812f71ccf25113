#include "lawn/tuning.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "lawn/metrics.hpp"
#include "lawn/rng.hpp"

namespace lawn::tuning {

void ParamGrid::validate() const {
  if (learning_rate.empty() || dropout_rate.empty() || l2_lambda.empty() || base_filters.empty())
    throw std::invalid_argument("grid: every axis needs at least one value");
  for (double lr : learning_rate)
    if (!(lr > 0.0)) throw std::invalid_argument("grid: learning_rate values must be > 0");
  for (double d : dropout_rate)
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("grid: dropout_rate must be in [0,1)");
  for (double l : l2_lambda)
    if (l < 0.0) throw std::invalid_argument("grid: l2_lambda values must be >= 0");
  for (int f : base_filters)
    if (f < 1) throw std::invalid_argument("grid: base_filters values must be >= 1");
}

size_t ParamGrid::size() const {
  return learning_rate.size() * dropout_rate.size() * l2_lambda.size() * base_filters.size();
}

std::vector<std::vector<size_t>> kfold_split(size_t n, size_t k, uint64_t seed) {
  if (k < 2 || k > n)
    throw std::invalid_argument("kfold_split: need 2 <= k <= n");
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<std::vector<size_t>> folds(k);
  size_t base = n / k, extra = n % k, pos = 0;
  for (size_t f = 0; f < k; ++f) {
    size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<long>(pos), idx.begin() + static_cast<long>(pos + len));
    pos += len;
  }
  return folds;
}

namespace {

std::vector<GridPoint> enumerate(const ParamGrid& grid) {
  std::vector<GridPoint> pts;
  size_t index = 0;
  for (double lr : grid.learning_rate)
    for (double dr : grid.dropout_rate)
      for (double l2 : grid.l2_lambda)
        for (int bf : grid.base_filters)
          pts.push_back({index++, lr, dr, l2, bf});
  return pts;
}

}  // namespace

GridSearchResult grid_search(const ParamGrid& grid, const data::Manifest& manifest,
                             const GridSearchOptions& opts) {
  grid.validate();
  if (manifest.empty()) throw std::invalid_argument("grid_search: empty manifest");

  // Fold units: origin ids (leakage-safe) or raw records.
  std::vector<std::vector<size_t>> unit_records;  // records per unit
  if (opts.by_origin) {
    std::vector<std::string> origins;
    std::set<std::string> seen;
    for (const auto& rec : manifest)
      if (seen.insert(rec.origin_id).second) origins.push_back(rec.origin_id);
    unit_records.resize(origins.size());
    for (size_t r = 0; r < manifest.size(); ++r) {
      size_t u = static_cast<size_t>(
          std::find(origins.begin(), origins.end(), manifest[r].origin_id) - origins.begin());
      unit_records[u].push_back(r);
    }
  } else {
    unit_records.resize(manifest.size());
    for (size_t r = 0; r < manifest.size(); ++r) unit_records[r] = {r};
  }
  if (unit_records.size() < opts.k)
    throw std::invalid_argument("grid_search: fewer fold units than k");

  std::vector<std::vector<size_t>> folds =
      kfold_split(unit_records.size(), opts.k, opts.seed);

  GridSearchResult out;
  std::vector<GridPoint> points = enumerate(grid);
  out.results.reserve(points.size());

  for (const GridPoint& pt : points) {
    CvResult cv;
    cv.point = pt;
    for (size_t f = 0; f < folds.size(); ++f) {
      data::Manifest fold_train, fold_val;
      for (size_t g = 0; g < folds.size(); ++g) {
        for (size_t unit : folds[g]) {
          for (size_t r : unit_records[unit]) {
            (g == f ? fold_val : fold_train).push_back(manifest[r]);
          }
        }
      }
      training::TrainConfig cfg = opts.base_config;
      cfg.learning_rate = pt.learning_rate;
      cfg.epochs = opts.budget_epochs;
      cfg.seed = seed_hash(seed_hash(opts.seed, pt.index), static_cast<uint64_t>(f));
      cfg.early_stop_patience.reset();  // fixed budget per fold

      nn::ModelSpec spec = nn::default_model_spec(opts.in_h, opts.in_w, opts.in_c,
                                                  pt.base_filters, pt.dropout_rate,
                                                  pt.l2_lambda);
      training::TrainResult tr;
      try {
        tr = training::train(spec, fold_train, fold_val, cfg, opts.source);
      } catch (const std::exception& e) {
        throw std::runtime_error("grid_search: point " + std::to_string(pt.index) + ", fold " +
                                 std::to_string(f) + ": " + e.what());
      }
      training::LoadedDataset val_data = training::load_dataset(fold_val, opts.source);
      std::vector<double> preds = training::predict(
          spec, tr.params, val_data, cfg.batch_size, tr.target_mean, tr.target_std);
      cv.fold_mses.push_back(metrics::mse_of(preds, val_data.targets));
    }
    double sum = 0.0;
    for (double m : cv.fold_mses) sum += m;
    cv.mean_mse = sum / static_cast<double>(cv.fold_mses.size());
    out.results.push_back(std::move(cv));
  }

  size_t best = 0;
  for (size_t i = 1; i < out.results.size(); ++i)
    if (out.results[i].mean_mse < out.results[best].mean_mse) best = i;
  out.best = out.results[best].point;
  return out;
}

ParamGrid parse_param_grid(const std::string& text) {
  ParamGrid grid;
  bool saw_lr = false, saw_dr = false, saw_l2 = false, saw_bf = false;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("grid config: line " + std::to_string(lineno) +
                                  ": expected key=value list");
    std::string key = line.substr(0, eq);
    std::string rest = line.substr(eq + 1);
    std::vector<std::string> items;
    size_t pos = 0;
    while (true) {
      size_t c = rest.find(',', pos);
      items.push_back(rest.substr(pos, c == std::string::npos ? c : c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    auto to_double = [&](const std::string& s) {
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("grid config: line " + std::to_string(lineno) +
                                    ": bad number '" + s + "'");
      return v;
    };
    if (key == "learning_rate") {
      grid.learning_rate.clear();
      for (const auto& s : items) grid.learning_rate.push_back(to_double(s));
      saw_lr = true;
    } else if (key == "dropout_rate") {
      grid.dropout_rate.clear();
      for (const auto& s : items) grid.dropout_rate.push_back(to_double(s));
      saw_dr = true;
    } else if (key == "l2_lambda") {
      grid.l2_lambda.clear();
      for (const auto& s : items) grid.l2_lambda.push_back(to_double(s));
      saw_l2 = true;
    } else if (key == "base_filters") {
      grid.base_filters.clear();
      for (const auto& s : items)
        grid.base_filters.push_back(static_cast<int>(to_double(s)));
      saw_bf = true;
    } else {
      throw std::invalid_argument("grid config: line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
    }
  }
  (void)saw_lr; (void)saw_dr; (void)saw_l2; (void)saw_bf;  // absent axes keep defaults
  grid.validate();
  return grid;
}

std::string grid_results_to_csv(const std::vector<CvResult>& results) {
  std::string out = "point,learning_rate,dropout_rate,l2_lambda,base_filters,fold,mse\n";
  auto fmt = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  for (const CvResult& cv : results) {
    std::string prefix = std::to_string(cv.point.index) + "," + fmt(cv.point.learning_rate) +
                         "," + fmt(cv.point.dropout_rate) + "," + fmt(cv.point.l2_lambda) + "," +
                         std::to_string(cv.point.base_filters) + ",";
    for (size_t f = 0; f < cv.fold_mses.size(); ++f)
      out += prefix + std::to_string(f) + "," + fmt(cv.fold_mses[f]) + "\n";
    out += prefix + "mean," + fmt(cv.mean_mse) + "\n";
  }
  return out;
}

}  // namespace lawn::tuning
