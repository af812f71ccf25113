#include "lawn/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>

#include "lawn/parallel.hpp"
#include "lawn/rng.hpp"

namespace lawn::training {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer: " + name);
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (early_stop_patience && *early_stop_patience < 1)
    throw std::invalid_argument("train: patience must be >= 1 when set");
}

OptimizerState init_optimizer_state(OptimizerKind kind, const nn::Parameters& params) {
  OptimizerState st;
  st.kind = kind;
  for (const auto& [key, p] : params) {
    if (!nn::is_trainable_key(key)) continue;
    if (kind == OptimizerKind::adam) {
      st.m[key] = nn::Tensor(p.shape());
      st.v[key] = nn::Tensor(p.shape());
    } else {
      st.velocity[key] = nn::Tensor(p.shape());
    }
  }
  return st;
}

namespace {

const nn::Tensor& grad_for(const nn::Gradients& grads, const std::string& key) {
  auto it = grads.find(key);
  if (it == grads.end())
    throw std::logic_error("optimizer: missing gradient for parameter " + key);
  return it->second;
}

}  // namespace

void adam_step(nn::Parameters& params, const nn::Gradients& grads, OptimizerState& state,
               double lr, double beta1, double beta2, double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (auto& [key, m] : state.m) {
    const nn::Tensor& g = grad_for(grads, key);
    nn::Tensor& v = state.v.at(key);
    nn::Tensor& p = params.at(key);
    if (!g.same_shape(p))
      throw std::logic_error("optimizer: gradient shape mismatch for " + key);
    float* mp = m.data();
    float* vp = v.data();
    float* pp = p.data();
    const float* gp = g.data();
    parallel_for(p.numel(), [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) {
        double gi = gp[i];
        double mi = beta1 * mp[i] + (1.0 - beta1) * gi;
        double vi = beta2 * vp[i] + (1.0 - beta2) * gi * gi;
        mp[i] = static_cast<float>(mi);
        vp[i] = static_cast<float>(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        pp[i] = static_cast<float>(pp[i] - lr * mhat / (std::sqrt(vhat) + eps));
      }
    });
  }
}

void sgd_step(nn::Parameters& params, const nn::Gradients& grads, OptimizerState& state,
              double lr, double momentum) {
  state.step += 1;
  for (auto& [key, vel] : state.velocity) {
    const nn::Tensor& g = grad_for(grads, key);
    nn::Tensor& p = params.at(key);
    if (!g.same_shape(p))
      throw std::logic_error("optimizer: gradient shape mismatch for " + key);
    float* vp = vel.data();
    float* pp = p.data();
    const float* gp = g.data();
    parallel_for(p.numel(), [&](int64_t b, int64_t e) {
      for (int64_t i = b; i < e; ++i) {
        double vi = momentum * vp[i] + gp[i];
        vp[i] = static_cast<float>(vi);
        pp[i] = static_cast<float>(pp[i] - lr * vi);
      }
    });
  }
}

LoadedDataset load_dataset(const data::Manifest& manifest, const DataSource& source) {
  LoadedDataset out;
  out.images.resize(manifest.size());
  out.targets.resize(manifest.size());
  std::exception_ptr err;
  std::mutex err_mutex;
  parallel_for_each(static_cast<int64_t>(manifest.size()), [&](int64_t i) {
    try {
      out.images[static_cast<size_t>(i)] = data::load_input_image(
          source.root, manifest[static_cast<size_t>(i)], source.method, source.preprocess);
      out.targets[static_cast<size_t>(i)] = manifest[static_cast<size_t>(i)].area_sq_m;
    } catch (...) {
      std::lock_guard<std::mutex> lk(err_mutex);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  return out;
}

namespace {

// Packs selected images into an NHWC float batch scaled to [0, 1].
nn::Tensor make_batch(const LoadedDataset& data, const std::vector<size_t>& order,
                      size_t begin, size_t count, const nn::ModelSpec& spec) {
  nn::Tensor x({static_cast<int64_t>(count), spec.in_h, spec.in_w, spec.in_c});
  const size_t stride = static_cast<size_t>(spec.in_h) * spec.in_w * spec.in_c;
  for (size_t b = 0; b < count; ++b) {
    const imaging::Image& img = data.images[order[begin + b]];
    if (img.height != spec.in_h || img.width != spec.in_w || img.channels != spec.in_c)
      throw std::invalid_argument("train: image geometry " + std::to_string(img.width) + "x" +
                                  std::to_string(img.height) + "x" +
                                  std::to_string(img.channels) + " does not match model input");
    float* dst = x.data() + b * stride;
    for (size_t i = 0; i < stride; ++i) dst[i] = img.data[i] * (1.0f / 255.0f);
  }
  return x;
}

}  // namespace

std::vector<double> predict(const nn::ModelSpec& spec, nn::Parameters& params,
                            const LoadedDataset& data, int batch_size,
                            double target_mean, double target_std) {
  std::vector<size_t> order(data.images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> preds(order.size());
  nn::ForwardOptions opts;
  opts.mode = nn::Mode::infer;
  for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
    size_t count = std::min(static_cast<size_t>(batch_size), order.size() - begin);
    nn::Tensor x = make_batch(data, order, begin, count, spec);
    nn::Tensor pred = model_forward(spec, params, x, opts);
    for (size_t b = 0; b < count; ++b)
      preds[begin + b] = static_cast<double>(pred.data()[b]) * target_std + target_mean;
  }
  return preds;
}

namespace {

double val_mse(const nn::ModelSpec& spec, nn::Parameters& params, const LoadedDataset& val,
               int batch_size, double target_mean, double target_std) {
  std::vector<double> preds = predict(spec, params, val, batch_size, target_mean, target_std);
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - val.targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

}  // namespace

TrainResult train(const nn::ModelSpec& spec, const data::Manifest& train_manifest,
                  const data::Manifest& val_manifest, const TrainConfig& cfg,
                  const DataSource& source) {
  cfg.validate();
  nn::validate_model_spec(spec);
  if (train_manifest.empty() || val_manifest.empty())
    throw std::invalid_argument("train: manifests must be nonempty");

  LoadedDataset train_data = load_dataset(train_manifest, source);
  LoadedDataset val_data = load_dataset(val_manifest, source);

  TrainResult result;
  result.standardized = cfg.target_standardize;
  if (cfg.target_standardize) {
    double mean = 0.0;
    for (double t : train_data.targets) mean += t;
    mean /= static_cast<double>(train_data.targets.size());
    double var = 0.0;
    for (double t : train_data.targets) var += (t - mean) * (t - mean);
    var /= static_cast<double>(train_data.targets.size());
    result.target_mean = mean;
    result.target_std = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  const double tmean = result.target_mean, tstd = result.target_std;

  result.params = nn::init_parameters(spec, cfg.seed);
  result.opt = init_optimizer_state(cfg.optimizer, result.params);

  nn::Parameters best_params;
  OptimizerState best_opt;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  const size_t n = train_data.images.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) {
      for (size_t i = 0; i < n; ++i) order[i] = i;
      Rng rng(seed_hash(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
      rng.shuffle(order);
    }

    double sse = 0.0;  // standardized units when standardizing
    size_t seen = 0;
    int batch_index = 0;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(cfg.batch_size)) {
      size_t count = std::min(static_cast<size_t>(cfg.batch_size), n - begin);
      if (count < 2) break;  // batch-norm constraint: drop trailing singleton
      nn::Tensor x = make_batch(train_data, order, begin, count, spec);
      nn::Tensor y({static_cast<int64_t>(count), 1});
      for (size_t b = 0; b < count; ++b)
        y.data()[b] = static_cast<float>((train_data.targets[order[begin + b]] - tmean) / tstd);

      nn::ForwardOptions opts;
      opts.mode = nn::Mode::train;
      opts.dropout_seed = cfg.seed;
      opts.step = static_cast<uint64_t>(result.opt.step);
      nn::ForwardCache cache;
      nn::Tensor pred = model_forward(spec, result.params, x, opts, &cache);
      nn::MseResult mse = nn::mse_loss(pred, y);
      double loss = mse.loss + nn::l2_penalty(result.params, spec.l2_lambda);
      if (!std::isfinite(loss)) throw DivergedError(epoch, batch_index);

      nn::Gradients grads = nn::model_backward(spec, result.params, cache, mse.grad);
      if (cfg.optimizer == OptimizerKind::adam)
        adam_step(result.params, grads, result.opt, cfg.learning_rate, cfg.beta1, cfg.beta2,
                  cfg.adam_epsilon);
      else
        sgd_step(result.params, grads, result.opt, cfg.learning_rate, cfg.momentum);

      sse += mse.loss * static_cast<double>(count);
      seen += count;
      ++batch_index;
    }

    double train_mse = seen > 0 ? sse / static_cast<double>(seen) : 0.0;
    train_mse *= tstd * tstd;  // report raw m^2 regardless of standardization
    double vmse = val_mse(spec, result.params, val_data, cfg.batch_size, tmean, tstd);
    if (!std::isfinite(vmse)) throw DivergedError(epoch, -1);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({epoch, train_mse, vmse, wall});

    if (cfg.early_stop_patience) {
      if (vmse < best_val) {
        best_val = vmse;
        best_epoch = epoch;
        best_params = result.params;
        best_opt = result.opt;
      } else if (epoch - best_epoch >= *cfg.early_stop_patience) {
        break;
      }
    }
  }

  if (cfg.early_stop_patience && best_epoch >= 0) {
    result.params = std::move(best_params);
    result.opt = std::move(best_opt);
  }
  return result;
}

}  // namespace lawn::training
