#include "lawn/model.hpp"

#include <cmath>
#include <cstdio>

#include "lawn/image.hpp"
#include "lawn/rng.hpp"

namespace lawn::nn {

ModelSpec default_model_spec(int h, int w, int c, int base_filters,
                             double dropout_rate, double l2_lambda) {
  ModelSpec spec;
  spec.in_h = h;
  spec.in_w = w;
  spec.in_c = c;
  spec.l2_lambda = l2_lambda;
  const int f1 = base_filters, f2 = 2 * base_filters, f3 = 4 * base_filters;
  auto conv_block = [&](int filters, bool separable) {
    if (separable) spec.layers.push_back(SepConvSpec{filters, 3});
    else spec.layers.push_back(ConvSpec{filters, 3});
    spec.layers.push_back(BatchNormSpec{});
    spec.layers.push_back(EluSpec{});
  };
  conv_block(f1, false);
  conv_block(f1, false);
  spec.layers.push_back(MaxPoolSpec{});
  conv_block(f2, true);
  conv_block(f2, true);
  spec.layers.push_back(MaxPoolSpec{});
  conv_block(f3, true);
  conv_block(f3, true);
  spec.layers.push_back(MaxPoolSpec{});
  spec.layers.push_back(FlattenSpec{});
  spec.layers.push_back(DenseSpec{256});
  spec.layers.push_back(EluSpec{});
  spec.layers.push_back(DropoutSpec{dropout_rate});
  spec.layers.push_back(DenseSpec{64});
  spec.layers.push_back(EluSpec{});
  spec.layers.push_back(DenseSpec{1});  // linear output
  return spec;
}

std::vector<std::vector<int64_t>> propagate_shapes(const ModelSpec& spec) {
  std::vector<std::vector<int64_t>> shapes;
  std::vector<int64_t> cur = {1, spec.in_h, spec.in_w, spec.in_c};
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
      if (cur.size() != 4) throw std::invalid_argument("conv after flatten");
      cur = {cur[0], cur[1], cur[2], conv->out_channels};
    } else if (const auto* sep = std::get_if<SepConvSpec>(&layer)) {
      if (cur.size() != 4) throw std::invalid_argument("sepconv after flatten");
      cur = {cur[0], cur[1], cur[2], sep->out_channels};
    } else if (std::holds_alternative<MaxPoolSpec>(layer)) {
      if (cur.size() != 4) throw std::invalid_argument("maxpool after flatten");
      if (cur[1] % 2 != 0 || cur[2] % 2 != 0)
        throw std::invalid_argument("maxpool needs even spatial dims at layer " +
                                    std::to_string(i));
      cur = {cur[0], cur[1] / 2, cur[2] / 2, cur[3]};
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      if (cur.size() != 4) throw std::invalid_argument("flatten expects rank-4 input");
      cur = {cur[0], cur[1] * cur[2] * cur[3]};
    } else if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
      if (cur.size() != 2) throw std::invalid_argument("dense expects flattened input");
      cur = {cur[0], dense->out_features};
    }
    // batchnorm, elu, dropout preserve shape
    shapes.push_back(cur);
  }
  return shapes;
}

void validate_model_spec(const ModelSpec& spec) {
  if (spec.in_h < 1 || spec.in_w < 1 || (spec.in_c != 1 && spec.in_c != 3))
    throw std::invalid_argument("model: bad input geometry");
  if (spec.l2_lambda < 0.0) throw std::invalid_argument("model: l2_lambda must be >= 0");
  if (spec.layers.empty()) throw std::invalid_argument("model: no layers");
  for (const LayerSpec& l : spec.layers) validate_layer(l);
  auto shapes = propagate_shapes(spec);
  const auto& last = shapes.back();
  if (last.size() != 2 || last[1] != 1)
    throw std::invalid_argument("model: final layer must produce one scalar per sample");
}

std::string param_key(int layer_index, const char* role) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "L%02d.%s", layer_index, role);
  return buf;
}

bool is_trainable_key(const std::string& key) {
  return key.find("running_") == std::string::npos;
}

bool is_weight_key(const std::string& key) {
  size_t dot = key.rfind('.');
  std::string role = key.substr(dot + 1);
  return role == "kernel" || role == "depthwise" || role == "pointwise";
}

Parameters init_parameters(const ModelSpec& spec, uint64_t seed) {
  validate_model_spec(spec);
  Rng rng(seed);
  auto he_uniform = [&](Tensor& t, int64_t fan_in) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  };

  Parameters params;
  int64_t channels = spec.in_c;
  auto shapes = propagate_shapes(spec);
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const int li = static_cast<int>(i);
    const LayerSpec& layer = spec.layers[i];
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
      Tensor kernel({conv->kernel, conv->kernel, channels, conv->out_channels});
      he_uniform(kernel, static_cast<int64_t>(conv->kernel) * conv->kernel * channels);
      params[param_key(li, "kernel")] = std::move(kernel);
      params[param_key(li, "bias")] = Tensor({conv->out_channels});
    } else if (const auto* sep = std::get_if<SepConvSpec>(&layer)) {
      Tensor dw({sep->kernel, sep->kernel, channels});
      he_uniform(dw, static_cast<int64_t>(sep->kernel) * sep->kernel);
      params[param_key(li, "depthwise")] = std::move(dw);
      Tensor pw({1, 1, channels, sep->out_channels});
      he_uniform(pw, channels);
      params[param_key(li, "pointwise")] = std::move(pw);
      params[param_key(li, "bias")] = Tensor({sep->out_channels});
    } else if (std::holds_alternative<BatchNormSpec>(layer)) {
      params[param_key(li, "gamma")] = Tensor::full({channels}, 1.0f);
      params[param_key(li, "beta")] = Tensor({channels});
      params[param_key(li, "running_mean")] = Tensor({channels});
      params[param_key(li, "running_var")] = Tensor::full({channels}, 1.0f);
    } else if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
      int64_t in_features = i == 0 ? spec.in_c : shapes[i - 1].back();
      Tensor w({in_features, dense->out_features});
      he_uniform(w, in_features);
      params[param_key(li, "kernel")] = std::move(w);
      params[param_key(li, "bias")] = Tensor({dense->out_features});
    }
    channels = shapes[i].back();
  }
  return params;
}

namespace {

[[noreturn]] void layer_fail(size_t i, const LayerSpec& layer, const std::exception& e) {
  throw std::invalid_argument("layer " + std::to_string(i) + " (" + layer_name(layer) +
                              "): " + e.what());
}

}  // namespace

Tensor model_forward(const ModelSpec& spec, Parameters& params, const Tensor& x,
                     const ForwardOptions& opts, ForwardCache* cache) {
  if (x.rank() != 4 || x.dim(1) != spec.in_h || x.dim(2) != spec.in_w ||
      x.dim(3) != spec.in_c)
    throw std::invalid_argument("model_forward: input " + x.shape_string() +
                                " does not match spec input " +
                                Tensor({1, spec.in_h, spec.in_w, spec.in_c}).shape_string());
  const bool training = opts.mode == Mode::train;
  if (cache) {
    cache->mode = opts.mode;
    cache->layers.clear();
    cache->activations.clear();
  }

  auto cur = std::make_shared<Tensor>(x);
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const int li = static_cast<int>(i);
    const LayerSpec& layer = spec.layers[i];
    LayerCache lc = EmptyCache{};
    try {
      if (std::holds_alternative<ConvSpec>(layer)) {
        auto out = std::make_shared<Tensor>(conv2d_forward(
            *cur, params.at(param_key(li, "kernel")), params.at(param_key(li, "bias"))));
        if (training) lc = ConvCache{cur};
        cur = std::move(out);
      } else if (std::holds_alternative<SepConvSpec>(layer)) {
        Tensor mid;
        auto out = std::make_shared<Tensor>(separable_conv2d_forward(
            *cur, params.at(param_key(li, "depthwise")), params.at(param_key(li, "pointwise")),
            params.at(param_key(li, "bias")), training ? &mid : nullptr));
        if (training) lc = SepConvCache{cur, std::move(mid)};
        cur = std::move(out);
      } else if (const auto* bn = std::get_if<BatchNormSpec>(&layer)) {
        BatchNormCache bc;
        auto out = std::make_shared<Tensor>(batch_norm_forward(
            *cur, params.at(param_key(li, "gamma")), params.at(param_key(li, "beta")), opts.mode,
            params.at(param_key(li, "running_mean")), params.at(param_key(li, "running_var")),
            bn->epsilon, bn->momentum, training ? &bc : nullptr));
        if (training) {
          bc.x = cur;
          lc = std::move(bc);
        }
        cur = std::move(out);
      } else if (const auto* e = std::get_if<EluSpec>(&layer)) {
        auto out = std::make_shared<Tensor>(elu(*cur, e->alpha));
        if (training) lc = EluCache{out};
        cur = std::move(out);
      } else if (std::holds_alternative<MaxPoolSpec>(layer)) {
        PoolCache pc;
        pc.in_shape = cur->shape();
        auto out = std::make_shared<Tensor>(max_pool_forward(*cur, training ? &pc.argmax : nullptr));
        if (training) lc = std::move(pc);
        cur = std::move(out);
      } else if (const auto* d = std::get_if<DropoutSpec>(&layer)) {
        DropoutCache dc;
        uint64_t seed = seed_hash(seed_hash(opts.dropout_seed, static_cast<uint64_t>(i)), opts.step);
        auto out = std::make_shared<Tensor>(
            dropout_forward(*cur, d->rate, seed, opts.mode, training ? &dc.mask : nullptr));
        if (training) lc = std::move(dc);
        cur = std::move(out);
      } else if (std::holds_alternative<FlattenSpec>(layer)) {
        FlattenCache fc{cur->shape()};
        cur = std::make_shared<Tensor>(cur->reshaped({cur->dim(0), cur->numel() / cur->dim(0)}));
        if (training) lc = std::move(fc);
      } else if (std::holds_alternative<DenseSpec>(layer)) {
        auto out = std::make_shared<Tensor>(dense_forward(
            *cur, params.at(param_key(li, "kernel")), params.at(param_key(li, "bias"))));
        if (training) lc = DenseCache{cur};
        cur = std::move(out);
      }
    } catch (const std::invalid_argument& e) {
      layer_fail(i, layer, e);
    }
    if (cache) {
      cache->layers.push_back(std::move(lc));
      if (opts.keep_activations) cache->activations.push_back(*cur);
    }
  }
  return *cur;
}

Gradients model_backward(const ModelSpec& spec, const Parameters& params,
                         const ForwardCache& cache, const Tensor& dpred) {
  if (cache.mode != Mode::train)
    throw std::logic_error("model_backward: cache was not produced by a train-mode forward");
  if (cache.layers.size() != spec.layers.size())
    throw std::logic_error("model_backward: cache does not match spec");

  Gradients grads;
  Tensor dcur = dpred;
  for (size_t ri = spec.layers.size(); ri-- > 0;) {
    const int li = static_cast<int>(ri);
    const LayerSpec& layer = spec.layers[ri];
    const LayerCache& lc = cache.layers[ri];
    if (std::holds_alternative<ConvSpec>(layer)) {
      const auto& c = std::get<ConvCache>(lc);
      Conv2dGrads g = conv2d_backward(*c.x, params.at(param_key(li, "kernel")), dcur);
      grads[param_key(li, "kernel")] = std::move(g.dkernel);
      grads[param_key(li, "bias")] = std::move(g.dbias);
      dcur = std::move(g.dx);
    } else if (std::holds_alternative<SepConvSpec>(layer)) {
      const auto& c = std::get<SepConvCache>(lc);
      SepConv2dGrads g = separable_conv2d_backward(*c.x, c.mid,
                                                   params.at(param_key(li, "depthwise")),
                                                   params.at(param_key(li, "pointwise")), dcur);
      grads[param_key(li, "depthwise")] = std::move(g.ddepthwise);
      grads[param_key(li, "pointwise")] = std::move(g.dpointwise);
      grads[param_key(li, "bias")] = std::move(g.dbias);
      dcur = std::move(g.dx);
    } else if (std::holds_alternative<BatchNormSpec>(layer)) {
      const auto& c = std::get<BatchNormCache>(lc);
      BatchNormGrads g = batch_norm_backward(c, params.at(param_key(li, "gamma")), dcur);
      grads[param_key(li, "gamma")] = std::move(g.dgamma);
      grads[param_key(li, "beta")] = std::move(g.dbeta);
      dcur = std::move(g.dx);
    } else if (const auto* e = std::get_if<EluSpec>(&layer)) {
      dcur = elu_backward(*std::get<EluCache>(lc).y, e->alpha, dcur);
    } else if (std::holds_alternative<MaxPoolSpec>(layer)) {
      const auto& c = std::get<PoolCache>(lc);
      dcur = max_pool_backward(dcur, c.argmax, c.in_shape);
    } else if (const auto* d = std::get_if<DropoutSpec>(&layer)) {
      dcur = dropout_backward(dcur, d->rate, std::get<DropoutCache>(lc).mask);
    } else if (std::holds_alternative<FlattenSpec>(layer)) {
      dcur = dcur.reshaped(std::get<FlattenCache>(lc).in_shape);
    } else if (std::holds_alternative<DenseSpec>(layer)) {
      const auto& c = std::get<DenseCache>(lc);
      DenseGrads g = dense_backward(*c.x, params.at(param_key(li, "kernel")), dcur);
      grads[param_key(li, "kernel")] = std::move(g.dw);
      grads[param_key(li, "bias")] = std::move(g.db);
      dcur = std::move(g.dx);
    }
  }

  if (spec.l2_lambda > 0.0) {
    const float two_lambda = static_cast<float>(2.0 * spec.l2_lambda);
    for (auto& [key, grad] : grads) {
      if (!is_weight_key(key)) continue;
      const Tensor& w = params.at(key);
      for (int64_t i = 0; i < grad.numel(); ++i)
        grad.data()[i] += two_lambda * w.data()[i];
    }
  }
  return grads;
}

double l2_penalty(const Parameters& params, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("l2_penalty: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& [key, w] : params) {
    if (!is_weight_key(key)) continue;
    for (int64_t i = 0; i < w.numel(); ++i)
      acc += static_cast<double>(w.data()[i]) * static_cast<double>(w.data()[i]);
  }
  return lambda * acc;
}

std::vector<std::filesystem::path> dump_conv_activations(
    const ModelSpec& spec, Parameters& params, const Tensor& x,
    const std::filesystem::path& out_dir) {
  ForwardCache cache;
  ForwardOptions opts;
  opts.mode = Mode::infer;
  opts.keep_activations = true;
  model_forward(spec, params, x, opts, &cache);

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    if (!is_conv_like(spec.layers[i])) continue;
    const Tensor& act = cache.activations[i];
    const int h = static_cast<int>(act.dim(1)), w = static_cast<int>(act.dim(2));
    const int c = static_cast<int>(act.dim(3));
    int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(c))));
    int rows = (c + cols - 1) / cols;
    imaging::Image grid(cols * w, rows * h, 1);
    for (int ch = 0; ch < c; ++ch) {
      float lo = act.data()[ch], hi = act.data()[ch];
      for (int p = 0; p < h * w; ++p) {
        float v = act.data()[static_cast<long>(p) * c + ch];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const float span = hi - lo;
      const int gx = (ch % cols) * w, gy = (ch / cols) * h;
      for (int y = 0; y < h; ++y) {
        for (int xo = 0; xo < w; ++xo) {
          float v = act.data()[(static_cast<long>(y) * w + xo) * c + ch];
          long byte = span > 0.0f ? std::lround((v - lo) / span * 255.0f) : 0;
          grid.at(gx + xo, gy + y) = static_cast<uint8_t>(std::clamp(byte, 0l, 255l));
        }
      }
    }
    char name[64];
    std::snprintf(name, sizeof(name), "act_L%02zu_%s.pgm", i, layer_name(spec.layers[i]));
    std::filesystem::path file = out_dir / name;
    imaging::write_pnm(grid, file);
    files.push_back(file);
  }
  return files;
}

}  // namespace lawn::nn
