#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "lawn/layers.hpp"
#include "lawn/tensor.hpp"

namespace lawn::nn {

/// Ordered layer stack plus the input geometry it expects.
struct ModelSpec {
  int in_h = 128;
  int in_w = 128;
  int in_c = 3;
  std::vector<LayerSpec> layers;
  double l2_lambda = 1e-4;
};

/// The reference architecture: two full convolutions, then four separable
/// ones (pooling after every conv pair), flatten, and a three-dense head with
/// a linear scalar output.
ModelSpec default_model_spec(int h, int w, int c, int base_filters = 32,
                             double dropout_rate = 0.3, double l2_lambda = 1e-4);

/// Throws invalid_argument unless every layer is well-formed and the stack
/// maps the input to a single scalar per sample.
void validate_model_spec(const ModelSpec& spec);

/// Shape after each layer, computed without touching tensor data.
std::vector<std::vector<int64_t>> propagate_shapes(const ModelSpec& spec);

/// Named tensor map. Keys are "L<index>.<role>" with roles kernel, bias,
/// gamma, beta, depthwise, pointwise, running_mean, running_var.
using Parameters = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

std::string param_key(int layer_index, const char* role);
/// Running statistics are parameters but not trained.
bool is_trainable_key(const std::string& key);
/// Kernel-like keys (kernel, depthwise, pointwise) carry the L2 penalty;
/// biases and batch-norm gamma/beta do not.
bool is_weight_key(const std::string& key);

/// He-uniform kernels (bound sqrt(6/fan_in)), zero biases and beta, ones for
/// gamma and running_var. Deterministic in seed.
Parameters init_parameters(const ModelSpec& spec, uint64_t seed);

struct ForwardOptions {
  Mode mode = Mode::infer;
  uint64_t dropout_seed = 0;  // dropout masks derive from (seed, layer, step)
  uint64_t step = 0;
  bool keep_activations = false;
};

// Layer inputs are shared with the forward activation chain rather than
// copied; a cache never outlives data it points into.
struct ConvCache { std::shared_ptr<const Tensor> x; };
struct SepConvCache { std::shared_ptr<const Tensor> x; Tensor mid; };
struct EluCache { std::shared_ptr<const Tensor> y; };
struct PoolCache { std::vector<uint8_t> argmax; std::vector<int64_t> in_shape; };
struct DropoutCache { std::vector<uint8_t> mask; };
struct FlattenCache { std::vector<int64_t> in_shape; };
struct DenseCache { std::shared_ptr<const Tensor> x; };
struct EmptyCache {};

using LayerCache = std::variant<EmptyCache, ConvCache, SepConvCache, BatchNormCache,
                                EluCache, PoolCache, DropoutCache, FlattenCache, DenseCache>;

struct ForwardCache {
  Mode mode = Mode::infer;
  std::vector<LayerCache> layers;
  std::vector<Tensor> activations;  // per-layer outputs when requested
};

/// Applies the layers in order; pred has shape [N, 1]. Train mode records
/// everything backward needs (and updates batch-norm running stats in
/// params). Layer shape errors are rethrown tagged with the layer index.
Tensor model_forward(const ModelSpec& spec, Parameters& params, const Tensor& x,
                     const ForwardOptions& opts, ForwardCache* cache = nullptr);

/// Gradients for every trainable parameter, including the L2 terms
/// 2*lambda*w on kernel-like keys. Requires a train-mode cache.
Gradients model_backward(const ModelSpec& spec, const Parameters& params,
                         const ForwardCache& cache, const Tensor& dpred);

/// L2 penalty lambda * sum w^2 over kernel-like parameters.
double l2_penalty(const Parameters& params, double lambda);

/// Per-convolutional-layer activation grids for one input image [1,H,W,C]:
/// channel maps min-max normalized to 8 bits and tiled into one P5 file per
/// layer, named act_L<index>_<layername>.pgm.
std::vector<std::filesystem::path> dump_conv_activations(
    const ModelSpec& spec, Parameters& params, const Tensor& x,
    const std::filesystem::path& out_dir);

}  // namespace lawn::nn
