#pragma once

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "lawn/tensor.hpp"

namespace lawn::nn {

enum class Mode { train, infer };

// ---------------------------------------------------------------------------
// Layer descriptions. Convolutions are same-padding, stride 1; pooling is
// fixed 2x2 stride 2.
// ---------------------------------------------------------------------------

struct ConvSpec {
  int out_channels = 32;
  int kernel = 3;
};

struct SepConvSpec {
  int out_channels = 64;
  int kernel = 3;
};

struct BatchNormSpec {
  double epsilon = 1e-5;
  double momentum = 0.9;
};

struct EluSpec {
  double alpha = 1.0;
};

struct MaxPoolSpec {};

struct DropoutSpec {
  double rate = 0.3;
};

struct FlattenSpec {};

struct DenseSpec {
  int out_features = 1;
};

using LayerSpec = std::variant<ConvSpec, SepConvSpec, BatchNormSpec, EluSpec,
                               MaxPoolSpec, DropoutSpec, FlattenSpec, DenseSpec>;

const char* layer_name(const LayerSpec& spec);
bool is_conv_like(const LayerSpec& spec);
void validate_layer(const LayerSpec& spec);

// ---------------------------------------------------------------------------
// Forward / backward primitives. All reductions accumulate in a fixed order,
// so outputs are bit-identical for any thread count.
// ---------------------------------------------------------------------------

/// Cross-correlation with zero same-padding, stride 1.
/// x [N,H,W,Cin], kernel [k,k,Cin,Cout], bias [Cout] -> [N,H,W,Cout].
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias);

struct Conv2dGrads {
  Tensor dx, dkernel, dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy);

/// Depthwise spatial cross-correlation followed by 1x1 pointwise mixing.
/// depthwise [k,k,Cin], pointwise [1,1,Cin,Cout], bias [Cout]. When mid_out
/// is given it receives the depthwise intermediate (needed by backward).
Tensor separable_conv2d_forward(const Tensor& x, const Tensor& depthwise,
                                const Tensor& pointwise, const Tensor& bias,
                                Tensor* mid_out = nullptr);

struct SepConv2dGrads {
  Tensor dx, ddepthwise, dpointwise, dbias;
};
SepConv2dGrads separable_conv2d_backward(const Tensor& x, const Tensor& mid,
                                         const Tensor& depthwise, const Tensor& pointwise,
                                         const Tensor& dy);

/// Elementwise x if x > 0 else alpha * (exp(x) - 1).
Tensor elu(const Tensor& x, double alpha);
/// Backward from the stored forward output y: dx = dy * (x>0 ? 1 : y+alpha).
Tensor elu_backward(const Tensor& y, double alpha, const Tensor& dy);

struct BatchNormCache {
  std::shared_ptr<const Tensor> x;  // layer input, shared with the cache chain
  std::vector<double> mean, inv_std;
};

/// Train mode normalizes with batch statistics over (batch, spatial) per
/// channel and folds them into the running stats with
/// running = momentum * running + (1 - momentum) * batch. Infer mode uses the
/// running stats only. Rank-4 tensors normalize per channel, rank-2 per
/// feature. Train mode requires batch size >= 2.
Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          Mode mode, Tensor& running_mean, Tensor& running_var,
                          double epsilon, double momentum, BatchNormCache* cache);

struct BatchNormGrads {
  Tensor dx, dgamma, dbeta;
};
BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& dy);

/// 2x2 max pooling, stride 2; requires even spatial dims. argmax stores the
/// in-window winner index (scan order, first max wins) for backward.
Tensor max_pool_forward(const Tensor& x, std::vector<uint8_t>* argmax);
Tensor max_pool_backward(const Tensor& dy, const std::vector<uint8_t>& argmax,
                         const std::vector<int64_t>& in_shape);

/// Inverted dropout. Train mode zeroes each element with probability rate and
/// scales survivors by 1/(1-rate); infer mode is the identity. The mask comes
/// from a generator seeded with the caller-derived seed.
Tensor dropout_forward(const Tensor& x, double rate, uint64_t seed, Mode mode,
                       std::vector<uint8_t>* mask);
Tensor dropout_backward(const Tensor& dy, double rate, const std::vector<uint8_t>& mask);

/// x [N,D] * w [D,M] + b [M].
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);

struct DenseGrads {
  Tensor dx, dw, db;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

/// Mean squared error over the batch; grad is d(loss)/d(pred) = 2(pred-t)/N.
struct MseResult {
  double loss = 0.0;
  Tensor grad;
};
MseResult mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace lawn::nn
