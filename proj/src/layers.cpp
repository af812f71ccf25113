#include "lawn/layers.hpp"

#include <cmath>
#include <cstring>

#include "lawn/gemm.hpp"
#include "lawn/parallel.hpp"
#include "lawn/rng.hpp"

namespace lawn::nn {

const char* layer_name(const LayerSpec& spec) {
  struct Visitor {
    const char* operator()(const ConvSpec&) const { return "conv"; }
    const char* operator()(const SepConvSpec&) const { return "sepconv"; }
    const char* operator()(const BatchNormSpec&) const { return "batchnorm"; }
    const char* operator()(const EluSpec&) const { return "elu"; }
    const char* operator()(const MaxPoolSpec&) const { return "maxpool"; }
    const char* operator()(const DropoutSpec&) const { return "dropout"; }
    const char* operator()(const FlattenSpec&) const { return "flatten"; }
    const char* operator()(const DenseSpec&) const { return "dense"; }
  };
  return std::visit(Visitor{}, spec);
}

bool is_conv_like(const LayerSpec& spec) {
  return std::holds_alternative<ConvSpec>(spec) || std::holds_alternative<SepConvSpec>(spec);
}

void validate_layer(const LayerSpec& spec) {
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    if (c->out_channels < 1) throw std::invalid_argument("conv: out_channels must be >= 1");
    if (c->kernel < 1 || c->kernel % 2 == 0)
      throw std::invalid_argument("conv: kernel must be odd");
  } else if (const auto* s = std::get_if<SepConvSpec>(&spec)) {
    if (s->out_channels < 1) throw std::invalid_argument("sepconv: out_channels must be >= 1");
    if (s->kernel < 1 || s->kernel % 2 == 0)
      throw std::invalid_argument("sepconv: kernel must be odd");
  } else if (const auto* b = std::get_if<BatchNormSpec>(&spec)) {
    if (!(b->epsilon > 0.0)) throw std::invalid_argument("batchnorm: epsilon must be > 0");
    if (!(b->momentum >= 0.0 && b->momentum < 1.0))
      throw std::invalid_argument("batchnorm: momentum must be in [0, 1)");
  } else if (const auto* e = std::get_if<EluSpec>(&spec)) {
    if (!(e->alpha > 0.0)) throw std::invalid_argument("elu: alpha must be > 0");
  } else if (const auto* d = std::get_if<DropoutSpec>(&spec)) {
    if (!(d->rate >= 0.0 && d->rate < 1.0))
      throw std::invalid_argument("dropout: rate must be in [0, 1)");
  } else if (const auto* f = std::get_if<DenseSpec>(&spec)) {
    if (f->out_features < 1) throw std::invalid_argument("dense: out_features must be >= 1");
  }
}

namespace {

void require_rank4(const Tensor& x, const char* who) {
  if (x.rank() != 4)
    throw std::invalid_argument(std::string(who) + ": expected rank-4 input, got " +
                                x.shape_string());
}

// Branch-free polynomial expf (Cephes-style range reduction). Vectorizes
// cleanly and is identical on every libm, which keeps activations bit-stable.
inline float fast_expf(float x) {
  x = std::min(88.0f, std::max(-87.0f, x));
  float z = x * 1.44269504088896341f;  // log2(e)
  float n = std::floor(z + 0.5f);
  float r = x - n * 0.693359375f;      // ln2 high
  r -= n * -2.12194440e-4f;            // ln2 low
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  int32_t bits;
  float scale;
  bits = (static_cast<int32_t>(n) + 127) << 23;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

// Channel sums of a rank-4 tensor, streamed row-major with per-image
// partials combined in image order (thread-count independent).
Tensor bias_grad(const Tensor& dy) {
  const int64_t n = dy.dim(0), c = dy.dim(3);
  const int64_t rows = dy.numel() / (n * c);
  std::vector<std::vector<double>> partial(static_cast<size_t>(n));
  parallel_for_each(n, [&](int64_t img) {
    auto& p = partial[static_cast<size_t>(img)];
    p.assign(static_cast<size_t>(c), 0.0);
    const float* base = dy.data() + img * rows * c;
    for (int64_t r = 0; r < rows; ++r) {
      const float* row = base + r * c;
      for (int64_t ch = 0; ch < c; ++ch) p[static_cast<size_t>(ch)] += row[ch];
    }
  });
  Tensor out = Tensor::uninitialized({c});
  for (int64_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (int64_t img = 0; img < n; ++img) acc += partial[static_cast<size_t>(img)][static_cast<size_t>(ch)];
    out.data()[ch] = static_cast<float>(acc);
  }
  return out;
}

// Valid output range of a shifted kernel tap: out pixel (y, x) reads input
// (y + off_y, x + off_x); both must stay inside [0, h) x [0, w).
struct TapRange {
  int y0, y1, x0, x1, off_y, off_x;
  bool empty() const { return y0 >= y1 || x0 >= x1; }
};

TapRange tap_range(int h, int w, int kdy, int kdx, int pad) {
  TapRange t;
  t.off_y = kdy - pad;
  t.off_x = kdx - pad;
  t.y0 = std::max(0, -t.off_y);
  t.y1 = std::min(h, h - t.off_y);
  t.x0 = std::max(0, -t.off_x);
  t.x1 = std::min(w, w - t.off_x);
  return t;
}

}  // namespace

// Convolutions run as one [span,Cin]x[Cin,Cout] GEMM per kernel tap and
// output row; no im2col buffer, and the per-pixel accumulation order is the
// fixed tap order.
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require_rank4(x, "conv2d");
  if (kernel.rank() != 4)
    throw std::invalid_argument("conv2d: kernel must be rank 4, got " + kernel.shape_string());
  const int n = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2)), cin = static_cast<int>(x.dim(3));
  const int k = static_cast<int>(kernel.dim(0));
  const int cout = static_cast<int>(kernel.dim(3));
  if (kernel.dim(1) != k || kernel.dim(2) != cin)
    throw std::invalid_argument("conv2d: input " + x.shape_string() + " does not match kernel " +
                                kernel.shape_string());
  if (bias.numel() != cout)
    throw std::invalid_argument("conv2d: bias " + bias.shape_string() + " does not match Cout");

  const int pad = k / 2;
  const long hw = static_cast<long>(h) * w;
  Tensor out = Tensor::uninitialized({n, h, w, cout});
  parallel_for_each(n, [&](int64_t img) {
    const float* xi = x.data() + img * hw * cin;
    float* oi = out.data() + img * hw * cout;
    for (long r = 0; r < hw; ++r)
      std::memcpy(oi + r * cout, bias.data(), sizeof(float) * static_cast<size_t>(cout));
    for (int kdy = 0; kdy < k; ++kdy) {
      for (int kdx = 0; kdx < k; ++kdx) {
        TapRange t = tap_range(h, w, kdy, kdx, pad);
        if (t.empty()) continue;
        const float* wmat = kernel.data() + (static_cast<long>(kdy) * k + kdx) * cin * cout;
        const int span = t.x1 - t.x0;
        if (span == w) {  // full-width taps collapse to one GEMM
          const float* a = xi + ((static_cast<long>(t.y0) + t.off_y) * w + t.off_x) * cin;
          float* c = oi + (static_cast<long>(t.y0) * w) * cout;
          sgemm(a, cin, wmat, cout, c, cout, (t.y1 - t.y0) * w, cin, cout, true);
          continue;
        }
        for (int y = t.y0; y < t.y1; ++y) {
          const float* a = xi + ((static_cast<long>(y) + t.off_y) * w + (t.x0 + t.off_x)) * cin;
          float* c = oi + (static_cast<long>(y) * w + t.x0) * cout;
          sgemm(a, cin, wmat, cout, c, cout, span, cin, cout, true);
        }
      }
    }
  });
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy) {
  const int n = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2)), cin = static_cast<int>(x.dim(3));
  const int k = static_cast<int>(kernel.dim(0));
  const int cout = static_cast<int>(kernel.dim(3));
  const int pad = k / 2;
  const long hw = static_cast<long>(h) * w;

  Conv2dGrads g;
  g.dx = Tensor(x.shape());
  g.dkernel = Tensor(kernel.shape());


  // Per-tap transposed kernels [Cout, Cin] for the dx GEMMs.
  std::vector<float> kt(static_cast<size_t>(k) * k * cout * cin);
  for (int tap = 0; tap < k * k; ++tap) {
    const float* src = kernel.data() + static_cast<long>(tap) * cin * cout;
    float* dst = kt.data() + static_cast<long>(tap) * cout * cin;
    for (int a = 0; a < cin; ++a)
      for (int b = 0; b < cout; ++b)
        dst[static_cast<long>(b) * cin + a] = src[static_cast<long>(a) * cout + b];
  }

  // Per-image kernel-gradient partials, then a fixed-order image reduction.
  std::vector<std::vector<float>> dk_partial(static_cast<size_t>(n));
  parallel_for_each(n, [&](int64_t img) {
    const float* xi = x.data() + img * hw * cin;
    const float* dyi = dy.data() + img * hw * cout;
    float* dxi = g.dx.data() + img * hw * cin;
    auto& dk = dk_partial[static_cast<size_t>(img)];
    dk.assign(static_cast<size_t>(k) * k * cin * cout, 0.0f);

    for (int kdy = 0; kdy < k; ++kdy) {
      for (int kdx = 0; kdx < k; ++kdx) {
        TapRange t = tap_range(h, w, kdy, kdx, pad);
        if (t.empty()) continue;
        const int tap = kdy * k + kdx;
        float* dk_tap = dk.data() + static_cast<long>(tap) * cin * cout;
        const float* kt_tap = kt.data() + static_cast<long>(tap) * cout * cin;
        const int span = t.x1 - t.x0;
        if (span == w) {
          const long rows = static_cast<long>(t.y1 - t.y0) * w;
          const float* a = xi + ((static_cast<long>(t.y0) + t.off_y) * w + t.off_x) * cin;
          const float* dyr = dyi + (static_cast<long>(t.y0) * w) * cout;
          float* dxr = dxi + ((static_cast<long>(t.y0) + t.off_y) * w + t.off_x) * cin;
          sgemm_at(a, cin, dyr, cout, dk_tap, cout, cin, rows, cout, true);
          sgemm(dyr, cout, kt_tap, cin, dxr, cin, rows, cout, cin, true);
          continue;
        }
        for (int y = t.y0; y < t.y1; ++y) {
          const float* a = xi + ((static_cast<long>(y) + t.off_y) * w + (t.x0 + t.off_x)) * cin;
          const float* dyr = dyi + (static_cast<long>(y) * w + t.x0) * cout;
          float* dxr = dxi + ((static_cast<long>(y) + t.off_y) * w + (t.x0 + t.off_x)) * cin;
          sgemm_at(a, cin, dyr, cout, dk_tap, cout, cin, span, cout, true);
          sgemm(dyr, cout, kt_tap, cin, dxr, cin, span, cout, cin, true);
        }
      }
    }
  });
  for (int img = 0; img < n; ++img) {
    const float* src = dk_partial[static_cast<size_t>(img)].data();
    float* dst = g.dkernel.data();
    const size_t len = static_cast<size_t>(k) * k * cin * cout;
    for (size_t i = 0; i < len; ++i) dst[i] += src[i];
  }

  g.dbias = bias_grad(dy);
  return g;
}

namespace {

// Depthwise pass for one image: out[y,x,c] = sum_{taps} x[..]*w[tap,c].
void depthwise_image(const float* x, int h, int w, int c, int k, const float* dw,
                     float* out) {
  const int pad = k / 2;
  std::memset(out, 0, sizeof(float) * static_cast<size_t>(h) * w * c);
  for (int kdy = 0; kdy < k; ++kdy) {
    for (int kdx = 0; kdx < k; ++kdx) {
      TapRange t = tap_range(h, w, kdy, kdx, pad);
      if (t.empty()) continue;
      const float* __restrict wrow = dw + (static_cast<long>(kdy) * k + kdx) * c;
      for (int y = t.y0; y < t.y1; ++y) {
        const float* __restrict src =
            x + ((static_cast<long>(y) + t.off_y) * w + (t.x0 + t.off_x)) * c;
        float* __restrict dst = out + (static_cast<long>(y) * w + t.x0) * c;
        for (int px = 0; px < t.x1 - t.x0; ++px) {
          const float* s = src + static_cast<long>(px) * c;
          float* dd = dst + static_cast<long>(px) * c;
          for (int ch = 0; ch < c; ++ch) dd[ch] += s[ch] * wrow[ch];
        }
      }
    }
  }
}

}  // namespace

Tensor separable_conv2d_forward(const Tensor& x, const Tensor& depthwise,
                                const Tensor& pointwise, const Tensor& bias,
                                Tensor* mid_out) {
  require_rank4(x, "separable_conv2d");
  const int n = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2)), cin = static_cast<int>(x.dim(3));
  if (depthwise.rank() != 3 || depthwise.dim(2) != cin)
    throw std::invalid_argument("separable_conv2d: input " + x.shape_string() +
                                " does not match depthwise " + depthwise.shape_string());
  const int k = static_cast<int>(depthwise.dim(0));
  if (depthwise.dim(1) != k)
    throw std::invalid_argument("separable_conv2d: depthwise kernel must be square");
  if (pointwise.rank() != 4 || pointwise.dim(0) != 1 || pointwise.dim(1) != 1 ||
      pointwise.dim(2) != cin)
    throw std::invalid_argument("separable_conv2d: pointwise " + pointwise.shape_string() +
                                " does not match Cin");
  const int cout = static_cast<int>(pointwise.dim(3));
  if (bias.numel() != cout)
    throw std::invalid_argument("separable_conv2d: bias does not match Cout");

  const long hw = static_cast<long>(h) * w;
  Tensor mid = Tensor::uninitialized({n, h, w, cin});
  Tensor out = Tensor::uninitialized({n, h, w, cout});
  parallel_for_each(n, [&](int64_t img) {
    float* mi = mid.data() + img * hw * cin;
    depthwise_image(x.data() + img * hw * cin, h, w, cin, k, depthwise.data(), mi);
    float* oi = out.data() + img * hw * cout;
    for (long r = 0; r < hw; ++r)
      std::memcpy(oi + r * cout, bias.data(), sizeof(float) * static_cast<size_t>(cout));
    sgemm(mi, cin, pointwise.data(), cout, oi, cout, static_cast<int>(hw), cin, cout, true);
  });
  if (mid_out) *mid_out = std::move(mid);
  return out;
}

SepConv2dGrads separable_conv2d_backward(const Tensor& x, const Tensor& mid,
                                         const Tensor& depthwise, const Tensor& pointwise,
                                         const Tensor& dy) {
  const int n = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1));
  const int w = static_cast<int>(x.dim(2)), cin = static_cast<int>(x.dim(3));
  const int k = static_cast<int>(depthwise.dim(0));
  const int cout = static_cast<int>(pointwise.dim(3));
  const int pad = k / 2;
  const long hw = static_cast<long>(h) * w;

  SepConv2dGrads g;
  g.dx = Tensor(x.shape());
  g.ddepthwise = Tensor(depthwise.shape());
  g.dpointwise = Tensor(pointwise.shape());


  std::vector<float> pwt(static_cast<size_t>(cout) * cin);
  for (int a = 0; a < cin; ++a)
    for (int b = 0; b < cout; ++b)
      pwt[static_cast<size_t>(b) * cin + a] = pointwise.data()[static_cast<size_t>(a) * cout + b];

  std::vector<std::vector<float>> dpw_partial(static_cast<size_t>(n));
  std::vector<std::vector<float>> ddw_partial(static_cast<size_t>(n));
  static thread_local std::vector<float> t_dmid;
  parallel_for_each(n, [&](int64_t img) {
    const float* xi = x.data() + img * hw * cin;
    const float* mi = mid.data() + img * hw * cin;
    const float* dyi = dy.data() + img * hw * cout;

    auto& dpw = dpw_partial[static_cast<size_t>(img)];
    dpw.assign(static_cast<size_t>(cin) * cout, 0.0f);
    sgemm_at(mi, cin, dyi, cout, dpw.data(), cout, cin, static_cast<int>(hw), cout, true);

    t_dmid.resize(static_cast<size_t>(hw) * cin);
    float* dmid = t_dmid.data();
    sgemm(dyi, cout, pwt.data(), cin, dmid, cin, static_cast<int>(hw), cout, cin, false);

    auto& ddw = ddw_partial[static_cast<size_t>(img)];
    ddw.assign(static_cast<size_t>(k) * k * cin, 0.0f);
    float* dxi = g.dx.data() + img * hw * cin;
    for (int kdy = 0; kdy < k; ++kdy) {
      for (int kdx = 0; kdx < k; ++kdx) {
        TapRange t = tap_range(h, w, kdy, kdx, pad);
        if (t.empty()) continue;
        float* __restrict ddw_row = ddw.data() + (static_cast<long>(kdy) * k + kdx) * cin;
        const float* __restrict w_row =
            depthwise.data() + (static_cast<long>(kdy) * k + kdx) * cin;
        for (int y = t.y0; y < t.y1; ++y) {
          const float* __restrict src_x =
              xi + ((static_cast<long>(y) + t.off_y) * w + (t.x0 + t.off_x)) * cin;
          float* __restrict dst_dx =
              dxi + ((static_cast<long>(y) + t.off_y) * w + (t.x0 + t.off_x)) * cin;
          const float* __restrict dmid_row = dmid + (static_cast<long>(y) * w + t.x0) * cin;
          for (int px = 0; px < t.x1 - t.x0; ++px) {
            const float* sx = src_x + static_cast<long>(px) * cin;
            float* dd = dst_dx + static_cast<long>(px) * cin;
            const float* dm = dmid_row + static_cast<long>(px) * cin;
            for (int ch = 0; ch < cin; ++ch) {
              ddw_row[ch] += sx[ch] * dm[ch];
              dd[ch] += w_row[ch] * dm[ch];
            }
          }
        }
      }
    }
  });
  for (int img = 0; img < n; ++img) {
    const size_t lp = static_cast<size_t>(cin) * cout;
    for (size_t i = 0; i < lp; ++i)
      g.dpointwise.data()[i] += dpw_partial[static_cast<size_t>(img)][i];
    const size_t ld = static_cast<size_t>(k) * k * cin;
    for (size_t i = 0; i < ld; ++i)
      g.ddepthwise.data()[i] += ddw_partial[static_cast<size_t>(img)][i];
  }

  g.dbias = bias_grad(dy);
  return g;
}

Tensor elu(const Tensor& x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("elu: alpha must be > 0");
  Tensor out = Tensor::uninitialized(x.shape());
  const float a = static_cast<float>(alpha);
  const float* __restrict in = x.data();
  float* __restrict o = out.data();
  parallel_for(x.numel(), [&](int64_t b, int64_t e) {
    // Branchless form: evaluate the negative branch on min(v, 0) everywhere
    // and blend, which keeps the loop vectorizable.
    for (int64_t i = b; i < e; ++i) {
      float v = in[i];
      float neg = a * (fast_expf(std::min(v, 0.0f)) - 1.0f);
      o[i] = v > 0.0f ? v : neg;
    }
  });
  return out;
}

Tensor elu_backward(const Tensor& y, double alpha, const Tensor& dy) {
  Tensor out = Tensor::uninitialized(dy.shape());
  const float a = static_cast<float>(alpha);
  const float* __restrict yv = y.data();
  const float* __restrict g = dy.data();
  float* __restrict o = out.data();
  parallel_for(y.numel(), [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i)
      o[i] = yv[i] > 0.0f ? g[i] : g[i] * (yv[i] + a);
  });
  return out;
}

namespace {

struct BnDims {
  int64_t channels;
  int64_t rows;  // reduction count per channel
};

BnDims bn_dims(const Tensor& x) {
  if (x.rank() == 4) return {x.dim(3), x.dim(0) * x.dim(1) * x.dim(2)};
  if (x.rank() == 2) return {x.dim(1), x.dim(0)};
  throw std::invalid_argument("batch_norm: expected rank-2 or rank-4 input, got " +
                              x.shape_string());
}

// Per-channel f64 sums streamed row-major. Partials are per batch item, then
// combined in item order, so thread count never changes the result.
void bn_channel_sums(const Tensor& x, std::vector<double>& sum, std::vector<double>& sum_sq) {
  BnDims d = bn_dims(x);
  const int64_t c = d.channels;
  const int64_t items = x.dim(0);
  const int64_t rows_per_item = d.rows / items;
  std::vector<std::vector<double>> partial(static_cast<size_t>(items));
  parallel_for_each(items, [&](int64_t it) {
    auto& p = partial[static_cast<size_t>(it)];
    p.assign(static_cast<size_t>(2 * c), 0.0);
    const float* base = x.data() + it * rows_per_item * c;
    for (int64_t r = 0; r < rows_per_item; ++r) {
      const float* row = base + r * c;
      for (int64_t ch = 0; ch < c; ++ch) {
        double v = row[ch];
        p[static_cast<size_t>(ch)] += v;
        p[static_cast<size_t>(c + ch)] += v * v;
      }
    }
  });
  sum.assign(static_cast<size_t>(c), 0.0);
  sum_sq.assign(static_cast<size_t>(c), 0.0);
  for (int64_t it = 0; it < items; ++it) {
    const auto& p = partial[static_cast<size_t>(it)];
    for (int64_t ch = 0; ch < c; ++ch) {
      sum[static_cast<size_t>(ch)] += p[static_cast<size_t>(ch)];
      sum_sq[static_cast<size_t>(ch)] += p[static_cast<size_t>(c + ch)];
    }
  }
}

}  // namespace

Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          Mode mode, Tensor& running_mean, Tensor& running_var,
                          double epsilon, double momentum, BatchNormCache* cache) {
  BnDims d = bn_dims(x);
  const int64_t c = d.channels;
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw std::invalid_argument("batch_norm: parameter size does not match channels");

  std::vector<double> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
  const int64_t rows = d.rows;

  if (mode == Mode::train) {
    if (x.dim(0) < 2)
      throw std::invalid_argument("batch_norm: train mode requires batch size >= 2");
    std::vector<double> sum, sum_sq;
    bn_channel_sums(x, sum, sum_sq);
    for (int64_t ch = 0; ch < c; ++ch) {
      double m = sum[static_cast<size_t>(ch)] / static_cast<double>(rows);
      double v = sum_sq[static_cast<size_t>(ch)] / static_cast<double>(rows) - m * m;
      mean[static_cast<size_t>(ch)] = m;
      var[static_cast<size_t>(ch)] = v > 0.0 ? v : 0.0;
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      running_mean.data()[ch] = static_cast<float>(
          momentum * running_mean.data()[ch] + (1.0 - momentum) * mean[static_cast<size_t>(ch)]);
      running_var.data()[ch] = static_cast<float>(
          momentum * running_var.data()[ch] + (1.0 - momentum) * var[static_cast<size_t>(ch)]);
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[static_cast<size_t>(ch)] = running_mean.data()[ch];
      var[static_cast<size_t>(ch)] = running_var.data()[ch];
    }
  }

  std::vector<float> scale(static_cast<size_t>(c)), shift(static_cast<size_t>(c));
  std::vector<double> inv_std(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    double inv = 1.0 / std::sqrt(var[static_cast<size_t>(ch)] + epsilon);
    inv_std[static_cast<size_t>(ch)] = inv;
    double a = gamma.data()[ch] * inv;
    scale[static_cast<size_t>(ch)] = static_cast<float>(a);
    shift[static_cast<size_t>(ch)] =
        static_cast<float>(beta.data()[ch] - a * mean[static_cast<size_t>(ch)]);
  }

  Tensor out = Tensor::uninitialized(x.shape());
  const float* __restrict in = x.data();
  float* __restrict o = out.data();
  const float* __restrict sc = scale.data();
  const float* __restrict sh = shift.data();
  parallel_for(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const float* src = in + r * c;
      float* dst = o + r * c;
      for (int64_t ch = 0; ch < c; ++ch) dst[ch] = sc[ch] * src[ch] + sh[ch];
    }
  });

  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    // cache->x is assigned by the caller, which owns the activation chain.
  }
  return out;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& dy) {
  const Tensor& x = *cache.x;
  BnDims d = bn_dims(x);
  const int64_t c = d.channels;
  const int64_t rows = d.rows;
  const double cnt = static_cast<double>(rows);

  BatchNormGrads g;
  g.dx = Tensor(x.shape());
  g.dgamma = Tensor({c});
  g.dbeta = Tensor({c});

  // sum(dy) and sum(dy * xhat) per channel, per-item partials in item order.
  const int64_t items = x.dim(0);
  const int64_t rows_per_item = rows / items;
  std::vector<std::vector<double>> partial(static_cast<size_t>(items));
  parallel_for_each(items, [&](int64_t it) {
    auto& p = partial[static_cast<size_t>(it)];
    p.assign(static_cast<size_t>(2 * c), 0.0);
    const float* xb = x.data() + it * rows_per_item * c;
    const float* dyb = dy.data() + it * rows_per_item * c;
    for (int64_t r = 0; r < rows_per_item; ++r) {
      const float* xr = xb + r * c;
      const float* dyr = dyb + r * c;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double m = cache.mean[static_cast<size_t>(ch)];
        const double inv = cache.inv_std[static_cast<size_t>(ch)];
        double dyv = dyr[ch];
        p[static_cast<size_t>(ch)] += dyv;
        p[static_cast<size_t>(c + ch)] += dyv * (xr[ch] - m) * inv;
      }
    }
  });
  std::vector<double> sum_dy(static_cast<size_t>(c), 0.0),
      sum_dy_xhat(static_cast<size_t>(c), 0.0);
  for (int64_t it = 0; it < items; ++it) {
    const auto& p = partial[static_cast<size_t>(it)];
    for (int64_t ch = 0; ch < c; ++ch) {
      sum_dy[static_cast<size_t>(ch)] += p[static_cast<size_t>(ch)];
      sum_dy_xhat[static_cast<size_t>(ch)] += p[static_cast<size_t>(c + ch)];
    }
  }
  for (int64_t ch = 0; ch < c; ++ch) {
    g.dbeta.data()[ch] = static_cast<float>(sum_dy[static_cast<size_t>(ch)]);
    g.dgamma.data()[ch] = static_cast<float>(sum_dy_xhat[static_cast<size_t>(ch)]);
  }

  // dx = a*(cnt*dy - sum_dy - xhat*sum_dy_xhat) with a = gamma*inv/cnt,
  // folded into one FMA per element.
  std::vector<float> k1(static_cast<size_t>(c)), k2(static_cast<size_t>(c)),
      k3(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    double inv = cache.inv_std[static_cast<size_t>(ch)];
    double a = gamma.data()[ch] * inv / cnt;
    k1[static_cast<size_t>(ch)] = static_cast<float>(a * cnt);
    k2[static_cast<size_t>(ch)] = static_cast<float>(
        -a * (sum_dy[static_cast<size_t>(ch)] -
              cache.mean[static_cast<size_t>(ch)] * inv * sum_dy_xhat[static_cast<size_t>(ch)]));
    k3[static_cast<size_t>(ch)] =
        static_cast<float>(-a * inv * sum_dy_xhat[static_cast<size_t>(ch)]);
  }
  const float* __restrict xp = x.data();
  const float* __restrict dyp = dy.data();
  float* __restrict dxp = g.dx.data();
  const float* __restrict k1p = k1.data();
  const float* __restrict k2p = k2.data();
  const float* __restrict k3p = k3.data();
  parallel_for(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const float* xr = xp + r * c;
      const float* dyr = dyp + r * c;
      float* dxr = dxp + r * c;
      for (int64_t ch = 0; ch < c; ++ch)
        dxr[ch] = k1p[ch] * dyr[ch] + k3p[ch] * xr[ch] + k2p[ch];
    }
  });
  return g;
}

Tensor max_pool_forward(const Tensor& x, std::vector<uint8_t>* argmax) {
  require_rank4(x, "max_pool");
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("max_pool: spatial dims must be even, got " + x.shape_string());
  const int64_t oh = h / 2, ow = w / 2;
  Tensor out = Tensor::uninitialized({n, oh, ow, c});
  if (argmax) argmax->assign(static_cast<size_t>(out.numel()), 0);

  parallel_for_each(n, [&](int64_t img) {
    const float* xi = x.data() + img * h * w * c;
    float* oi = out.data() + img * oh * ow * c;
    uint8_t* am = argmax ? argmax->data() + img * oh * ow * c : nullptr;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t xo = 0; xo < ow; ++xo) {
        const float* w00 = xi + ((2 * y) * w + 2 * xo) * c;
        const float* w01 = w00 + c;
        const float* w10 = xi + ((2 * y + 1) * w + 2 * xo) * c;
        const float* w11 = w10 + c;
        float* dst = oi + (y * ow + xo) * c;
        for (int64_t ch = 0; ch < c; ++ch) {
          // Window scan order (0,0),(0,1),(1,0),(1,1); first max wins.
          float best = w00[ch];
          uint8_t bi = 0;
          if (w01[ch] > best) { best = w01[ch]; bi = 1; }
          if (w10[ch] > best) { best = w10[ch]; bi = 2; }
          if (w11[ch] > best) { best = w11[ch]; bi = 3; }
          dst[ch] = best;
          if (am) am[(y * ow + xo) * c + ch] = bi;
        }
      }
    }
  });
  return out;
}

Tensor max_pool_backward(const Tensor& dy, const std::vector<uint8_t>& argmax,
                         const std::vector<int64_t>& in_shape) {
  const int64_t n = in_shape[0], h = in_shape[1], w = in_shape[2], c = in_shape[3];
  const int64_t oh = h / 2, ow = w / 2;
  Tensor dx(in_shape);
  parallel_for_each(n, [&](int64_t img) {
    const float* dyi = dy.data() + img * oh * ow * c;
    const uint8_t* am = argmax.data() + img * oh * ow * c;
    float* dxi = dx.data() + img * h * w * c;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t xo = 0; xo < ow; ++xo) {
        for (int64_t ch = 0; ch < c; ++ch) {
          uint8_t bi = am[(y * ow + xo) * c + ch];
          int64_t ys = 2 * y + (bi >> 1), xs = 2 * xo + (bi & 1);
          dxi[(ys * w + xs) * c + ch] += dyi[(y * ow + xo) * c + ch];
        }
      }
    }
  });
  return dx;
}

Tensor dropout_forward(const Tensor& x, double rate, uint64_t seed, Mode mode,
                       std::vector<uint8_t>* mask) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) {
    if (mask) mask->clear();
    return x;
  }
  Rng rng(seed);
  const float scale = static_cast<float>(1.0 / (1.0 - rate));
  Tensor out = Tensor::uninitialized(x.shape());
  if (mask) mask->assign(static_cast<size_t>(x.numel()), 0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    bool keep = rng.uniform() >= rate;
    out.data()[i] = keep ? x.data()[i] * scale : 0.0f;
    if (mask) (*mask)[static_cast<size_t>(i)] = keep ? 1 : 0;
  }
  return out;
}

Tensor dropout_backward(const Tensor& dy, double rate, const std::vector<uint8_t>& mask) {
  if (mask.empty()) return dy;  // identity forward
  const float scale = static_cast<float>(1.0 / (1.0 - rate));
  Tensor dx = Tensor::uninitialized(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i)
    dx.data()[i] = mask[static_cast<size_t>(i)] ? dy.data()[i] * scale : 0.0f;
  return dx;
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2)
    throw std::invalid_argument("dense: expected rank-2 input, got " + x.shape_string());
  if (w.rank() != 2 || x.dim(1) != w.dim(0))
    throw std::invalid_argument("dense: input " + x.shape_string() + " does not match weight " +
                                w.shape_string());
  const int64_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  if (b.numel() != m) throw std::invalid_argument("dense: bias does not match out features");
  Tensor out = Tensor::uninitialized({n, m});
  for (int64_t r = 0; r < n; ++r)
    std::memcpy(out.data() + r * m, b.data(), sizeof(float) * static_cast<size_t>(m));
  sgemm_parallel(x.data(), static_cast<int>(d), w.data(), static_cast<int>(m), out.data(),
                 static_cast<int>(m), static_cast<int>(n), static_cast<int>(d),
                 static_cast<int>(m), /*accumulate=*/true);
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  const int64_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  DenseGrads g;
  g.dx = Tensor::uninitialized({n, d});
  g.dw = Tensor::uninitialized({d, m});
  g.db = Tensor::uninitialized({m});

  // dw = x^T dy (k = batch), dx = dy w^T (dot form; dx stays cache-resident)
  sgemm_at_parallel(x.data(), static_cast<int>(d), dy.data(), static_cast<int>(m),
                    g.dw.data(), static_cast<int>(m), static_cast<int>(d),
                    static_cast<int>(n), static_cast<int>(m), /*accumulate=*/false);
  sgemm_bt(dy.data(), static_cast<int>(m), w.data(), static_cast<int>(m), g.dx.data(),
           static_cast<int>(d), static_cast<int>(n), static_cast<int>(m),
           static_cast<int>(d), /*accumulate=*/false);
  for (int64_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int64_t r = 0; r < n; ++r) acc += dy.data()[r * m + j];
    g.db.data()[j] = static_cast<float>(acc);
  }
  return g;
}

MseResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("mse_loss: shape mismatch " + pred.shape_string() + " vs " +
                                target.shape_string());
  const int64_t n = pred.numel();
  MseResult r;
  r.grad = Tensor::uninitialized(pred.shape());
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    acc += d * d;
    r.grad.data()[i] = static_cast<float>(2.0 * d / static_cast<double>(n));
  }
  r.loss = acc / static_cast<double>(n);
  return r;
}

}  // namespace lawn::nn
