#pragma once

// Differentiable primitives on BasicTensor. Each forward op has a matching
// *_backward that maps an upstream gradient to input gradients.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "holoseg/tensor.hpp"

namespace holoseg {

inline constexpr double kDefaultLogitEps = 1e-7;

namespace detail {

template <typename Scalar>
Scalar stable_sigmoid(Scalar v) {
  if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
  const Scalar e = std::exp(v);
  return e / (Scalar(1) + e);
}

inline void check_eps(double eps) {
  if (!(eps > 0.0 && eps < 0.5)) {
    throw Error("logit: eps must lie in (0, 0.5), got " + std::to_string(eps));
  }
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& x) {
  return x.unary([](Scalar v) { return detail::stable_sigmoid(v); });
}

/// Gradient of sigmoid given its output `y`.
template <typename Scalar>
BasicTensor<Scalar> sigmoid_backward(const BasicTensor<Scalar>& y,
                                     const BasicTensor<Scalar>& grad_out) {
  require_same_shape(y, grad_out, "sigmoid_backward");
  return BasicTensor<Scalar>(y.dims(), (grad_out.array() * y.array() * (1 - y.array())).eval());
}

/// Inverse sigmoid with the argument clamped to [eps, 1 - eps].
template <typename Scalar>
BasicTensor<Scalar> logit(const BasicTensor<Scalar>& p, double eps = kDefaultLogitEps) {
  detail::check_eps(eps);
  const Scalar lo = Scalar(eps), hi = Scalar(1 - eps);
  return p.unary([lo, hi](Scalar v) {
    const Scalar c = std::clamp(v, lo, hi);
    return std::log(c) - std::log1p(-c);
  });
}

/// Zero gradient inside the clamped region.
template <typename Scalar>
BasicTensor<Scalar> logit_backward(const BasicTensor<Scalar>& p, const BasicTensor<Scalar>& grad_out,
                                   double eps = kDefaultLogitEps) {
  detail::check_eps(eps);
  require_same_shape(p, grad_out, "logit_backward");
  BasicTensor<Scalar> g(p.dims());
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar v = p[i];
    g[i] = (v > Scalar(eps) && v < Scalar(1 - eps)) ? grad_out[i] / (v * (1 - v)) : Scalar(0);
  }
  return g;
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
  return BasicTensor<Scalar>(x.dims(), x.array().max(Scalar(0)).eval());
}

template <typename Scalar>
BasicTensor<Scalar> relu_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  return BasicTensor<Scalar>(x.dims(),
                             (x.array() > Scalar(0)).select(grad_out.array(), Scalar(0)).eval());
}

// ---------------------------------------------------------------------------
// Convolution

/// "Same" padding geometry for a dilated, strided convolution: the output
/// is ceil(h / stride) x ceil(w / stride); any odd padding goes after.
struct ConvGeometry {
  Index out_h = 0, out_w = 0;
  Index pad_top = 0, pad_left = 0;

  static ConvGeometry same(Index h, Index w, Index k, Index dilation, Index stride) {
    ConvGeometry g;
    const Index span = (k - 1) * dilation + 1;
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    g.pad_top = std::max<Index>((g.out_h - 1) * stride + span - h, 0) / 2;
    g.pad_left = std::max<Index>((g.out_w - 1) * stride + span - w, 0) / 2;
    return g;
  }
};

namespace detail {

template <typename Scalar>
void check_conv(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel, Index dilation,
                Index stride) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0) {
    throw Error("conv2d: kernel must be square with odd size, got " + dims_to_string(kernel.dims()));
  }
  if (kernel.dim(2) != input.dim(2)) {
    throw Error("conv2d: kernel expects " + std::to_string(kernel.dim(2)) +
                " input channels, input has " + std::to_string(input.dim(2)));
  }
  if (dilation < 1 || stride < 1) throw Error("conv2d: dilation and stride must be positive");
}

/// Visit every (output pixel, kernel tap, input pixel) triple that lies
/// inside the input.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Index h, Index w, Index k, Index dilation, Index stride,
                  Fn&& fn) {
  for (Index oy = 0; oy < g.out_h; ++oy) {
    for (Index ox = 0; ox < g.out_w; ++ox) {
      for (Index ky = 0; ky < k; ++ky) {
        const Index iy = oy * stride - g.pad_top + ky * dilation;
        if (iy < 0 || iy >= h) continue;
        for (Index kx = 0; kx < k; ++kx) {
          const Index ix = ox * stride - g.pad_left + kx * dilation;
          if (ix < 0 || ix >= w) continue;
          fn(oy, ox, ky, kx, iy, ix);
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of an h x w x cin map with a k x k x cin x cout kernel.
template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                           const BasicTensor<Scalar>& bias, Index dilation = 1, Index stride = 1) {
  detail::check_conv(input, kernel, dilation, stride);
  const Index k = kernel.dim(0), cin = kernel.dim(2), cout = kernel.dim(3);
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw Error("conv2d: bias must have " + std::to_string(cout) + " entries, got " +
                dims_to_string(bias.dims()));
  }
  const auto g = ConvGeometry::same(input.dim(0), input.dim(1), k, dilation, stride);
  BasicTensor<Scalar> out({g.out_h, g.out_w, cout});
  for (Index oy = 0; oy < g.out_h; ++oy)
    for (Index ox = 0; ox < g.out_w; ++ox) out.pixel(oy, ox) = bias.array();

  using Map = Eigen::Map<const detail::RowMatrix<Scalar>>;
  detail::for_each_tap(g, input.dim(0), input.dim(1), k, dilation, stride,
                       [&](Index oy, Index ox, Index ky, Index kx, Index iy, Index ix) {
                         const Map tap(kernel.data() + (ky * k + kx) * cin * cout, cin, cout);
                         out.pixel(oy, ox).matrix().noalias() +=
                             tap.transpose() * input.pixel(iy, ix).matrix();
                       });
  return out;
}

template <typename Scalar>
struct Conv2dGrads {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> kernel;
  BasicTensor<Scalar> bias;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const BasicTensor<Scalar>& input,
                                    const BasicTensor<Scalar>& kernel,
                                    const BasicTensor<Scalar>& grad_out, Index dilation = 1,
                                    Index stride = 1) {
  detail::check_conv(input, kernel, dilation, stride);
  const Index k = kernel.dim(0), cin = kernel.dim(2), cout = kernel.dim(3);
  const auto g = ConvGeometry::same(input.dim(0), input.dim(1), k, dilation, stride);
  if (grad_out.dims() != Dims{g.out_h, g.out_w, cout}) {
    throw Error("conv2d_backward: gradient shape " + dims_to_string(grad_out.dims()) +
                " does not match output");
  }
  Conv2dGrads<Scalar> grads{BasicTensor<Scalar>(input.dims()), BasicTensor<Scalar>(kernel.dims()),
                            BasicTensor<Scalar>({cout})};
  for (Index oy = 0; oy < g.out_h; ++oy)
    for (Index ox = 0; ox < g.out_w; ++ox) grads.bias.array() += grad_out.pixel(oy, ox);

  using ConstMap = Eigen::Map<const detail::RowMatrix<Scalar>>;
  using Map = Eigen::Map<detail::RowMatrix<Scalar>>;
  detail::for_each_tap(g, input.dim(0), input.dim(1), k, dilation, stride,
                       [&](Index oy, Index ox, Index ky, Index kx, Index iy, Index ix) {
                         const Index offset = (ky * k + kx) * cin * cout;
                         const ConstMap tap(kernel.data() + offset, cin, cout);
                         Map tap_grad(grads.kernel.data() + offset, cin, cout);
                         const auto go = grad_out.pixel(oy, ox).matrix();
                         grads.input.pixel(iy, ix).matrix().noalias() += tap * go;
                         tap_grad.noalias() += input.pixel(iy, ix).matrix() * go.transpose();
                       });
  return grads;
}

// ---------------------------------------------------------------------------
// Pooling

template <typename Scalar>
struct MaxPoolResult {
  BasicTensor<Scalar> values;  // length c
  std::vector<Index> argmax;   // flat spatial index (y * w + x) per channel
};

/// Per-channel spatial maximum; ties resolve to the first row-major cell.
template <typename Scalar>
MaxPoolResult<Scalar> global_max_pool(const BasicTensor<Scalar>& x) {
  require_rank(x, 3, "global_max_pool");
  const Index cells = x.dim(0) * x.dim(1), c = x.dim(2);
  MaxPoolResult<Scalar> r{BasicTensor<Scalar>({c}), std::vector<Index>(c, 0)};
  r.values.array() = x.array().head(c);
  for (Index i = 1; i < cells; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Scalar v = x[i * c + ch];
      if (v > r.values[ch]) {
        r.values[ch] = v;
        r.argmax[ch] = i;
      }
    }
  }
  return r;
}

template <typename Scalar>
BasicTensor<Scalar> global_max_pool_backward(const Dims& input_dims, const std::vector<Index>& argmax,
                                             const BasicTensor<Scalar>& grad_out) {
  const Index c = input_dims.at(2);
  if (grad_out.size() != c || static_cast<Index>(argmax.size()) != c) {
    throw Error("global_max_pool_backward: channel count mismatch");
  }
  BasicTensor<Scalar> g(input_dims);
  for (Index ch = 0; ch < c; ++ch) g[argmax[ch] * c + ch] = grad_out[ch];
  return g;
}

// ---------------------------------------------------------------------------
// Bilinear interpolation (align-corners)

namespace detail {

struct LerpTap {
  Index lo, hi;
  double frac;
};

inline std::vector<LerpTap> lerp_taps(Index src, Index dst) {
  std::vector<LerpTap> taps(dst);
  const double scale = dst > 1 ? double(src - 1) / double(dst - 1) : 0.0;
  for (Index i = 0; i < dst; ++i) {
    const double pos = i * scale;
    Index lo = std::min<Index>(static_cast<Index>(std::floor(pos)), src - 1);
    taps[i] = {lo, std::min<Index>(lo + 1, src - 1), pos - double(lo)};
  }
  return taps;
}

}  // namespace detail

/// Resize an h x w x c map to H x W x c. Source coordinate of output index
/// i is i * (h - 1) / (H - 1); a single output row samples row 0.
template <typename Scalar>
BasicTensor<Scalar> bilinear_resize(const BasicTensor<Scalar>& x, Index out_h, Index out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h <= 0 || out_w <= 0) throw Error("bilinear_resize: output extents must be positive");
  const auto ty = detail::lerp_taps(x.dim(0), out_h);
  const auto tx = detail::lerp_taps(x.dim(1), out_w);
  BasicTensor<Scalar> out({out_h, out_w, x.dim(2)});
  for (Index y = 0; y < out_h; ++y) {
    const Scalar fy = Scalar(ty[y].frac);
    for (Index xx = 0; xx < out_w; ++xx) {
      const Scalar fx = Scalar(tx[xx].frac);
      out.pixel(y, xx) = (1 - fy) * ((1 - fx) * x.pixel(ty[y].lo, tx[xx].lo) +
                                     fx * x.pixel(ty[y].lo, tx[xx].hi)) +
                         fy * ((1 - fx) * x.pixel(ty[y].hi, tx[xx].lo) +
                               fx * x.pixel(ty[y].hi, tx[xx].hi));
    }
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> bilinear_upsample(const BasicTensor<Scalar>& x, Index out_h, Index out_w) {
  require_rank(x, 3, "bilinear_upsample");
  if (out_h < x.dim(0) || out_w < x.dim(1)) {
    throw Error("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                std::to_string(out_w) + " is smaller than source " + dims_to_string(x.dims()));
  }
  return bilinear_resize(x, out_h, out_w);
}

template <typename Scalar>
BasicTensor<Scalar> bilinear_resize_backward(const BasicTensor<Scalar>& grad_out, Index in_h,
                                             Index in_w) {
  require_rank(grad_out, 3, "bilinear_resize_backward");
  const Index out_h = grad_out.dim(0), out_w = grad_out.dim(1);
  const auto ty = detail::lerp_taps(in_h, out_h);
  const auto tx = detail::lerp_taps(in_w, out_w);
  BasicTensor<Scalar> g({in_h, in_w, grad_out.dim(2)});
  for (Index y = 0; y < out_h; ++y) {
    const Scalar fy = Scalar(ty[y].frac);
    for (Index xx = 0; xx < out_w; ++xx) {
      const Scalar fx = Scalar(tx[xx].frac);
      const auto go = grad_out.pixel(y, xx);
      g.pixel(ty[y].lo, tx[xx].lo) += (1 - fy) * (1 - fx) * go;
      g.pixel(ty[y].lo, tx[xx].hi) += (1 - fy) * fx * go;
      g.pixel(ty[y].hi, tx[xx].lo) += fy * (1 - fx) * go;
      g.pixel(ty[y].hi, tx[xx].hi) += fy * fx * go;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax over the channel axis

template <typename Scalar>
BasicTensor<Scalar> softmax_channel(const BasicTensor<Scalar>& x) {
  require_rank(x, 3, "softmax_channel");
  BasicTensor<Scalar> out(x.dims());
  for (Index y = 0; y < x.dim(0); ++y) {
    for (Index xx = 0; xx < x.dim(1); ++xx) {
      const auto v = x.pixel(y, xx);
      auto e = (v - v.maxCoeff()).exp().eval();
      out.pixel(y, xx) = e / e.sum();
    }
  }
  return out;
}

/// Gradient of softmax given its output `y`.
template <typename Scalar>
BasicTensor<Scalar> softmax_channel_backward(const BasicTensor<Scalar>& y,
                                             const BasicTensor<Scalar>& grad_out) {
  require_same_shape(y, grad_out, "softmax_channel_backward");
  BasicTensor<Scalar> g(y.dims());
  for (Index r = 0; r < y.dim(0); ++r) {
    for (Index c = 0; c < y.dim(1); ++c) {
      const auto p = y.pixel(r, c);
      const auto go = grad_out.pixel(r, c);
      g.pixel(r, c) = p * (go - (p * go).sum());
    }
  }
  return g;
}

}  // namespace holoseg
