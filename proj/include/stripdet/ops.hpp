#pragma once

// Forward and backward kernels over plain Tensor4 values. The recorded
// (differentiable) versions in nn.hpp are thin wrappers around these.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "stripdet/tensor.hpp"

namespace stripdet {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t groups = 1;
  bool bias = true;

  static ConvSpec standard(std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1) {
    return {in, out, k, k, stride, k / 2, k / 2, 1, true};
  }
  static ConvSpec pointwise(std::size_t in, std::size_t out) { return {in, out, 1, 1, 1, 0, 0, 1, true}; }
  static ConvSpec depthwise(std::size_t ch, std::size_t kh, std::size_t kw, std::size_t stride = 1) {
    return {ch, ch, kh, kw, stride, kh / 2, kw / 2, ch, true};
  }

  bool is_depthwise() const { return groups == in_channels && groups == out_channels; }
  bool is_pointwise() const { return kernel_h == 1 && kernel_w == 1 && groups == 1; }
  bool is_strip() const {
    return groups == in_channels && (kernel_h == 1 || kernel_w == 1) && kernel_h != kernel_w;
  }

  Dims weight_dims() const { return {out_channels, in_channels / groups, kernel_h, kernel_w}; }
  std::size_t weight_count() const { return weight_dims().count(); }
  std::size_t param_count() const { return weight_count() + (bias ? out_channels : 0); }

  std::size_t out_size(std::size_t in, std::size_t kernel, std::size_t pad) const {
    return (in + 2 * pad - kernel) / stride + 1;
  }

  void validate() const {
    if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0) {
      throw std::invalid_argument("conv spec: channels " + std::to_string(in_channels) + "->" +
                                  std::to_string(out_channels) + " not divisible by groups " +
                                  std::to_string(groups));
    }
    if (stride == 0 || kernel_h == 0 || kernel_w == 0) {
      throw std::invalid_argument("conv spec: stride and kernel must be positive");
    }
  }
};

namespace ops {

namespace detail {

// Output indices i in [lo, hi) whose input tap i*stride + offset - pad lands
// inside [0, extent).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t extent,
                                                       std::size_t stride, std::size_t offset,
                                                       std::size_t pad) {
  const long s = static_cast<long>(stride);
  const long shift = static_cast<long>(offset) - static_cast<long>(pad);
  long lo = 0;
  if (shift < 0) lo = (-shift + s - 1) / s;
  const long last_in = static_cast<long>(extent) - 1 - shift;
  if (last_in < 0) return {0, 0};
  long hi = std::min<long>(static_cast<long>(out_extent), last_in / s + 1);
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Flat index of input row `row`, column (v - pad); may be negative.
inline std::ptrdiff_t tap_offset(std::size_t row, std::size_t width, std::size_t v, std::size_t pad) {
  return static_cast<std::ptrdiff_t>(row * width + v) - static_cast<std::ptrdiff_t>(pad);
}

inline Dims conv_out_dims(const Dims& x, const ConvSpec& spec) {
  spec.validate();
  if (x.c != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(x.c) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (x.h + 2 * spec.pad_h < spec.kernel_h || x.w + 2 * spec.pad_w < spec.kernel_w) {
    throw ShapeError("conv2d: kernel " + std::to_string(spec.kernel_h) + "x" +
                     std::to_string(spec.kernel_w) + " larger than padded input " + x.str());
  }
  return {x.n, spec.out_channels, spec.out_size(x.h, spec.kernel_h, spec.pad_h),
          spec.out_size(x.w, spec.kernel_w, spec.pad_w)};
}

}  // namespace detail

// Generalized grouped 2D convolution with zero padding.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvSpec& spec, const Tensor4<T>& weight,
                  std::span<const T> bias) {
  const Dims od = detail::conv_out_dims(x.dims(), spec);
  require_same_dims(weight.dims(), spec.weight_dims(), "conv2d weight");
  if (!bias.empty() && bias.size() != spec.out_channels) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != out channels " +
                     std::to_string(spec.out_channels));
  }
  const Dims& xd = x.dims();
  const std::size_t cin_g = spec.in_channels / spec.groups;
  const std::size_t cout_g = spec.out_channels / spec.groups;
  const std::size_t s = spec.stride;
  Tensor4<T> out(od);

  for (std::size_t b = 0; b < xd.n; ++b) {
    for (std::size_t o = 0; o < od.c; ++o) {
      T* op = out.plane(b, o);
      if (!bias.empty()) std::fill(op, op + od.plane(), bias[o]);
      const std::size_t group = o / cout_g;
      for (std::size_t cl = 0; cl < cin_g; ++cl) {
        const T* xp = x.plane(b, group * cin_g + cl);
        for (std::size_t u = 0; u < spec.kernel_h; ++u) {
          const auto [i0, i1] = detail::valid_range(od.h, xd.h, s, u, spec.pad_h);
          for (std::size_t v = 0; v < spec.kernel_w; ++v) {
            const auto [j0, j1] = detail::valid_range(od.w, xd.w, s, v, spec.pad_w);
            const T wv = weight(o, cl, u, v);
            for (std::size_t i = i0; i < i1; ++i) {
              const std::ptrdiff_t base = detail::tap_offset(i * s + u - spec.pad_h, xd.w, v, spec.pad_w);
              T* orow = op + i * od.w;
              if (s == 1) {
                for (std::size_t j = j0; j < j1; ++j) orow[j] += wv * xp[base + j];
              } else {
                for (std::size_t j = j0; j < j1; ++j) orow[j] += wv * xp[base + j * s];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

// Accumulates input/weight/bias gradients of conv2d given the output gradient.
// Null targets are skipped.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, const ConvSpec& spec, const Tensor4<T>& weight,
                     const Tensor4<T>& grad_out, Tensor4<T>* grad_x, Tensor4<T>* grad_w,
                     std::span<T> grad_b) {
  const Dims& xd = x.dims();
  const Dims& od = grad_out.dims();
  const std::size_t cin_g = spec.in_channels / spec.groups;
  const std::size_t cout_g = spec.out_channels / spec.groups;
  const std::size_t s = spec.stride;

  for (std::size_t b = 0; b < xd.n; ++b) {
    for (std::size_t o = 0; o < od.c; ++o) {
      const T* gp = grad_out.plane(b, o);
      if (!grad_b.empty()) {
        T acc = T(0);
        for (std::size_t k = 0; k < od.plane(); ++k) acc += gp[k];
        grad_b[o] += acc;
      }
      const std::size_t group = o / cout_g;
      for (std::size_t cl = 0; cl < cin_g; ++cl) {
        const std::size_t c = group * cin_g + cl;
        const T* xp = x.plane(b, c);
        T* gxp = grad_x ? grad_x->plane(b, c) : nullptr;
        for (std::size_t u = 0; u < spec.kernel_h; ++u) {
          const auto [i0, i1] = detail::valid_range(od.h, xd.h, s, u, spec.pad_h);
          for (std::size_t v = 0; v < spec.kernel_w; ++v) {
            const auto [j0, j1] = detail::valid_range(od.w, xd.w, s, v, spec.pad_w);
            const T wv = weight(o, cl, u, v);
            T wacc = T(0);
            for (std::size_t i = i0; i < i1; ++i) {
              const std::ptrdiff_t base = detail::tap_offset(i * s + u - spec.pad_h, xd.w, v, spec.pad_w);
              const T* grow = gp + i * od.w;
              if (grad_w) {
                for (std::size_t j = j0; j < j1; ++j) wacc += grow[j] * xp[base + j * s];
              }
              if (gxp) {
                for (std::size_t j = j0; j < j1; ++j) gxp[base + j * s] += wv * grow[j];
              }
            }
            if (grad_w) (*grad_w)(o, cl, u, v) += wacc;
          }
        }
      }
    }
  }
}

// Per-pixel channel projection; weight dims (out, in, 1, 1).
template <typename T>
Tensor4<T> linear(const Tensor4<T>& x, const Tensor4<T>& weight, std::span<const T> bias) {
  const Dims& xd = x.dims();
  const std::size_t out_ch = weight.dims().n;
  if (weight.dims().c != xd.c || weight.dims().h != 1 || weight.dims().w != 1) {
    throw ShapeError("linear: weight " + weight.dims().str() + " incompatible with input " +
                     xd.str());
  }
  if (!bias.empty() && bias.size() != out_ch) {
    throw ShapeError("linear: bias length " + std::to_string(bias.size()) + " != " +
                     std::to_string(out_ch));
  }
  const std::size_t hw = xd.plane();
  Tensor4<T> out(Dims{xd.n, out_ch, xd.h, xd.w});
  for (std::size_t b = 0; b < xd.n; ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      T* op = out.plane(b, o);
      if (!bias.empty()) std::fill(op, op + hw, bias[o]);
      for (std::size_t c = 0; c < xd.c; ++c) {
        const T wv = weight[o * xd.c + c];
        const T* xp = x.plane(b, c);
        for (std::size_t k = 0; k < hw; ++k) op[k] += wv * xp[k];
      }
    }
  }
  return out;
}

template <typename T>
void linear_backward(const Tensor4<T>& x, const Tensor4<T>& weight, const Tensor4<T>& grad_out,
                     Tensor4<T>* grad_x, Tensor4<T>* grad_w, std::span<T> grad_b) {
  const Dims& xd = x.dims();
  const std::size_t out_ch = weight.dims().n;
  const std::size_t hw = xd.plane();
  for (std::size_t b = 0; b < xd.n; ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      const T* gp = grad_out.plane(b, o);
      if (!grad_b.empty()) {
        T acc = T(0);
        for (std::size_t k = 0; k < hw; ++k) acc += gp[k];
        grad_b[o] += acc;
      }
      for (std::size_t c = 0; c < xd.c; ++c) {
        const T* xp = x.plane(b, c);
        if (grad_w) {
          T acc = T(0);
          for (std::size_t k = 0; k < hw; ++k) acc += gp[k] * xp[k];
          (*grad_w)[o * xd.c + c] += acc;
        }
        if (grad_x) {
          const T wv = weight[o * xd.c + c];
          T* gxp = grad_x->plane(b, c);
          for (std::size_t k = 0; k < hw; ++k) gxp[k] += wv * gp[k];
        }
      }
    }
  }
}

template <typename T>
T gelu_scalar(T x) {
  return x * T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <typename T>
T gelu_derivative(T x) {
  const T cdf = T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T, typename F>
Tensor4<T> map(const Tensor4<T>& x, F&& f) {
  Tensor4<T> out(x.dims());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = f(x[k]);
  return out;
}

template <typename T>
Tensor4<T> gelu(const Tensor4<T>& x) {
  return map(x, [](T v) { return gelu_scalar(v); });
}

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
  return map(x, [](T v) { return sigmoid_scalar(v); });
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
  return map(x, [](T v) { return v > T(0) ? v : T(0); });
}

// Normalizes the channel vector at every (b, i, j) location.
template <typename T>
Tensor4<T> layernorm(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps) {
  const Dims& d = x.dims();
  if (gamma.size() != d.c || beta.size() != d.c) {
    throw ShapeError("layernorm: affine length must equal channel count " + std::to_string(d.c));
  }
  if (!(eps > T(0))) throw std::invalid_argument("layernorm: eps must be positive");
  const std::size_t hw = d.plane();
  const T inv_c = T(1) / static_cast<T>(d.c);
  Tensor4<T> out(d);
  std::vector<T> mean(hw), var(hw);
  for (std::size_t b = 0; b < d.n; ++b) {
    std::fill(mean.begin(), mean.end(), T(0));
    std::fill(var.begin(), var.end(), T(0));
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      for (std::size_t k = 0; k < hw; ++k) mean[k] += xp[k];
    }
    for (std::size_t k = 0; k < hw; ++k) mean[k] *= inv_c;
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      for (std::size_t k = 0; k < hw; ++k) {
        const T dv = xp[k] - mean[k];
        var[k] += dv * dv;
      }
    }
    for (std::size_t k = 0; k < hw; ++k) var[k] = T(1) / std::sqrt(var[k] * inv_c + eps);
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      T* op = out.plane(b, c);
      for (std::size_t k = 0; k < hw; ++k) op[k] = gamma[c] * ((xp[k] - mean[k]) * var[k]) + beta[c];
    }
  }
  return out;
}

template <typename T>
void layernorm_backward(const Tensor4<T>& x, std::span<const T> gamma, T eps,
                        const Tensor4<T>& grad_out, Tensor4<T>* grad_x, std::span<T> grad_gamma,
                        std::span<T> grad_beta) {
  const Dims& d = x.dims();
  const std::size_t hw = d.plane();
  const T inv_c = T(1) / static_cast<T>(d.c);
  std::vector<T> mean(hw), inv_std(hw), g_mean(hw), gx_mean(hw);
  for (std::size_t b = 0; b < d.n; ++b) {
    std::fill(mean.begin(), mean.end(), T(0));
    std::fill(inv_std.begin(), inv_std.end(), T(0));
    std::fill(g_mean.begin(), g_mean.end(), T(0));
    std::fill(gx_mean.begin(), gx_mean.end(), T(0));
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      for (std::size_t k = 0; k < hw; ++k) mean[k] += xp[k];
    }
    for (std::size_t k = 0; k < hw; ++k) mean[k] *= inv_c;
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      for (std::size_t k = 0; k < hw; ++k) {
        const T dv = xp[k] - mean[k];
        inv_std[k] += dv * dv;
      }
    }
    for (std::size_t k = 0; k < hw; ++k) inv_std[k] = T(1) / std::sqrt(inv_std[k] * inv_c + eps);

    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      const T* gp = grad_out.plane(b, c);
      T gg = T(0), gb = T(0);
      for (std::size_t k = 0; k < hw; ++k) {
        const T xhat = (xp[k] - mean[k]) * inv_std[k];
        gg += gp[k] * xhat;
        gb += gp[k];
        const T g = gp[k] * gamma[c];
        g_mean[k] += g;
        gx_mean[k] += g * xhat;
      }
      if (!grad_gamma.empty()) grad_gamma[c] += gg;
      if (!grad_beta.empty()) grad_beta[c] += gb;
    }
    if (!grad_x) continue;
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      const T* gp = grad_out.plane(b, c);
      T* gxp = grad_x->plane(b, c);
      for (std::size_t k = 0; k < hw; ++k) {
        const T xhat = (xp[k] - mean[k]) * inv_std[k];
        const T g = gp[k] * gamma[c];
        gxp[k] += inv_std[k] * (g - g_mean[k] * inv_c - xhat * gx_mean[k] * inv_c);
      }
    }
  }
}

template <typename T>
Tensor4<T> upsample_nearest(const Tensor4<T>& x, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  const Dims& d = x.dims();
  Tensor4<T> out(Dims{d.n, d.c, d.h * factor, d.w * factor});
  const std::size_t ow = d.w * factor;
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xp = x.plane(b, c);
      T* op = out.plane(b, c);
      for (std::size_t i = 0; i < d.h * factor; ++i) {
        const T* xrow = xp + (i / factor) * d.w;
        T* orow = op + i * ow;
        for (std::size_t j = 0; j < ow; ++j) orow[j] = xrow[j / factor];
      }
    }
  }
  return out;
}

template <typename T>
void upsample_nearest_backward(const Tensor4<T>& grad_out, std::size_t factor, Tensor4<T>& grad_x) {
  const Dims& d = grad_x.dims();
  const std::size_t ow = d.w * factor;
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* gp = grad_out.plane(b, c);
      T* gxp = grad_x.plane(b, c);
      for (std::size_t i = 0; i < d.h * factor; ++i) {
        T* gxrow = gxp + (i / factor) * d.w;
        const T* grow = gp + i * ow;
        for (std::size_t j = 0; j < ow; ++j) gxrow[j / factor] += grow[j];
      }
    }
  }
}

template <typename T>
Dims concat_dims(std::span<const Tensor4<T>* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no parts");
  Dims out = parts[0]->dims();
  out.c = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Dims& d = parts[p]->dims();
    if (d.n != out.n || d.h != out.h || d.w != out.w) {
      throw ShapeError("concat_channels: part " + std::to_string(p) + " has dims " + d.str() +
                       ", expected batch/spatial of " + parts[0]->dims().str());
    }
    out.c += d.c;
  }
  return out;
}

template <typename T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> parts) {
  const Dims od = concat_dims<T>(parts);
  Tensor4<T> out(od);
  for (std::size_t b = 0; b < od.n; ++b) {
    std::size_t c0 = 0;
    for (const Tensor4<T>* p : parts) {
      const std::size_t n = p->dims().c * od.plane();
      std::copy(p->plane(b, 0), p->plane(b, 0) + n, out.plane(b, c0));
      c0 += p->dims().c;
    }
  }
  return out;
}

template <typename T>
Tensor4<T> concat_channels(const std::vector<Tensor4<T>>& parts) {
  std::vector<const Tensor4<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_channels<T>(std::span<const Tensor4<T>* const>(ptrs));
}

}  // namespace ops
}  // namespace stripdet
