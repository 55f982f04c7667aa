#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "stripdet/nn.hpp"

namespace stripdet {

inline void require_odd_kernel(std::size_t k) {
  if (k == 0 || k % 2 == 0) {
    throw std::invalid_argument("strip kernel K must be odd, got " + std::to_string(k));
  }
}

// Strip Attention Module.
//   Fp = DW3x3(F0), Fh = DW1xK(Fp), Fv = DWKx1(Fh), A = PW(Fv)
//   out = GeLU(Linear(F0)) * A
template <typename T>
struct SAMParams {
  ConvParams<T> dw3x3;
  ConvParams<T> dw_1xk;
  ConvParams<T> dw_kx1;
  ConvParams<T> pw;
  LinearParams<T> proj;

  static ConvSpec strip_spec(std::size_t channels, std::size_t kh, std::size_t kw) {
    return ConvSpec::depthwise(channels, kh, kw);
  }

  static SAMParams zeros(std::size_t channels, std::size_t k) {
    require_odd_kernel(k);
    return {ConvParams<T>::zeros(ConvSpec::depthwise(channels, 3, 3)),
            ConvParams<T>::zeros(strip_spec(channels, 1, k)),
            ConvParams<T>::zeros(strip_spec(channels, k, 1)),
            ConvParams<T>::zeros(ConvSpec::pointwise(channels, channels)),
            LinearParams<T>::zeros(channels, channels)};
  }

  static SAMParams init(std::size_t channels, std::size_t k, Rng& rng) {
    require_odd_kernel(k);
    return {ConvParams<T>::init(ConvSpec::depthwise(channels, 3, 3), rng),
            ConvParams<T>::init(strip_spec(channels, 1, k), rng),
            ConvParams<T>::init(strip_spec(channels, k, 1), rng),
            ConvParams<T>::init(ConvSpec::pointwise(channels, channels), rng),
            LinearParams<T>::init(channels, channels, rng)};
  }

  std::size_t channels() const { return pw.spec.in_channels; }
  std::size_t kernel() const { return dw_1xk.spec.kernel_w; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    dw3x3.visit(prefix + ".dw3x3", f);
    dw_1xk.visit(prefix + ".dw_1xk", f);
    dw_kx1.visit(prefix + ".dw_kx1", f);
    pw.visit(prefix + ".pw", f);
    proj.visit(prefix + ".proj", f);
  }
};

// Strip Attention Block.
//   F1  = F + SAM(GeLU(Linear(F)))
//   out = F1 + Conv3x3(LayerNorm(F1))
template <typename T>
struct SABParams {
  LinearParams<T> pre_linear;
  SAMParams<T> sam;
  NormParams<T> norm;
  ConvParams<T> conv3x3;

  static SABParams zeros(std::size_t channels, std::size_t k) {
    return {LinearParams<T>::zeros(channels, channels), SAMParams<T>::zeros(channels, k),
            NormParams<T>::identity(channels),
            ConvParams<T>::zeros(ConvSpec::standard(channels, channels, 3))};
  }

  static SABParams init(std::size_t channels, std::size_t k, Rng& rng) {
    return {LinearParams<T>::init(channels, channels, rng), SAMParams<T>::init(channels, k, rng),
            NormParams<T>::identity(channels),
            ConvParams<T>::init(ConvSpec::standard(channels, channels, 3), rng)};
  }

  std::size_t channels() const { return conv3x3.spec.in_channels; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    pre_linear.visit(prefix + ".pre_linear", f);
    sam.visit(prefix + ".sam", f);
    norm.visit(prefix + ".norm", f);
    conv3x3.visit(prefix + ".conv3x3", f);
  }
};

template <typename T>
Var<T> sam_forward(const Var<T>& f0, const SAMParams<T>& p) {
  if (f0.dims().c != p.channels()) {
    throw ShapeError("sam_forward: input has " + std::to_string(f0.dims().c) +
                     " channels, module expects " + std::to_string(p.channels()));
  }
  const Var<T> fp = nn::conv2d(f0, p.dw3x3);
  const Var<T> fh = nn::conv2d(fp, p.dw_1xk);
  const Var<T> fv = nn::conv2d(fh, p.dw_kx1);
  const Var<T> attn = nn::conv2d(fv, p.pw);
  const Var<T> gate = nn::gelu(nn::linear(f0, p.proj));
  return mul(gate, attn);
}

template <typename T>
Var<T> sab_forward(const Var<T>& f, const SABParams<T>& p) {
  if (f.dims().c != p.channels()) {
    throw ShapeError("sab_forward: input has " + std::to_string(f.dims().c) +
                     " channels, block expects " + std::to_string(p.channels()));
  }
  const Var<T> f1 = add(f, sam_forward(nn::gelu(nn::linear(f, p.pre_linear)), p.sam));
  return add(f1, nn::conv2d(nn::layernorm(f1, p.norm), p.conv3x3));
}

}  // namespace stripdet
