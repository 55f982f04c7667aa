#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stripdet/autograd.hpp"
#include "stripdet/ops.hpp"
#include "stripdet/random.hpp"

namespace stripdet {

// Learnable tensors of one convolution. Bias is an empty Var when disabled.
template <typename T>
struct ConvParams {
  ConvSpec spec;
  Var<T> weight;
  Var<T> bias;

  static ConvParams zeros(const ConvSpec& spec) {
    spec.validate();
    ConvParams p;
    p.spec = spec;
    p.weight = Var<T>(Tensor4<T>(spec.weight_dims()), true);
    if (spec.bias) p.bias = Var<T>(Tensor4<T>(Dims{spec.out_channels, 1, 1, 1}), true);
    return p;
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  static ConvParams init(const ConvSpec& spec, Rng& rng) {
    ConvParams p = zeros(spec);
    const T bound = T(1) / std::sqrt(static_cast<T>(spec.weight_count() / spec.out_channels));
    fill_uniform(p.weight.mutable_value(), rng, -bound, bound);
    if (p.bias) fill_uniform(p.bias.mutable_value(), rng, -bound, bound);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    if (bias) f(prefix + ".bias", bias);
  }
};

// Channel projection: weight (out, in, 1, 1), bias (out).
template <typename T>
struct LinearParams {
  Var<T> weight;
  Var<T> bias;

  std::size_t in_channels() const { return weight.dims().c; }
  std::size_t out_channels() const { return weight.dims().n; }

  static LinearParams zeros(std::size_t in, std::size_t out) {
    LinearParams p;
    p.weight = Var<T>(Tensor4<T>(Dims{out, in, 1, 1}), true);
    p.bias = Var<T>(Tensor4<T>(Dims{out, 1, 1, 1}), true);
    return p;
  }

  static LinearParams init(std::size_t in, std::size_t out, Rng& rng) {
    LinearParams p = zeros(in, out);
    const T bound = T(1) / std::sqrt(static_cast<T>(in));
    fill_uniform(p.weight.mutable_value(), rng, -bound, bound);
    fill_uniform(p.bias.mutable_value(), rng, -bound, bound);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename T>
struct NormParams {
  Var<T> gamma;
  Var<T> beta;
  T eps = T(1e-6);

  static NormParams identity(std::size_t channels) {
    NormParams p;
    p.gamma = Var<T>(Tensor4<T>(Dims{channels, 1, 1, 1}, T(1)), true);
    p.beta = Var<T>(Tensor4<T>(Dims{channels, 1, 1, 1}), true);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

namespace nn {

namespace detail {
template <typename T>
std::span<const T> span_of(const Var<T>& v) {
  if (!v) return {};
  return v.value().data();
}

template <typename T>
std::span<T> grad_span(Node<T>* n) {
  if (n == nullptr || !n->requires_grad) return {};
  return n->grad_buffer().data();
}

template <typename T>
Tensor4<T>* grad_ptr(Node<T>* n) {
  if (n == nullptr || !n->requires_grad) return nullptr;
  return &n->grad_buffer();
}
}  // namespace detail

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvParams<T>& p) {
  Tensor4<T> out = ops::conv2d(x.value(), p.spec, p.weight.value(), detail::span_of(p.bias));
  Node<T>* nx = x.node();
  Node<T>* nw = p.weight.node();
  Node<T>* nb = p.bias ? p.bias.node() : nullptr;
  const ConvSpec spec = p.spec;
  return stripdet::detail::record(std::move(out), {&x, &p.weight, &p.bias}, [=](Node<T>* o) {
    return [=] {
      ops::conv2d_backward(nx->value, spec, nw->value, o->grad, detail::grad_ptr(nx),
                           detail::grad_ptr(nw), detail::grad_span(nb));
    };
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const LinearParams<T>& p) {
  Tensor4<T> out = ops::linear(x.value(), p.weight.value(), detail::span_of(p.bias));
  Node<T>* nx = x.node();
  Node<T>* nw = p.weight.node();
  Node<T>* nb = p.bias ? p.bias.node() : nullptr;
  return stripdet::detail::record(std::move(out), {&x, &p.weight, &p.bias}, [=](Node<T>* o) {
    return [=] {
      ops::linear_backward(nx->value, nw->value, o->grad, detail::grad_ptr(nx),
                           detail::grad_ptr(nw), detail::grad_span(nb));
    };
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Node<T>* nx = x.node();
  return stripdet::detail::record(ops::gelu(x.value()), {&x}, [nx](Node<T>* o) {
    return [nx, o] {
      auto& g = nx->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += o->grad[k] * ops::gelu_derivative(nx->value[k]);
    };
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Node<T>* nx = x.node();
  return stripdet::detail::record(ops::sigmoid(x.value()), {&x}, [nx](Node<T>* o) {
    return [nx, o] {
      auto& g = nx->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) {
        const T s = o->value[k];
        g[k] += o->grad[k] * s * (T(1) - s);
      }
    };
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Node<T>* nx = x.node();
  return stripdet::detail::record(ops::relu(x.value()), {&x}, [nx](Node<T>* o) {
    return [nx, o] {
      auto& g = nx->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (nx->value[k] > T(0)) g[k] += o->grad[k];
      }
    };
  });
}

template <typename T>
Var<T> layernorm(const Var<T>& x, const NormParams<T>& p) {
  Tensor4<T> out = ops::layernorm(x.value(), p.gamma.value().data(), p.beta.value().data(), p.eps);
  Node<T>* nx = x.node();
  Node<T>* ng = p.gamma.node();
  Node<T>* nb = p.beta.node();
  const T eps = p.eps;
  return stripdet::detail::record(std::move(out), {&x, &p.gamma, &p.beta}, [=](Node<T>* o) {
    return [=] {
      ops::layernorm_backward<T>(nx->value, ng->value.data(), eps, o->grad, detail::grad_ptr(nx),
                                 detail::grad_span(ng), detail::grad_span(nb));
    };
  });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  if (factor == 1) return x;
  Node<T>* nx = x.node();
  return stripdet::detail::record(ops::upsample_nearest(x.value(), factor), {&x},
                                  [nx, factor](Node<T>* o) {
                                    return [nx, o, factor] {
                                      ops::upsample_nearest_backward(o->grad, factor, nx->grad_buffer());
                                    };
                                  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  std::vector<const Tensor4<T>*> values;
  for (const auto& p : parts) values.push_back(&p.value());
  Tensor4<T> out = ops::concat_channels<T>(std::span<const Tensor4<T>* const>(values));

  Tape<T>* tape = Tape<T>::active();
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  Var<T> result(std::move(out), tape != nullptr && needs);
  if (!result.requires_grad()) return result;

  typename Tape<T>::Entry entry;
  entry.output = result.shared();
  std::vector<Node<T>*> nodes;
  for (const auto& p : parts) {
    entry.inputs.push_back(p.shared());
    nodes.push_back(p.node());
  }
  Node<T>* o = result.node();
  entry.backward = [nodes, o] {
    const Dims& od = o->value.dims();
    for (std::size_t b = 0; b < od.n; ++b) {
      std::size_t c0 = 0;
      for (Node<T>* n : nodes) {
        const std::size_t cnt = n->value.dims().c * od.plane();
        if (n->requires_grad) {
          T* g = n->grad_buffer().plane(b, 0);
          const T* src = o->grad.plane(b, c0);
          for (std::size_t k = 0; k < cnt; ++k) g[k] += src[k];
        }
        c0 += n->value.dims().c;
      }
    }
  };
  tape->push(std::move(entry));
  return result;
}

}  // namespace nn
}  // namespace stripdet
