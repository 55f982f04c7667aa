#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stripdet/tensor.hpp"

namespace stripdet {

template <typename T>
struct Node {
  Tensor4<T> value;
  Tensor4<T> grad;  // allocated on first accumulation
  bool requires_grad = false;

  Tensor4<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor4<T>(value.dims());
    return grad;
  }

  bool has_grad() const { return grad.size() == value.size() && !value.empty(); }
};

// Handle to a value slot. Parameters are long-lived leaf Vars; op outputs are
// interior Vars that exist only while something references them.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor4<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  explicit operator bool() const { return static_cast<bool>(node_); }

  const Tensor4<T>& value() const { return node_->value; }
  Tensor4<T>& mutable_value() { return node_->value; }
  const Dims& dims() const { return node_->value.dims(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Zero-filled when nothing has been accumulated yet.
  Tensor4<T> grad() const {
    if (node_->has_grad()) return node_->grad;
    return Tensor4<T>(node_->value.dims());
  }
  void zero_grad() { node_->grad = Tensor4<T>(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Ordered record of differentiable operations. Recording happens only while a
// Tape::Recording guard is alive on the current thread.
template <typename T>
class Tape {
 public:
  struct Entry {
    std::shared_ptr<Node<T>> output;
    std::vector<std::shared_ptr<Node<T>>> inputs;
    std::function<void()> backward;
  };

  class Recording {
   public:
    explicit Recording(Tape& tape) : previous_(active_) { active_ = &tape; }
    ~Recording() { active_ = previous_; }
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Recording record() { return Recording(*this); }

  static Tape* active() { return active_; }

  void push(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse.
  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got dims " +
                                  loss.dims().str());
    }
    if (!loss.requires_grad()) return;
    loss.node()->grad_buffer()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output->has_grad()) it->backward();
    }
  }

 private:
  std::vector<Entry> entries_;
  static thread_local Tape* active_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> inputs) {
  for (const Var<T>* v : inputs) {
    if (*v && v->requires_grad()) return true;
  }
  return false;
}

// Wraps a forward result. When a tape is recording and an input needs a
// gradient, `make_backward(out_node)` supplies the rule to register.
template <typename T, typename MakeBackward>
Var<T> record(Tensor4<T> value, std::initializer_list<const Var<T>*> inputs,
              MakeBackward&& make_backward) {
  Tape<T>* tape = Tape<T>::active();
  const bool needs = tape != nullptr && any_requires_grad<T>(inputs);
  Var<T> out(std::move(value), needs);
  if (needs) {
    typename Tape<T>::Entry entry;
    entry.output = out.shared();
    for (const Var<T>* v : inputs) {
      if (*v) entry.inputs.push_back(v->shared());
    }
    entry.backward = make_backward(out.node());
    tape->push(std::move(entry));
  }
  return out;
}

template <typename T>
void accumulate(Node<T>* node, std::size_t k, T g) {
  node->grad_buffer()[k] += g;
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor4<T> out = elementwise(Elementwise::add, a.value(), b.value());
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return detail::record(std::move(out), {&a, &b}, [na, nb](Node<T>* o) {
    return [na, nb, o] {
      const Tensor4<T>& g = o->grad;
      if (na->requires_grad) {
        auto& ga = na->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
      }
      if (nb->requires_grad) {
        auto& gb = nb->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
      }
    };
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor4<T> out = elementwise(Elementwise::mul, a.value(), b.value());
  Node<T>* na = a.node();
  Node<T>* nb = b.node();
  return detail::record(std::move(out), {&a, &b}, [na, nb](Node<T>* o) {
    return [na, nb, o] {
      const Tensor4<T>& g = o->grad;
      if (na->requires_grad) {
        auto& ga = na->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * nb->value[k];
      }
      if (nb->requires_grad) {
        auto& gb = nb->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * na->value[k];
      }
    };
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T alpha) {
  Tensor4<T> out = a.value();
  for (auto& v : out.values()) v *= alpha;
  Node<T>* na = a.node();
  return detail::record(std::move(out), {&a}, [na, alpha](Node<T>* o) {
    return [na, o, alpha] {
      auto& ga = na->grad_buffer();
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += alpha * o->grad[k];
    };
  });
}

// Reduces every element to a 1x1x1x1 scalar.
template <typename T>
Var<T> sum(const Var<T>& a) {
  Tensor4<T> out(Dims{1, 1, 1, 1}, a.value().sum());
  Node<T>* na = a.node();
  return detail::record(std::move(out), {&a}, [na](Node<T>* o) {
    return [na, o] {
      const T g = o->grad[0];
      auto& ga = na->grad_buffer();
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g;
    };
  });
}

// Sum of a elementwise-weighted by a constant tensor.
template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor4<T>& weights) {
  require_same_dims(a.dims(), weights.dims(), "weighted_sum");
  T s = T(0);
  for (std::size_t k = 0; k < weights.size(); ++k) s += a.value()[k] * weights[k];
  Node<T>* na = a.node();
  return detail::record(Tensor4<T>(Dims{1, 1, 1, 1}, s), {&a}, [na, weights](Node<T>* o) {
    return [na, o, weights] {
      const T g = o->grad[0];
      auto& ga = na->grad_buffer();
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g * weights[k];
    };
  });
}

}  // namespace stripdet
