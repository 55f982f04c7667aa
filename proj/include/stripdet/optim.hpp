#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "stripdet/autograd.hpp"
#include "stripdet/config.hpp"

namespace stripdet {

// One-cycle schedule: cosine ramp from peak/div to peak over the first
// `warmup` fraction of steps, then cosine decay to peak/final_div.
struct OneCycle {
  double peak = 2e-3;
  std::size_t total_steps = 1;
  double warmup = 0.3;
  double div = 25.0;
  double final_div = 1e4;

  double lr(std::size_t step) const {
    const double start = peak / div;
    const double end = start / final_div;
    const double up = std::max(1.0, warmup * static_cast<double>(total_steps));
    const double t = static_cast<double>(step);
    auto cosine = [](double from, double to, double frac) {
      return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    };
    if (t < up) return cosine(start, peak, t / up);
    const double rest = std::max(1.0, static_cast<double>(total_steps) - up);
    return cosine(peak, end, std::min(1.0, (t - up) / rest));
  }
};

// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<Var<T>>& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.node()->has_grad()) continue;
    for (T g : p.node()->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T s = static_cast<T>(max_norm / norm);
    for (const auto& p : params) {
      if (!p.node()->has_grad()) continue;
      for (T& g : p.node()->grad.values()) g *= s;
    }
  }
  return norm;
}

// AdamW with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Var<T>> params, const TrainSettings& s) : params_(std::move(params)), s_(s) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value().size(), 0.0);
      v_.emplace_back(p.value().size(), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Var<T>& p = params_[i];
      auto& w = p.mutable_value().values();
      const bool has = p.node()->has_grad();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double g = has ? static_cast<double>(p.node()->grad[k]) : 0.0;
        m_[i][k] = s_.beta1 * m_[i][k] + (1 - s_.beta1) * g;
        v_[i][k] = s_.beta2 * v_[i][k] + (1 - s_.beta2) * g * g;
        const double update = (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + eps_);
        const double decayed = static_cast<double>(w[k]) * (1.0 - lr * s_.weight_decay);
        w[k] = static_cast<T>(decayed - lr * update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const std::vector<Var<T>>& params() const { return params_; }

 private:
  std::vector<Var<T>> params_;
  TrainSettings s_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
  double eps_ = 1e-8;
};

}  // namespace stripdet
