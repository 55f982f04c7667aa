#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "stripdet/anchors.hpp"
#include "stripdet/autograd.hpp"
#include "stripdet/config.hpp"

namespace stripdet {

namespace loss_detail {

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Focal term and its derivative w.r.t. the logit for a 0/1 target.
inline void focal_term(double logit, int target, double alpha, double gamma, double& value, double& grad) {
  const double sign = target == 1 ? 1.0 : -1.0;
  const double alpha_t = target == 1 ? alpha : 1.0 - alpha;
  const double z = sign * logit;
  const double p = sigmoid(z);
  const double log_p = -softplus(-z);
  const double mod = std::pow(1.0 - p, gamma);
  value = -alpha_t * mod * log_p;
  grad = sign * alpha_t * mod * (gamma * p * log_p - (1.0 - p));
}

inline void smooth_l1_term(double d, double beta, double& value, double& grad) {
  const double ad = std::abs(d);
  if (ad < beta) {
    value = 0.5 * d * d / beta;
    grad = d / beta;
  } else {
    value = ad - 0.5 * beta;
    grad = d > 0 ? 1.0 : -1.0;
  }
}

}  // namespace loss_detail

// Sigmoid focal loss summed over entries with target 0/1 (entries with target
// -1 are ignored), divided by max(1, number of positive entries).
inline double focal_loss(std::span<const double> logits, std::span<const int> targets, double alpha,
                         double gamma) {
  if (logits.size() != targets.size()) throw std::invalid_argument("focal_loss: size mismatch");
  double total = 0;
  std::size_t positives = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (targets[k] < 0) continue;
    double v, g;
    loss_detail::focal_term(logits[k], targets[k], alpha, gamma, v, g);
    total += v;
    positives += targets[k] == 1 ? 1 : 0;
  }
  return total / static_cast<double>(std::max<std::size_t>(1, positives));
}

// Mean over elements of the smooth-L1 penalty of pred - target.
inline double smooth_l1(std::span<const double> pred, std::span<const double> target, double beta) {
  if (pred.size() != target.size()) throw std::invalid_argument("smooth_l1: size mismatch");
  if (!(beta > 0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  if (pred.empty()) return 0.0;
  double total = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    double v, g;
    loss_detail::smooth_l1_term(pred[k] - target[k], beta, v, g);
    total += v;
  }
  return total / static_cast<double>(pred.size());
}

// Mean two-bin softmax cross-entropy; logits are (l0, l1) pairs.
inline double direction_ce(std::span<const double> logits, std::span<const std::size_t> bins) {
  if (logits.size() != 2 * bins.size()) throw std::invalid_argument("direction_ce: size mismatch");
  if (bins.empty()) return 0.0;
  double total = 0;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double a = logits[2 * k], b = logits[2 * k + 1];
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    total += lse - (bins[k] == 0 ? a : b);
  }
  return total / static_cast<double>(bins.size());
}

inline double total_loss(double cls, double bbox, double dir, const LossWeights& w = {}) {
  return w.cls * cls + w.bbox * bbox + w.dir * dir;
}

struct LossBreakdown {
  double cls = 0;
  double bbox = 0;
  double dir = 0;
  double total = 0;
};

// Multi-task detection loss over head maps laid out as
// cls (1, A*ncls, R, C), box (1, A*7, R, C), dir (1, A*2, R, C), with anchors
// ordered as in generate_anchors. Returns the weighted total as a scalar Var.
template <typename T>
Var<T> detection_loss(const Var<T>& cls_map, const Var<T>& box_map, const Var<T>& dir_map,
                      const std::vector<Anchor>& anchors, const AnchorTargets& targets, const ModelConfig& cfg,
                      LossBreakdown* breakdown = nullptr) {
  const std::size_t A = cfg.anchors_per_cell();
  const std::size_t ncls = cfg.num_classes();
  const Dims& cd = cls_map.dims();
  const std::size_t plane = cd.h * cd.w;
  if (cd.c != A * ncls || box_map.dims().c != A * 7 || dir_map.dims().c != A * 2 ||
      anchors.size() != plane * A || targets.state.size() != anchors.size()) {
    throw ShapeError("detection_loss: head maps do not match anchor layout");
  }
  const double norm = static_cast<double>(std::max<std::size_t>(1, targets.num_positive));

  // Classification.
  Tensor4<T> gcls(cd);
  double cls_sum = 0;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (targets.state[k] == AnchorState::ignored) continue;
    const std::size_t cell = k / A, a = k % A;
    for (std::size_t c = 0; c < ncls; ++c) {
      const int tgt = targets.state[k] == AnchorState::positive && anchors[k].label == c ? 1 : 0;
      const std::size_t idx = (a * ncls + c) * plane + cell;
      double v, g;
      loss_detail::focal_term(static_cast<double>(cls_map.value()[idx]), tgt, cfg.focal_alpha, cfg.focal_gamma, v, g);
      cls_sum += v;
      gcls[idx] = static_cast<T>(g / norm);
    }
  }
  const double cls_loss = cls_sum / norm;

  // Box regression and direction over positives.
  Tensor4<T> gbox(box_map.dims());
  Tensor4<T> gdir(dir_map.dims());
  double box_sum = 0, dir_sum = 0;
  const double box_norm = static_cast<double>(std::max<std::size_t>(1, targets.num_positive * 7));
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (targets.state[k] != AnchorState::positive) continue;
    const std::size_t cell = k / A, a = k % A;
    for (std::size_t d = 0; d < 7; ++d) {
      const std::size_t idx = (a * 7 + d) * plane + cell;
      double v, g;
      loss_detail::smooth_l1_term(static_cast<double>(box_map.value()[idx]) - targets.deltas[k][d],
                                  cfg.smooth_l1_beta, v, g);
      box_sum += v;
      gbox[idx] = static_cast<T>(g / box_norm);
    }
    const std::size_t i0 = (a * 2) * plane + cell, i1 = (a * 2 + 1) * plane + cell;
    const double l0 = static_cast<double>(dir_map.value()[i0]);
    const double l1 = static_cast<double>(dir_map.value()[i1]);
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
    const std::size_t bin = targets.dir_bin[k];
    dir_sum += m + std::log(e0 + e1) - (bin == 0 ? l0 : l1);
    gdir[i0] = static_cast<T>((p0 - (bin == 0 ? 1.0 : 0.0)) / norm);
    gdir[i1] = static_cast<T>((p1 - (bin == 1 ? 1.0 : 0.0)) / norm);
  }
  const double box_loss = box_sum / box_norm;
  const double dir_loss = dir_sum / norm;
  const LossWeights& w = cfg.loss_weights;

  if (breakdown) *breakdown = {cls_loss, box_loss, dir_loss, total_loss(cls_loss, box_loss, dir_loss, w)};

  // Each component is linear in its map given the frozen per-element
  // derivatives, so the total is recorded as weighted inner products.
  auto component = [](const Var<T>& map, Tensor4<T> grad, double value, double weight) {
    for (auto& g : grad.values()) g *= static_cast<T>(weight);
    Node<T>* nm = map.node();
    return detail::record(Tensor4<T>(Dims{1, 1, 1, 1}, static_cast<T>(weight * value)), {&map},
                          [nm, grad = std::move(grad)](Node<T>* o) {
                            return [nm, grad, o] {
                              auto& g = nm->grad_buffer();
                              const T s = o->grad[0];
                              for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * grad[k];
                            };
                          });
  };
  return add(add(component(cls_map, std::move(gcls), cls_loss, w.cls),
                 component(box_map, std::move(gbox), box_loss, w.bbox)),
             component(dir_map, std::move(gdir), dir_loss, w.dir));
}

}  // namespace stripdet
