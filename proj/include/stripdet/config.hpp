#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stripdet {

using Range = std::pair<double, double>;

struct GridSpec {
  Range x_range{0.0, 69.12};
  Range y_range{-39.68, 39.68};
  Range z_range{-3.0, 1.0};
  double pillar_dx = 0.16;
  double pillar_dy = 0.16;
  std::size_t max_points_per_pillar = 32;
  std::size_t max_pillars = 12000;

  // BEV columns follow x, rows follow y.
  std::size_t width() const { return cells(x_range, pillar_dx, "x"); }
  std::size_t height() const { return cells(y_range, pillar_dy, "y"); }

  void validate() const {
    for (const Range* r : {&x_range, &y_range, &z_range}) {
      if (!(r->second > r->first)) throw std::invalid_argument("grid: empty range");
    }
    if (!(pillar_dx > 0.0) || !(pillar_dy > 0.0)) {
      throw std::invalid_argument("grid: pillar size must be positive");
    }
    width();
    height();
    if (max_points_per_pillar == 0 || max_pillars == 0) {
      throw std::invalid_argument("grid: pillar capacities must be positive");
    }
  }

 private:
  static std::size_t cells(const Range& r, double step, const char* axis) {
    const double n = (r.second - r.first) / step;
    const double rounded = std::round(n);
    if (rounded < 1.0 || std::abs(n - rounded) > 1e-6) {
      throw std::invalid_argument(std::string("grid: ") + axis + " span is not a whole number of pillars");
    }
    return static_cast<std::size_t>(rounded);
  }
};

struct AnchorSpec {
  std::string class_name;
  double width = 1.6;
  double length = 3.9;
  double height = 1.56;
  double z_center = -1.78;
  std::vector<double> yaws{0.0, std::numbers::pi / 2};
  double match_iou = 0.6;
  double unmatch_iou = 0.45;

  void validate() const {
    if (!(width > 0 && length > 0 && height > 0)) {
      throw std::invalid_argument("anchor " + class_name + ": sizes must be positive");
    }
    if (!(0.0 <= unmatch_iou && unmatch_iou < match_iou && match_iou <= 1.0)) {
      throw std::invalid_argument("anchor " + class_name + ": need 0 <= unmatch_iou < match_iou <= 1");
    }
    if (yaws.empty()) throw std::invalid_argument("anchor " + class_name + ": no yaws");
  }
};

inline std::vector<AnchorSpec> kitti_anchors() {
  return {
      {"Car", 1.6, 3.9, 1.56, -1.78, {0.0, std::numbers::pi / 2}, 0.6, 0.45},
      {"Pedestrian", 0.6, 0.8, 1.73, -0.6, {0.0, std::numbers::pi / 2}, 0.5, 0.35},
      {"Cyclist", 0.6, 1.76, 1.73, -0.6, {0.0, std::numbers::pi / 2}, 0.5, 0.35},
  };
}

struct LossWeights {
  double cls = 1.0;
  double bbox = 2.0;
  double dir = 0.2;
};

struct TrainSettings {
  double lr = 2e-3;
  double weight_decay = 0.01;
  double clip_norm = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t steps = 500;
};

struct ModelConfig {
  std::size_t c0 = 64;
  std::array<std::size_t, 3> stage_channels{32, 64, 128};
  std::array<std::size_t, 3> stage_depths{2, 2, 2};
  std::size_t k = 7;
  std::size_t head_channels = 16;
  GridSpec grid{};
  std::vector<AnchorSpec> anchors = kitti_anchors();
  LossWeights loss_weights{};
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_beta = 1.0;
  double score_threshold = 0.3;
  double nms_iou_threshold = 0.5;
  std::size_t pre_nms_max = 1000;
  std::size_t max_detections = 100;
  TrainSettings train{};

  std::vector<std::string> class_names() const {
    std::vector<std::string> names;
    for (const auto& a : anchors) {
      bool seen = false;
      for (const auto& n : names) seen = seen || n == a.class_name;
      if (!seen) names.push_back(a.class_name);
    }
    return names;
  }
  std::size_t num_classes() const { return class_names().size(); }

  std::size_t class_index(const std::string& name) const {
    const auto names = class_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw std::invalid_argument("unknown class " + name);
  }

  std::size_t anchors_per_cell() const {
    std::size_t a = 0;
    for (const auto& spec : anchors) a += spec.yaws.size();
    return a;
  }

  std::size_t fused_channels() const {
    return stage_channels[0] + stage_channels[1] + stage_channels[2];
  }

  void validate() const {
    if (c0 == 0 || head_channels == 0) throw std::invalid_argument("config: channel counts must be positive");
    for (std::size_t ch : stage_channels) {
      if (ch == 0) throw std::invalid_argument("config: stage channels must be positive");
    }
    if (k == 0 || k % 2 == 0) throw std::invalid_argument("config: K must be odd, got " + std::to_string(k));
    if (!(loss_weights.cls > 0 && loss_weights.bbox > 0 && loss_weights.dir > 0)) {
      throw std::invalid_argument("config: loss weights must be positive");
    }
    if (anchors.empty()) throw std::invalid_argument("config: no anchors");
    for (const auto& a : anchors) a.validate();
    grid.validate();
  }
};

// Widths/depths chosen so the analyzer reports ~0.64M parameters and ~9.8G
// MACs on the default 496x432 grid.
inline ModelConfig reference_config() { return ModelConfig{}; }

// Small single-class model on a 128x128 grid for the synthetic overfit run.
inline ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.c0 = 16;
  cfg.stage_channels = {16, 24, 32};
  cfg.stage_depths = {1, 1, 1};
  cfg.head_channels = 16;
  cfg.grid.x_range = {0.0, 40.96};
  cfg.grid.y_range = {-20.48, 20.48};
  cfg.grid.pillar_dx = 0.32;
  cfg.grid.pillar_dy = 0.32;
  cfg.grid.max_pillars = 4000;
  cfg.anchors = {kitti_anchors()[0]};
  return cfg;
}

}  // namespace stripdet
