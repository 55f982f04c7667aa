#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stripdet/config.hpp"
#include "stripdet/geometry.hpp"
#include "stripdet/pillar.hpp"
#include "stripdet/random.hpp"

namespace stripdet {

struct SyntheticScene {
  PointCloud cloud;
  std::vector<Box3D> boxes;
};

struct SynthOptions {
  std::size_t points_per_box = 200;
  std::size_t clutter_points = 300;
  double ground_z = -2.56;
  double margin = 2.0;  // keep boxes this far (m) inside the grid edges
};

// Yawed car-sized boxes with surface-sampled points (top and four sides) plus
// uniform ground clutter. Fully determined by (seed, n_boxes, grid).
inline SyntheticScene synth_scene(std::uint64_t seed, std::size_t n_boxes, const GridSpec& grid,
                                  const SynthOptions& opt = {}) {
  if (n_boxes == 0) throw std::invalid_argument("synth_scene: need at least one box");
  Rng rng = Rng(seed).split("synth");
  SyntheticScene scene;

  constexpr double kWidth = 1.6, kLength = 3.9, kHeight = 1.56;
  const double reach = 0.5 * std::hypot(kWidth, kLength) + opt.margin;
  const double x0 = grid.x_range.first + reach, x1 = grid.x_range.second - reach;
  const double y0 = grid.y_range.first + reach, y1 = grid.y_range.second - reach;
  if (!(x1 > x0 && y1 > y0)) throw std::invalid_argument("synth_scene: grid too small for a car");

  std::size_t attempts = 0;
  while (scene.boxes.size() < n_boxes) {
    if (++attempts > 10000) throw std::runtime_error("synth_scene: could not place non-overlapping boxes");
    Box3D b;
    b.w = kWidth * rng.uniform(0.95, 1.05);
    b.l = kLength * rng.uniform(0.95, 1.05);
    b.h = kHeight * rng.uniform(0.95, 1.05);
    b.x = rng.uniform(x0, x1);
    b.y = rng.uniform(y0, y1);
    b.z = opt.ground_z + 0.5 * b.h;
    b.yaw = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    bool clear = true;
    for (const Box3D& other : scene.boxes) {
      clear = clear && std::hypot(b.x - other.x, b.y - other.y) > std::hypot(b.w, b.l) + 1.0;
    }
    if (clear) scene.boxes.push_back(b);
  }

  for (const Box3D& b : scene.boxes) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    // Faces: top, +l, -l, +w, -w. Sampled proportional to area.
    const double inset = 0.01;
    const double hl = 0.5 * b.l - inset, hw = 0.5 * b.w - inset;
    const double areas[5] = {b.l * b.w, b.w * b.h, b.w * b.h, b.l * b.h, b.l * b.h};
    double total = 0;
    for (double a : areas) total += a;
    for (std::size_t n = 0; n < opt.points_per_box; ++n) {
      double pick = rng.uniform(0, total);
      std::size_t face = 0;
      while (face < 4 && pick > areas[face]) pick -= areas[face++];
      const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
      const double hz = rng.uniform(0.0, 1.0) * b.h;
      double along = 0, across = 0, z = opt.ground_z;
      switch (face) {
        case 0: along = u * hl; across = v * hw; z += b.h; break;
        case 1: along = hl; across = v * hw; z += hz; break;
        case 2: along = -hl; across = v * hw; z += hz; break;
        case 3: along = u * hl; across = hw; z += hz; break;
        default: along = u * hl; across = -hw; z += hz; break;
      }
      const double px = b.x + c * along - s * across;
      const double py = b.y + s * along + c * across;
      scene.cloud.points.push_back({static_cast<float>(px), static_cast<float>(py), static_cast<float>(z),
                                    static_cast<float>(rng.uniform(0.2, 0.9))});
    }
  }

  for (std::size_t n = 0; n < opt.clutter_points; ++n) {
    const double px = rng.uniform(grid.x_range.first, grid.x_range.second);
    const double py = rng.uniform(grid.y_range.first, grid.y_range.second);
    const double pz = opt.ground_z + rng.uniform(-0.05, 0.05);
    scene.cloud.points.push_back({static_cast<float>(px), static_cast<float>(py), static_cast<float>(pz),
                                  static_cast<float>(rng.uniform(0.0, 0.3))});
  }
  return scene;
}

}  // namespace stripdet
