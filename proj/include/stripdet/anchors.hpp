#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "stripdet/config.hpp"
#include "stripdet/geometry.hpp"

namespace stripdet {

using BoxDeltas = std::array<double, 7>;  // dx, dy, dz, dw, dl, dh, dyaw

struct Anchor {
  Box3D box;
  std::size_t label = 0;  // class index
  std::size_t spec = 0;   // index into ModelConfig::anchors
};

struct LabeledBox {
  Box3D box;
  std::size_t label = 0;
};

// Anchors over the stride-2 head map, flat index (row * cols + col) * A + a
// with a enumerating (anchor spec, yaw) pairs in config order.
inline std::vector<Anchor> generate_anchors(const ModelConfig& cfg) {
  const std::size_t rows = cfg.grid.height() / 2;
  const std::size_t cols = cfg.grid.width() / 2;
  const double cell_x = 2.0 * cfg.grid.pillar_dx;
  const double cell_y = 2.0 * cfg.grid.pillar_dy;
  std::vector<Anchor> per_cell;
  for (std::size_t s = 0; s < cfg.anchors.size(); ++s) {
    const AnchorSpec& a = cfg.anchors[s];
    for (double yaw : a.yaws) {
      per_cell.push_back({Box3D{0, 0, a.z_center, a.width, a.length, a.height, yaw},
                          cfg.class_index(a.class_name), s});
    }
  }
  std::vector<Anchor> out;
  out.reserve(rows * cols * per_cell.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      for (Anchor a : per_cell) {
        a.box.x = cfg.grid.x_range.first + (static_cast<double>(j) + 0.5) * cell_x;
        a.box.y = cfg.grid.y_range.first + (static_cast<double>(i) + 0.5) * cell_y;
        out.push_back(a);
      }
    }
  }
  return out;
}

inline std::size_t dir_bin(double yaw) {
  const double a = wrap_angle(yaw);
  return (a >= 0.0 && a < std::numbers::pi) ? 0 : 1;
}

// Exact algebraic inverse of decode_box (for yaw differences in (-pi, pi]).
inline BoxDeltas encode_box(const Box3D& gt, const Box3D& anchor) {
  const double diag = std::hypot(anchor.w, anchor.l);
  return {(gt.x - anchor.x) / diag,
          (gt.y - anchor.y) / diag,
          (gt.z - anchor.z) / anchor.h,
          std::log(gt.w / anchor.w),
          std::log(gt.l / anchor.l),
          std::log(gt.h / anchor.h),
          wrap_angle(gt.yaw - anchor.yaw)};
}

inline Box3D decode_box(const BoxDeltas& d, const Box3D& anchor) {
  const double diag = std::hypot(anchor.w, anchor.l);
  return {anchor.x + d[0] * diag,
          anchor.y + d[1] * diag,
          anchor.z + d[2] * anchor.h,
          anchor.w * std::exp(d[3]),
          anchor.l * std::exp(d[4]),
          anchor.h * std::exp(d[5]),
          wrap_angle(anchor.yaw + d[6])};
}

// Flips the decoded heading by pi when it falls in the other direction bin.
inline Box3D apply_direction(Box3D box, std::size_t predicted_bin) {
  if (dir_bin(box.yaw) != predicted_bin) box.yaw = wrap_angle(box.yaw + std::numbers::pi);
  return box;
}

struct DecodeResult {
  std::vector<Box3D> boxes;
  std::vector<std::size_t> anchor_index;  // source anchor of each decoded box
  std::size_t dropped_nonfinite = 0;
};

// Decodes one delta vector per anchor. `dir_bins` may be empty (no flip).
inline DecodeResult decode_boxes(const std::vector<BoxDeltas>& deltas, const std::vector<Anchor>& anchors,
                                 const std::vector<std::size_t>& dir_bins = {}) {
  DecodeResult res;
  const std::size_t n = std::min(deltas.size(), anchors.size());
  for (std::size_t k = 0; k < n; ++k) {
    bool finite = true;
    for (double v : deltas[k]) finite = finite && std::isfinite(v);
    Box3D b = finite ? decode_box(deltas[k], anchors[k].box) : Box3D{};
    finite = finite && std::isfinite(b.w) && std::isfinite(b.l) && std::isfinite(b.h) && b.w > 0 &&
             b.l > 0 && b.h > 0;
    if (!finite) {
      ++res.dropped_nonfinite;
      continue;
    }
    if (!dir_bins.empty()) b = apply_direction(b, dir_bins[k]);
    res.boxes.push_back(b);
    res.anchor_index.push_back(k);
  }
  return res;
}

enum class AnchorState : signed char { ignored = -1, negative = 0, positive = 1 };

struct AnchorTargets {
  std::vector<AnchorState> state;
  std::vector<int> gt_index;  // matched gt for positives, -1 otherwise
  std::vector<BoxDeltas> deltas;
  std::vector<std::size_t> dir_bin;
  std::size_t num_positive = 0;
};

// Positive: IoU >= match_iou with a same-class gt, or the best anchor of some
// gt. Negative: max IoU < unmatch_iou. Everything else is ignored.
// Box targets use the gt heading shifted by a multiple of pi to lie within
// pi/2 of the anchor heading; the direction bin keeps the true heading.
inline AnchorTargets assign_targets(const std::vector<Anchor>& anchors, const std::vector<LabeledBox>& gts,
                                    const std::vector<AnchorSpec>& specs) {
  const std::size_t n = anchors.size();
  AnchorTargets t;
  t.state.assign(n, AnchorState::negative);
  t.gt_index.assign(n, -1);
  t.deltas.assign(n, BoxDeltas{});
  t.dir_bin.assign(n, 0);

  std::vector<double> best_iou(n, 0.0);
  std::vector<double> gt_best(gts.size(), 0.0);
  std::vector<std::size_t> gt_best_anchor(gts.size(), n);

  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].label != anchors[k].label) continue;
      const double iou = rotated_iou_bev(anchors[k].box, gts[g].box);
      if (iou > best_iou[k]) {
        best_iou[k] = iou;
        t.gt_index[k] = static_cast<int>(g);
      }
      if (iou > gt_best[g]) {
        gt_best[g] = iou;
        gt_best_anchor[g] = k;
      }
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    const AnchorSpec& spec = specs[anchors[k].spec];
    if (best_iou[k] >= spec.match_iou) {
      t.state[k] = AnchorState::positive;
    } else if (best_iou[k] < spec.unmatch_iou) {
      t.state[k] = AnchorState::negative;
      t.gt_index[k] = -1;
    } else {
      t.state[k] = AnchorState::ignored;
      t.gt_index[k] = -1;
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gt_best_anchor[g] == n) continue;
    t.state[gt_best_anchor[g]] = AnchorState::positive;
    t.gt_index[gt_best_anchor[g]] = static_cast<int>(g);
  }

  for (std::size_t k = 0; k < n; ++k) {
    if (t.state[k] != AnchorState::positive) continue;
    ++t.num_positive;
    Box3D gt = gts[static_cast<std::size_t>(t.gt_index[k])].box;
    t.dir_bin[k] = dir_bin(gt.yaw);
    double diff = wrap_angle(gt.yaw - anchors[k].box.yaw);
    if (diff >= std::numbers::pi / 2) diff -= std::numbers::pi;
    if (diff < -std::numbers::pi / 2) diff += std::numbers::pi;
    gt.yaw = anchors[k].box.yaw + diff;
    t.deltas[k] = encode_box(gt, anchors[k].box);
  }
  return t;
}

}  // namespace stripdet
