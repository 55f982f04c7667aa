#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "stripdet/config.hpp"
#include "stripdet/nn.hpp"

namespace stripdet {

struct Point {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float intensity = 0.f;
  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline constexpr std::size_t kPillarFeatures = 9;

struct GridCoord {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

// Per-pillar point features (P x max_points x 9, zero-filled past counts[p]).
template <typename T>
struct PillarBatch {
  std::size_t max_points = 0;
  std::vector<T> features;
  std::vector<GridCoord> coords;
  std::vector<std::size_t> counts;

  std::size_t size() const { return coords.size(); }
  const T* point(std::size_t p, std::size_t m) const {
    return features.data() + (p * max_points + m) * kPillarFeatures;
  }
  T* point(std::size_t p, std::size_t m) { return features.data() + (p * max_points + m) * kPillarFeatures; }
};

// Buckets points into vertical pillars and builds the 9-dim augmented feature
// (x, y, z, i, offsets to pillar centroid, offsets to pillar center in x/y).
template <typename T>
PillarBatch<T> pillarize(const PointCloud& pc, const GridSpec& grid) {
  grid.validate();
  const std::size_t width = grid.width();
  const std::size_t height = grid.height();

  struct Bucket {
    GridCoord coord;
    std::size_t total = 0;
    std::vector<std::size_t> members;  // first max_points points in input order
  };
  std::vector<Bucket> buckets;
  std::unordered_map<std::uint64_t, std::size_t> lookup;

  for (std::size_t n = 0; n < pc.points.size(); ++n) {
    const Point& pt = pc.points[n];
    const double x = pt.x, y = pt.y, z = pt.z;
    if (!(x >= grid.x_range.first && x < grid.x_range.second)) continue;
    if (!(y >= grid.y_range.first && y < grid.y_range.second)) continue;
    if (!(z >= grid.z_range.first && z < grid.z_range.second)) continue;
    const auto col = static_cast<std::size_t>(std::floor((x - grid.x_range.first) / grid.pillar_dx));
    const auto row = static_cast<std::size_t>(std::floor((y - grid.y_range.first) / grid.pillar_dy));
    if (col >= width || row >= height) continue;
    const std::uint64_t key = static_cast<std::uint64_t>(row) * width + col;
    auto [it, inserted] = lookup.try_emplace(key, buckets.size());
    if (inserted) {
      buckets.push_back({GridCoord{static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col)}, 0, {}});
    }
    Bucket& b = buckets[it->second];
    ++b.total;
    if (b.members.size() < grid.max_points_per_pillar) b.members.push_back(n);
  }

  std::vector<std::size_t> keep(buckets.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  if (keep.size() > grid.max_pillars) {
    std::stable_sort(keep.begin(), keep.end(),
                     [&](std::size_t a, std::size_t b) { return buckets[a].total > buckets[b].total; });
    keep.resize(grid.max_pillars);
    std::sort(keep.begin(), keep.end());
  }

  PillarBatch<T> batch;
  batch.max_points = grid.max_points_per_pillar;
  batch.features.assign(keep.size() * batch.max_points * kPillarFeatures, T(0));
  for (std::size_t p = 0; p < keep.size(); ++p) {
    const Bucket& b = buckets[keep[p]];
    batch.coords.push_back(b.coord);
    batch.counts.push_back(b.members.size());

    double cx = 0, cy = 0, cz = 0;
    for (std::size_t n : b.members) {
      cx += pc.points[n].x;
      cy += pc.points[n].y;
      cz += pc.points[n].z;
    }
    const double inv = 1.0 / static_cast<double>(b.members.size());
    cx *= inv;
    cy *= inv;
    cz *= inv;
    const double px = grid.x_range.first + (b.coord.col + 0.5) * grid.pillar_dx;
    const double py = grid.y_range.first + (b.coord.row + 0.5) * grid.pillar_dy;

    for (std::size_t m = 0; m < b.members.size(); ++m) {
      const Point& pt = pc.points[b.members[m]];
      T* f = batch.point(p, m);
      f[0] = static_cast<T>(pt.x);
      f[1] = static_cast<T>(pt.y);
      f[2] = static_cast<T>(pt.z);
      f[3] = static_cast<T>(pt.intensity);
      f[4] = static_cast<T>(pt.x - cx);
      f[5] = static_cast<T>(pt.y - cy);
      f[6] = static_cast<T>(pt.z - cz);
      f[7] = static_cast<T>(pt.x - px);
      f[8] = static_cast<T>(pt.y - py);
    }
  }
  return batch;
}

// Per point Linear(9 -> C0) + ReLU, then max over the pillar's real points.
// Output dims (P, C0, 1, 1).
template <typename T>
Var<T> pfn_forward(const PillarBatch<T>& batch, const LinearParams<T>& p) {
  const std::size_t c0 = p.out_channels();
  if (p.in_channels() != kPillarFeatures) {
    throw ShapeError("pfn_forward: weight expects " + std::to_string(p.in_channels()) +
                     " inputs, pillar features have " + std::to_string(kPillarFeatures));
  }
  const std::size_t num = batch.size();
  const Tensor4<T>& w = p.weight.value();
  const Tensor4<T>& bias = p.bias.value();
  Tensor4<T> out(Dims{num, c0, 1, 1});
  std::vector<std::uint32_t> argmax(num * c0, 0);

  for (std::size_t q = 0; q < num; ++q) {
    if (batch.counts[q] == 0) {
      throw std::invalid_argument("pfn_forward: pillar " + std::to_string(q) + " has no points");
    }
    for (std::size_t m = 0; m < batch.counts[q]; ++m) {
      const T* f = batch.point(q, m);
      for (std::size_t c = 0; c < c0; ++c) {
        T acc = bias[c];
        for (std::size_t d = 0; d < kPillarFeatures; ++d) acc += w[c * kPillarFeatures + d] * f[d];
        acc = acc > T(0) ? acc : T(0);
        if (m == 0 || acc > out[q * c0 + c]) {
          out[q * c0 + c] = acc;
          argmax[q * c0 + c] = static_cast<std::uint32_t>(m);
        }
      }
    }
  }

  Node<T>* nw = p.weight.node();
  Node<T>* nb = p.bias.node();
  return detail::record(std::move(out), {&p.weight, &p.bias},
                        [nw, nb, &batch, argmax = std::move(argmax), c0](Node<T>* o) {
    auto src = std::make_shared<const PillarBatch<T>>(batch);
    return [nw, nb, src, argmax, c0, o] {
      for (std::size_t q = 0; q < src->size(); ++q) {
        for (std::size_t c = 0; c < c0; ++c) {
          const std::size_t k = q * c0 + c;
          if (!(o->value[k] > T(0))) continue;
          const T g = o->grad[k];
          const T* f = src->point(q, argmax[k]);
          if (nw->requires_grad) {
            auto& gw = nw->grad_buffer();
            for (std::size_t d = 0; d < kPillarFeatures; ++d) gw[c * kPillarFeatures + d] += g * f[d];
          }
          if (nb->requires_grad) nb->grad_buffer()[c] += g;
        }
      }
    };
  });
}

// Places pillar features (P, C, 1, 1) into a (1, C, H, W) BEV map.
template <typename T>
Var<T> scatter_to_bev(const Var<T>& feats, const std::vector<GridCoord>& coords, const GridSpec& grid) {
  const std::size_t height = grid.height();
  const std::size_t width = grid.width();
  const Dims& fd = feats.dims();
  if (fd.n != coords.size()) {
    throw ShapeError("scatter_to_bev: " + std::to_string(fd.n) + " feature rows for " +
                     std::to_string(coords.size()) + " coords");
  }
  const std::size_t ch = fd.c;
  std::vector<std::size_t> cells(coords.size());
  for (std::size_t q = 0; q < coords.size(); ++q) {
    if (coords[q].row >= height || coords[q].col >= width) {
      throw std::out_of_range("scatter_to_bev: coord (" + std::to_string(coords[q].row) + "," +
                              std::to_string(coords[q].col) + ") outside " + std::to_string(height) +
                              "x" + std::to_string(width) + " grid");
    }
    cells[q] = coords[q].row * width + coords[q].col;
  }
  Tensor4<T> out(Dims{1, ch, height, width});
  const std::size_t hw = height * width;
  for (std::size_t q = 0; q < cells.size(); ++q) {
    for (std::size_t c = 0; c < ch; ++c) out[c * hw + cells[q]] = feats.value()[q * ch + c];
  }
  Node<T>* nf = feats.node();
  return detail::record(std::move(out), {&feats}, [nf, cells = std::move(cells), ch, hw](Node<T>* o) {
    return [nf, cells, ch, hw, o] {
      auto& g = nf->grad_buffer();
      for (std::size_t q = 0; q < cells.size(); ++q) {
        for (std::size_t c = 0; c < ch; ++c) g[q * ch + c] += o->grad[c * hw + cells[q]];
      }
    };
  });
}

}  // namespace stripdet
