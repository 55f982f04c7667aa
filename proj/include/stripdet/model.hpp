#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "stripdet/anchors.hpp"
#include "stripdet/config.hpp"
#include "stripdet/geometry.hpp"
#include "stripdet/nn.hpp"
#include "stripdet/pillar.hpp"
#include "stripdet/strip_attention.hpp"

namespace stripdet {

// Depthwise 3x3 stride-2 followed by pointwise channel mixing.
template <typename T>
struct DownsampleParams {
  ConvParams<T> dw;
  ConvParams<T> pw;

  static ConvSpec dw_spec(std::size_t in) { return ConvSpec::depthwise(in, 3, 3, 2); }

  static DownsampleParams init(std::size_t in, std::size_t out, Rng& rng) {
    return {ConvParams<T>::init(dw_spec(in), rng), ConvParams<T>::init(ConvSpec::pointwise(in, out), rng)};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    dw.visit(prefix + ".dw", f);
    pw.visit(prefix + ".pw", f);
  }
};

template <typename T>
struct StageParams {
  DownsampleParams<T> down;
  std::vector<SABParams<T>> blocks;

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    down.visit(prefix + ".down", f);
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].visit(prefix + ".sab" + std::to_string(b), f);
  }
};

// One head branch: 3x3 conv, GeLU, 1x1 conv to the task channels.
template <typename T>
struct BranchParams {
  ConvParams<T> conv;
  ConvParams<T> out;

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    conv.visit(prefix + ".conv", f);
    out.visit(prefix + ".out", f);
  }
};

template <typename T>
struct DetectorParams {
  LinearParams<T> pfn;
  std::array<StageParams<T>, 3> stages;
  BranchParams<T> cls;
  BranchParams<T> box;
  BranchParams<T> dir;

  static DetectorParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    DetectorParams p;
    p.pfn = LinearParams<T>::init(kPillarFeatures, cfg.c0, rng);
    std::size_t in = cfg.c0;
    for (std::size_t s = 0; s < 3; ++s) {
      const std::size_t ch = cfg.stage_channels[s];
      p.stages[s].down = DownsampleParams<T>::init(in, ch, rng);
      for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
        p.stages[s].blocks.push_back(SABParams<T>::init(ch, cfg.k, rng));
      }
      in = ch;
    }
    const std::size_t fused = cfg.fused_channels();
    const std::size_t A = cfg.anchors_per_cell();
    auto branch = [&](std::size_t out_ch) {
      return BranchParams<T>{ConvParams<T>::init(ConvSpec::standard(fused, cfg.head_channels, 3), rng),
                             ConvParams<T>::init(ConvSpec::pointwise(cfg.head_channels, out_ch), rng)};
    };
    p.cls = branch(A * cfg.num_classes());
    p.box = branch(A * 7);
    p.dir = branch(A * 2);
    // Prior foreground probability of 0.01 per anchor and class.
    for (auto& v : p.cls.out.bias.mutable_value().values()) v = static_cast<T>(-std::log(99.0));
    return p;
  }

  // Correct shapes, all values zero; a target for assign_tensors.
  static DetectorParams zeros(const ModelConfig& cfg) {
    Rng rng(0);
    DetectorParams p = init(cfg, rng);
    p.visit([](const std::string&, const Var<T>& v) {
      Var<T> slot = v;
      for (auto& x : slot.mutable_value().values()) x = T(0);
    });
    return p;
  }

  template <typename F>
  void visit(F&& f) const {
    pfn.visit("pfn", f);
    for (std::size_t s = 0; s < 3; ++s) stages[s].visit("backbone.stage" + std::to_string(s), f);
    cls.visit("head.cls", f);
    box.visit("head.box", f);
    dir.visit("head.dir", f);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const Var<T>& v) { n += v.value().size(); });
    return n;
  }

  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    visit([&out](const std::string&, const Var<T>& v) { out.push_back(v); });
    return out;
  }
};

template <typename T>
Var<T> downsample(const Var<T>& x, const DownsampleParams<T>& p) {
  if (x.dims().c != p.dw.spec.in_channels) {
    throw ShapeError("downsample: input has " + std::to_string(x.dims().c) + " channels, expected " +
                     std::to_string(p.dw.spec.in_channels));
  }
  return nn::conv2d(nn::conv2d(x, p.dw), p.pw);
}

inline void require_backbone_grid(std::size_t h, std::size_t w) {
  if (h % 8 != 0 || w % 8 != 0) {
    throw std::invalid_argument("backbone: BEV dims " + std::to_string(h) + "x" + std::to_string(w) +
                                " must be divisible by 8");
  }
}

// Three stages at strides 2, 4, 8, fused at stride 2 by nearest upsampling and
// channel concatenation.
template <typename T>
Var<T> backbone_forward(const Var<T>& bev, const ModelConfig& cfg, const DetectorParams<T>& p) {
  if (bev.dims().c != cfg.c0) {
    throw ShapeError("backbone_forward: BEV has " + std::to_string(bev.dims().c) + " channels, expected " +
                     std::to_string(cfg.c0));
  }
  require_backbone_grid(bev.dims().h, bev.dims().w);
  std::vector<Var<T>> outputs;
  Var<T> x = bev;
  for (std::size_t s = 0; s < 3; ++s) {
    x = downsample(x, p.stages[s].down);
    for (const auto& block : p.stages[s].blocks) x = sab_forward(x, block);
    outputs.push_back(nn::upsample_nearest(x, std::size_t{1} << s));
  }
  return nn::concat_channels(outputs);
}

template <typename T>
struct HeadOutput {
  Var<T> cls;
  Var<T> box;
  Var<T> dir;
};

template <typename T>
Var<T> branch_forward(const Var<T>& feat, const BranchParams<T>& b) {
  return nn::conv2d(nn::gelu(nn::conv2d(feat, b.conv)), b.out);
}

template <typename T>
HeadOutput<T> head_forward(const Var<T>& feat, const ModelConfig& cfg, const DetectorParams<T>& p) {
  if (feat.dims().c != cfg.fused_channels()) {
    throw ShapeError("head_forward: features have " + std::to_string(feat.dims().c) + " channels, expected " +
                     std::to_string(cfg.fused_channels()));
  }
  return {branch_forward(feat, p.cls), branch_forward(feat, p.box), branch_forward(feat, p.dir)};
}

template <typename T>
Var<T> encode_bev(const PointCloud& pc, const ModelConfig& cfg, const DetectorParams<T>& p) {
  const PillarBatch<T> batch = pillarize<T>(pc, cfg.grid);
  return scatter_to_bev(pfn_forward(batch, p.pfn), batch.coords, cfg.grid);
}

template <typename T>
HeadOutput<T> detector_forward(const PointCloud& pc, const ModelConfig& cfg, const DetectorParams<T>& p) {
  require_backbone_grid(cfg.grid.height(), cfg.grid.width());
  return head_forward(backbone_forward(encode_bev(pc, cfg, p), cfg, p), cfg, p);
}

struct PostprocessStats {
  std::size_t candidates = 0;
  std::size_t dropped_nonfinite = 0;
};

// Scores every anchor/class, decodes candidates above the score threshold and
// runs per-class rotated NMS. Output is sorted by descending score.
template <typename T>
std::vector<Detection> postprocess(const HeadOutput<T>& head, const std::vector<Anchor>& anchors,
                                   const ModelConfig& cfg, PostprocessStats* stats = nullptr) {
  const std::size_t A = cfg.anchors_per_cell();
  const std::size_t ncls = cfg.num_classes();
  const Dims& cd = head.cls.dims();
  const std::size_t plane = cd.h * cd.w;
  if (anchors.size() != plane * A) throw ShapeError("postprocess: anchor count does not match head map");

  std::vector<std::vector<Detection>> per_class(ncls);
  PostprocessStats st;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const std::size_t cell = k / A, a = k % A;
    std::size_t best_c = 0;
    double best = -1;
    for (std::size_t c = 0; c < ncls; ++c) {
      const double s = ops::sigmoid_scalar(static_cast<double>(head.cls.value()[(a * ncls + c) * plane + cell]));
      if (s > best) {
        best = s;
        best_c = c;
      }
    }
    if (best < cfg.score_threshold) continue;
    ++st.candidates;
    BoxDeltas d{};
    bool finite = true;
    for (std::size_t j = 0; j < 7; ++j) {
      d[j] = static_cast<double>(head.box.value()[(a * 7 + j) * plane + cell]);
      finite = finite && std::isfinite(d[j]);
    }
    Box3D box = decode_box(d, anchors[k].box);
    if (!finite || !std::isfinite(box.w) || !std::isfinite(box.l) || !std::isfinite(box.h)) {
      ++st.dropped_nonfinite;
      continue;
    }
    const double l0 = static_cast<double>(head.dir.value()[(a * 2) * plane + cell]);
    const double l1 = static_cast<double>(head.dir.value()[(a * 2 + 1) * plane + cell]);
    box = apply_direction(box, l1 > l0 ? 1 : 0);
    per_class[best_c].push_back({box, best_c, best});
  }

  std::vector<Detection> out;
  for (auto& dets : per_class) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (dets.size() > cfg.pre_nms_max) dets.resize(cfg.pre_nms_max);
    for (const Detection& d : nms_bev(dets, cfg.nms_iou_threshold)) out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (out.size() > cfg.max_detections) out.resize(cfg.max_detections);
  if (stats) *stats = st;
  return out;
}

template <typename T>
std::vector<Detection> detect(const PointCloud& pc, const ModelConfig& cfg, const DetectorParams<T>& p,
                              PostprocessStats* stats = nullptr) {
  const HeadOutput<T> head = detector_forward(pc, cfg, p);
  return postprocess(head, generate_anchors(cfg), cfg, stats);
}

}  // namespace stripdet
