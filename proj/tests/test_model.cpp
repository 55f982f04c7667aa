#include <gtest/gtest.h>

#include "stripdet/analyzer.hpp"
#include "stripdet/gradcheck.hpp"
#include "stripdet/model.hpp"
#include "stripdet/synth.hpp"

using namespace stripdet;

namespace {

ModelConfig small_config(double x_span, double y_span) {
  ModelConfig cfg = toy_config();
  cfg.c0 = 8;
  cfg.stage_channels = {8, 8, 16};
  cfg.head_channels = 8;
  cfg.k = 3;
  cfg.grid.x_range = {0.0, x_span};
  cfg.grid.y_range = {-0.5 * y_span, 0.5 * y_span};
  return cfg;
}

}  // namespace

TEST(Downsample, ShapeAndComposition) {
  Rng rng(1);
  const auto p = DownsampleParams<double>::init(1, 3, rng);
  const Var<double> x(random_tensor<double>(Dims{1, 1, 4, 4}, rng), false);
  const auto y = downsample(x, p);
  EXPECT_EQ(y.dims(), (Dims{1, 3, 2, 2}));
  EXPECT_EQ(y.value(), nn::conv2d(nn::conv2d(x, p.dw), p.pw).value());
  std::size_t n = 0;
  p.visit("d", [&n](const std::string&, const Var<double>& v) { n += v.value().size(); });
  EXPECT_EQ(n, 1u * 9 + 1 + 1 * 3 + 3);
  const auto q = DownsampleParams<double>::init(16, 24, rng);
  std::size_t m = 0;
  q.visit("d", [&m](const std::string&, const Var<double>& v) { m += v.value().size(); });
  EXPECT_EQ(m, 16u * 9 + 16 + 16 * 24 + 24);
  EXPECT_THROW(downsample(x, q), ShapeError);
}

TEST(Backbone, ReferenceShapeOnDefaultGrid) {
  const ModelConfig cfg = reference_config();
  Rng rng(2);
  const auto p = DetectorParams<float>::init(cfg, rng);
  const Var<float> bev(Tensor4<float>(Dims{1, cfg.c0, 496, 432}, 0.f), false);
  const auto feat = backbone_forward(bev, cfg, p);
  EXPECT_EQ(feat.dims(), (Dims{1, 32 + 64 + 128, 248, 216}));
  EXPECT_TRUE(feat.value().all_finite());
  // Zero input: biases still reach the output.
  EXPECT_NE(feat.value().sum(), 0.f);
}

TEST(Backbone, RejectsGridNotDivisibleByEight) {
  const ModelConfig cfg = small_config(5.12, 5.12);
  Rng rng(3);
  const auto p = DetectorParams<double>::init(cfg, rng);
  const Var<double> bev(Tensor4<double>(Dims{1, cfg.c0, 12, 16}), false);
  EXPECT_THROW(backbone_forward(bev, cfg, p), std::invalid_argument);
}

TEST(Backbone, ExtraBlocksCostTheirClosedForm) {
  ModelConfig cfg = small_config(5.12, 5.12);
  Rng rng(4);
  const std::size_t base = DetectorParams<float>::init(cfg, rng).scalar_count();
  ModelConfig deeper = cfg;
  for (auto& d : deeper.stage_depths) d *= 2;
  const std::size_t more = DetectorParams<float>::init(deeper, rng).scalar_count();
  std::uint64_t added = 0;
  for (std::size_t s = 0; s < 3; ++s) added += cfg.stage_depths[s] * sab_param_count(cfg.stage_channels[s], cfg.k);
  EXPECT_EQ(more - base, added);
}

TEST(Head, ChannelCounts) {
  ModelConfig cfg = small_config(5.12, 5.12);
  cfg.anchors = kitti_anchors();  // 3 classes x 2 yaws: A = 6
  Rng rng(5);
  const auto p = DetectorParams<double>::init(cfg, rng);
  const Var<double> feat(random_tensor<double>(Dims{1, cfg.fused_channels(), 5, 7}, rng), false);
  const auto h = head_forward(feat, cfg, p);
  EXPECT_EQ(h.cls.dims(), (Dims{1, 18, 5, 7}));
  EXPECT_EQ(h.box.dims(), (Dims{1, 42, 5, 7}));
  EXPECT_EQ(h.dir.dims(), (Dims{1, 12, 5, 7}));

  ModelConfig one = small_config(5.12, 5.12);  // 1 class x 2 yaws: A = 2
  const auto q = DetectorParams<double>::init(one, rng);
  const auto g = head_forward(feat, one, q);
  EXPECT_EQ(g.cls.dims().c, 2u);
  EXPECT_EQ(g.box.dims().c, 14u);
  EXPECT_EQ(g.dir.dims().c, 4u);
  EXPECT_THROW(head_forward(Var<double>(Tensor4<double>(Dims{1, 3, 5, 7}), false), cfg, p), ShapeError);
}

TEST(Head, GradcheckThroughAllBranches) {
  ModelConfig cfg = small_config(5.12, 5.12);
  Rng rng(6);
  const auto p = DetectorParams<double>::init(cfg, rng);
  const auto wc = random_tensor<double>(Dims{1, 2, 4, 4}, rng);
  const auto wb = random_tensor<double>(Dims{1, 14, 4, 4}, rng);
  const auto wd = random_tensor<double>(Dims{1, 4, 4, 4}, rng);
  auto f = [&](const Var<double>& x) {
    const auto h = head_forward(x, cfg, p);
    return add(add(weighted_sum(h.cls, wc), weighted_sum(h.box, wb)), weighted_sum(h.dir, wd));
  };
  EXPECT_LE(gradcheck(f, random_tensor<double>(Dims{1, cfg.fused_channels(), 4, 4}, rng)), 1e-5);
}

TEST(Pipeline, HeadMapsAreHalfTheGridForSeveralGrids) {
  for (auto [xs, ys] : {std::pair{10.24, 10.24}, std::pair{15.36, 7.68}, std::pair{5.12, 12.8}}) {
    const ModelConfig cfg = small_config(xs, ys);
    Rng rng(7);
    const auto p = DetectorParams<float>::init(cfg, rng);
    const auto scene = synth_scene(3, 1, cfg.grid, SynthOptions{200, 100, -2.56, 0.1});
    const auto h = detector_forward(scene.cloud, cfg, p);
    const std::size_t H = cfg.grid.height(), W = cfg.grid.width();
    EXPECT_EQ(h.cls.dims(), (Dims{1, 2, H / 2, W / 2}));
    EXPECT_EQ(h.box.dims(), (Dims{1, 14, H / 2, W / 2}));
    EXPECT_EQ(h.dir.dims(), (Dims{1, 4, H / 2, W / 2}));
  }
}

TEST(Pipeline, DetectIsDeterministicAndSorted) {
  ModelConfig cfg = small_config(10.24, 10.24);
  cfg.score_threshold = 0.0;
  cfg.max_detections = 50;
  Rng rng(8);
  const auto p = DetectorParams<float>::init(cfg, rng);
  const auto scene = synth_scene(4, 1, cfg.grid, SynthOptions{200, 100, -2.56, 0.1});
  const auto a = detect(scene.cloud, cfg, p);
  const auto b = detect(scene.cloud, cfg, p);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_LE(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].score, b[i].score);
    EXPECT_EQ(a[i].box.x, b[i].box.x);
    if (i) EXPECT_GE(a[i - 1].score, a[i].score);
  }
}

TEST(Pipeline, EmptyCloudHasNoConfidentDetections) {
  const ModelConfig cfg = small_config(10.24, 10.24);
  Rng rng(9);
  const auto p = DetectorParams<float>::init(cfg, rng);
  // Prior-initialised class bias puts every score near 0.01.
  EXPECT_TRUE(detect(PointCloud{}, cfg, p).empty());
}

TEST(Params, ZerosHaveInitShapesAndNames) {
  const ModelConfig cfg = small_config(5.12, 5.12);
  Rng rng(10);
  const auto a = DetectorParams<float>::init(cfg, rng);
  const auto z = DetectorParams<float>::zeros(cfg);
  std::vector<std::pair<std::string, Dims>> na, nz;
  a.visit([&](const std::string& n, const Var<float>& v) { na.push_back({n, v.dims()}); });
  z.visit([&](const std::string& n, const Var<float>& v) {
    nz.push_back({n, v.dims()});
    EXPECT_EQ(v.value().sum(), 0.f) << n;
  });
  ASSERT_EQ(na.size(), nz.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    EXPECT_EQ(na[i].first, nz[i].first);
    EXPECT_EQ(na[i].second, nz[i].second);
  }
  EXPECT_EQ(na.front().first, "pfn.weight");
  EXPECT_EQ(na.back().first, "head.dir.out.bias");
}
