#include <gtest/gtest.h>

#include <cmath>

#include "stripdet/optim.hpp"
#include "stripdet/synth.hpp"

using namespace stripdet;

namespace {

bool inside_footprint(const Point& p, const Box3D& b, double slack) {
  const double dx = p.x - b.x, dy = p.y - b.y;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double along = c * dx + s * dy, across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * b.l + slack && std::abs(across) <= 0.5 * b.w + slack;
}

}  // namespace

TEST(Synth, DeterministicPerSeed) {
  const GridSpec grid = toy_config().grid;
  const auto a = synth_scene(7, 2, grid);
  const auto b = synth_scene(7, 2, grid);
  const auto c = synth_scene(8, 2, grid);
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_NE(a.cloud.points, c.cloud.points);
}

TEST(Synth, BoxesInsideGridWithPoints) {
  const GridSpec grid = toy_config().grid;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = synth_scene(seed, 3, grid);
    ASSERT_EQ(scene.boxes.size(), 3u);
    EXPECT_EQ(scene.cloud.size(), 3u * 200 + 300);
    for (const Box3D& b : scene.boxes) {
      EXPECT_GT(b.x, grid.x_range.first + 2.0);
      EXPECT_LT(b.x, grid.x_range.second - 2.0);
      EXPECT_GT(b.y, grid.y_range.first + 2.0);
      EXPECT_LT(b.y, grid.y_range.second - 2.0);
      std::size_t n = 0;
      for (const Point& p : scene.cloud.points) n += inside_footprint(p, b, 0.0) && p.z > -2.4;
      EXPECT_GE(n, 150u);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) EXPECT_EQ(rotated_iou_bev(scene.boxes[i], scene.boxes[j]), 0.0);
    }
  }
}

TEST(Synth, RejectsImpossibleRequests) {
  GridSpec grid = toy_config().grid;
  EXPECT_THROW(synth_scene(0, 0, grid), std::invalid_argument);
  grid.x_range = {0.0, 3.2};
  EXPECT_THROW(synth_scene(0, 1, grid), std::invalid_argument);
}

TEST(OneCycle, Shape) {
  const OneCycle s{1e-2, 100};
  EXPECT_NEAR(s.lr(0), 1e-2 / 25, 1e-15);
  EXPECT_NEAR(s.lr(30), 1e-2, 1e-15);
  EXPECT_NEAR(s.lr(100), 1e-2 / 25 / 1e4, 1e-15);
  for (std::size_t t = 1; t <= 30; ++t) EXPECT_GT(s.lr(t), s.lr(t - 1));
  for (std::size_t t = 31; t <= 100; ++t) EXPECT_LT(s.lr(t), s.lr(t - 1));
}

TEST(ClipGradNorm, ScalesToMax) {
  Var<double> a(Tensor4<double>(Dims{1, 1, 1, 2}, std::vector<double>{0, 0}), true);
  Var<double> b(Tensor4<double>(Dims{1, 1, 1, 1}, std::vector<double>{0}), true);
  Tape<double> tape;
  Var<double> loss;
  {
    auto rec = tape.record();
    loss = add(weighted_sum(a, Tensor4<double>(Dims{1, 1, 1, 2}, std::vector<double>{3, 0})),
               weighted_sum(b, Tensor4<double>(Dims{1, 1, 1, 1}, std::vector<double>{4})));
  }
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({a, b}, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.node()->grad[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>({a, b}, 1.0), 5.0);
  EXPECT_NEAR(a.node()->grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.node()->grad[0], 0.8, 1e-15);
}

TEST(AdamW, MinimizesQuadratic) {
  Var<double> x(Tensor4<double>(Dims{1, 1, 1, 3}, std::vector<double>{2, -1, 0.5}), true);
  const Tensor4<double> target(Dims{1, 1, 1, 3}, std::vector<double>{0.3, 0.1, -0.2});
  TrainSettings s;
  s.weight_decay = 0;
  AdamW<double> opt({x}, s);
  for (int step = 0; step < 2000; ++step) {
    Tape<double> tape;
    Var<double> loss;
    {
      auto rec = tape.record();
      const Var<double> d = add(x, Var<double>(elementwise(Elementwise::mul, target, Tensor4<double>(target.dims(), -1.0)), false));
      loss = weighted_sum(mul(d, d), Tensor4<double>(target.dims(), 1.0));
    }
    tape.backward(loss);
    opt.step(1e-2);
    opt.zero_grad();
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x.value()[i], target[i], 1e-3);
}

TEST(AdamW, DecoupledDecayWithoutGradient) {
  Var<double> x(Tensor4<double>(Dims{1, 1, 1, 1}, std::vector<double>{1.0}), true);
  TrainSettings s;
  s.weight_decay = 0.1;
  AdamW<double> opt({x}, s);
  opt.step(0.5);
  EXPECT_DOUBLE_EQ(x.value()[0], 1.0 - 0.5 * 0.1);
}
