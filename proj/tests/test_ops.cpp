#include <gtest/gtest.h>

#include <cmath>

#include "stripdet/nn.hpp"
#include "stripdet/random.hpp"

using namespace stripdet;

namespace {

template <typename T>
std::span<const T> no_bias() {
  return {};
}

}  // namespace

TEST(ConvSpec, FormPredicates) {
  EXPECT_TRUE(ConvSpec::depthwise(8, 3, 3).is_depthwise());
  EXPECT_FALSE(ConvSpec::depthwise(8, 3, 3).is_strip());
  EXPECT_TRUE(ConvSpec::depthwise(8, 1, 7).is_strip());
  EXPECT_TRUE(ConvSpec::depthwise(8, 7, 1).is_strip());
  EXPECT_TRUE(ConvSpec::pointwise(8, 4).is_pointwise());
  EXPECT_FALSE(ConvSpec::standard(8, 4, 3).is_pointwise());
  ConvSpec bad = ConvSpec::standard(6, 4, 3);
  bad.groups = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Conv2d, OneByOneScalar) {
  const Tensor4<double> x(Dims{1, 1, 1, 1}, {3.0});
  const Tensor4<double> w(Dims{1, 1, 1, 1}, {2.0});
  const std::vector<double> b{1.0};
  const auto y = ops::conv2d(x, ConvSpec::pointwise(1, 1), w, std::span<const double>(b));
  EXPECT_EQ(y[0], 7.0);
}

TEST(Conv2d, DepthwiseCenterTapIsIdentity) {
  Rng rng(1);
  const auto x = random_tensor<double>(Dims{2, 4, 5, 6}, rng);
  const ConvSpec spec = ConvSpec::depthwise(4, 3, 3);
  Tensor4<double> w(spec.weight_dims(), 0.0);
  for (std::size_t c = 0; c < 4; ++c) w(c, 0, 1, 1) = 1.0;
  EXPECT_EQ(ops::conv2d(x, spec, w, no_bias<double>()), x);
}

TEST(Conv2d, StripRowWithZeroPadding) {
  const Tensor4<double> x(Dims{1, 1, 1, 3}, {1, 2, 3});
  const ConvSpec spec = ConvSpec::depthwise(1, 1, 3);
  EXPECT_EQ(spec.pad_h, 0u);
  EXPECT_EQ(spec.pad_w, 1u);
  const Tensor4<double> w(spec.weight_dims(), 1.0);
  const std::vector<double> b{0.0};
  const auto y = ops::conv2d(x, spec, w, std::span<const double>(b));
  EXPECT_EQ(y.values(), (std::vector<double>{3, 6, 5}));
}

TEST(Conv2d, MatchesNaiveLoop) {
  Rng rng(2);
  for (std::size_t stride : {1, 2}) {
    ConvSpec spec = ConvSpec::standard(4, 6, 3, stride);
    spec.groups = 2;
    const auto x = random_tensor<double>(Dims{2, 4, 7, 5}, rng);
    const auto w = random_tensor<double>(spec.weight_dims(), rng);
    const auto b = random_tensor<double>(Dims{6, 1, 1, 1}, rng);
    const auto y = ops::conv2d(x, spec, w, b.data());
    const std::size_t oh = (7 + 2 - 3) / stride + 1, ow = (5 + 2 - 3) / stride + 1;
    ASSERT_EQ(y.dims(), (Dims{2, 6, oh, ow}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 6; ++o)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            double acc = b[o];
            const std::size_t g = o / 3;
            for (std::size_t c = 0; c < 2; ++c)
              for (std::size_t u = 0; u < 3; ++u)
                for (std::size_t v = 0; v < 3; ++v) {
                  const long r = static_cast<long>(i * stride + u) - 1;
                  const long s = static_cast<long>(j * stride + v) - 1;
                  if (r < 0 || s < 0 || r >= 7 || s >= 5) continue;
                  acc += w(o, c, u, v) * x(n, g * 2 + c, static_cast<std::size_t>(r), static_cast<std::size_t>(s));
                }
            EXPECT_NEAR(y(n, o, i, j), acc, 1e-12);
          }
  }
}

TEST(Conv2d, Errors) {
  const Tensor4<double> x(Dims{1, 3, 4, 4});
  const ConvSpec spec = ConvSpec::standard(2, 2, 3);
  EXPECT_THROW(ops::conv2d(x, spec, Tensor4<double>(spec.weight_dims()), no_bias<double>()), ShapeError);
  ConvSpec big = ConvSpec::standard(3, 1, 7);
  big.pad_h = big.pad_w = 0;
  EXPECT_THROW(ops::conv2d(x, big, Tensor4<double>(big.weight_dims()), no_bias<double>()), ShapeError);
}

TEST(Linear, IdentityAndDot) {
  Rng rng(4);
  const auto x = random_tensor<double>(Dims{1, 3, 2, 2}, rng);
  Tensor4<double> eye(Dims{3, 3, 1, 1}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i, 0, 0) = 1.0;
  const std::vector<double> zero(3, 0.0);
  EXPECT_EQ(ops::linear(x, eye, std::span<const double>(zero)), x);

  const Tensor4<double> px(Dims{1, 2, 1, 1}, {3, 4});
  const Tensor4<double> w(Dims{1, 2, 1, 1}, {1, 1});
  EXPECT_EQ(ops::linear(px, w, no_bias<double>())[0], 7.0);
  EXPECT_THROW(ops::linear(x, w, no_bias<double>()), ShapeError);
}

TEST(Linear, EqualsPointwiseConvExactly) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_tensor<float>(Dims{2, 7, 3, 5}, rng);
    const auto w = random_tensor<float>(Dims{4, 7, 1, 1}, rng);
    const auto b = random_tensor<float>(Dims{4, 1, 1, 1}, rng);
    EXPECT_EQ(ops::linear(x, w, b.data()), ops::conv2d(x, ConvSpec::pointwise(7, 4), w, b.data()));
  }
}

TEST(Gelu, ReferenceValues) {
  EXPECT_EQ(ops::gelu_scalar(0.0), 0.0);
  EXPECT_NEAR(ops::gelu_scalar(1.0), 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(ops::gelu_scalar(1.0), 0.841345, 1e-6);
  EXPECT_NEAR(ops::gelu_scalar(-10.0), 0.0, 1e-9);
}

TEST(Sigmoid, ReferenceValuesAndSymmetry) {
  EXPECT_EQ(ops::sigmoid_scalar(0.0), 0.5);
  EXPECT_NEAR(ops::sigmoid_scalar(std::log(3.0)), 0.75, 1e-15);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.uniform(-30, 30);
    EXPECT_NEAR(ops::sigmoid_scalar(x) + ops::sigmoid_scalar(-x), 1.0, 1e-15);
  }
  EXPECT_EQ(ops::sigmoid_scalar(-800.0), 0.0);
  EXPECT_EQ(ops::sigmoid_scalar(800.0), 1.0);
}

TEST(LayerNorm, ConstantVectorMapsToZero) {
  const Tensor4<double> x(Dims{1, 4, 1, 1}, 2.5);
  const std::vector<double> g(4, 1.0), b(4, 0.0);
  const auto y = ops::layernorm(x, std::span<const double>(g), std::span<const double>(b), 1e-6);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoChannels) {
  const Tensor4<double> x(Dims{1, 2, 1, 1}, {1, 3});
  const std::vector<double> g(2, 1.0), b(2, 0.0);
  const auto y = ops::layernorm(x, std::span<const double>(g), std::span<const double>(b), 1e-14);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(LayerNorm, StatisticsPerPixel) {
  Rng rng(7);
  const auto x = random_tensor<double>(Dims{2, 16, 3, 4}, rng, -5, 5);
  const std::vector<double> g(16, 1.0), b(16, 0.0);
  const auto y = ops::layernorm(x, std::span<const double>(g), std::span<const double>(b), 1e-6);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double m = 0, v = 0;
        for (std::size_t c = 0; c < 16; ++c) m += y(n, c, i, j);
        m /= 16;
        for (std::size_t c = 0; c < 16; ++c) v += (y(n, c, i, j) - m) * (y(n, c, i, j) - m);
        v /= 16;
        EXPECT_LE(std::abs(m), 1e-6);
        EXPECT_NEAR(v, 1.0, 1e-4);
      }
}

TEST(Upsample, NearestBlocks) {
  const Tensor4<double> x(Dims{1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(ops::upsample_nearest(x, 1), x);
  const auto y = ops::upsample_nearest(x, 2);
  EXPECT_EQ(y.values(), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  Rng rng(8);
  const auto r = random_tensor<double>(Dims{1, 3, 3, 2}, rng);
  EXPECT_NEAR(ops::upsample_nearest(r, 3).sum(), 9.0 * r.sum(), 1e-12);
  EXPECT_THROW(ops::upsample_nearest(r, 0), std::invalid_argument);
}

TEST(Concat, OrderAndErrors) {
  Rng rng(9);
  const auto a = random_tensor<double>(Dims{1, 2, 3, 3}, rng);
  const auto b = random_tensor<double>(Dims{1, 3, 3, 3}, rng);
  EXPECT_EQ(ops::concat_channels<double>({a}), a);
  const auto y = ops::concat_channels<double>({a, b});
  ASSERT_EQ(y.dims().c, 5u);
  EXPECT_EQ(y(0, 1, 2, 0), a(0, 1, 2, 0));
  EXPECT_EQ(y(0, 4, 1, 2), b(0, 2, 1, 2));
  const auto bad = random_tensor<double>(Dims{1, 1, 4, 3}, rng);
  try {
    ops::concat_channels<double>({a, b, bad});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("part 2"), std::string::npos) << e.what();
  }
}

TEST(NnOps, RecordedOpsMatchRawOps) {
  Rng rng(10);
  const auto spec = ConvSpec::depthwise(4, 1, 5);
  const auto p = ConvParams<double>::init(spec, rng);
  const Var<double> x(random_tensor<double>(Dims{1, 4, 6, 6}, rng), true);
  Tape<double> tape;
  auto rec = tape.record();
  EXPECT_EQ(nn::conv2d(x, p).value(), ops::conv2d(x.value(), spec, p.weight.value(), p.bias.value().data()));
  EXPECT_EQ(nn::upsample_nearest(x, 1).node(), x.node());
  EXPECT_EQ(tape.size(), 1u);
}
