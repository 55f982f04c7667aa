#include <gtest/gtest.h>

#include "stripdet/analyzer.hpp"
#include "stripdet/io.hpp"
#include "stripdet/model.hpp"

using namespace stripdet;

namespace {

const LayerStats& layer(const CostReport& r, const std::string& name) {
  for (const auto& l : r.layers) {
    if (l.name == name) return l;
  }
  throw std::out_of_range(name);
}

ModelConfig one_block_config(std::size_t c, std::size_t k) {
  ModelConfig cfg = toy_config();
  cfg.stage_channels = {c, c, c};
  cfg.k = k;
  return cfg;
}

}  // namespace

TEST(Analyzer, DepthwiseAndStripClosedForms) {
  // C = 64, K = 7 at 16 x 16 (stage 0 of a 32 x 32 grid).
  const CostReport r = count_costs(one_block_config(64, 7), 32, 32);
  const std::string p = "backbone.stage0.sab0.sam.";
  EXPECT_EQ(layer(r, p + "dw3x3").params, 64u * 9 + 64);
  EXPECT_EQ(layer(r, p + "dw3x3").params, 640u);
  EXPECT_EQ(layer(r, p + "dw3x3").macs, 64u * 16 * 16 * 9);
  const auto strip = layer(r, p + "dw_1xk").params + layer(r, p + "dw_kx1").params;
  EXPECT_EQ(strip, 2u * (64 * 7 + 64));
  EXPECT_EQ(strip, 1024u);
  EXPECT_EQ(layer(r, p + "dw_1xk").params - 64 + layer(r, p + "dw_kx1").params - 64, 896u);
  EXPECT_EQ(layer(r, p + "pw").params, 64u * 64 + 64);
  EXPECT_EQ(layer(r, p + "pw").params, 4160u);
  EXPECT_EQ(layer(r, p + "pw").macs, 64u * 64 * 16 * 16);
}

TEST(Analyzer, StripPairVersusFullKernel) {
  ModelConfig cfg = one_block_config(32, 7);
  const auto rep = scaling_study(cfg, {3, 7, 11, 21});
  // Per block at C = 64, K = 7: 2(CK + C) versus C K^2 + C.
  ModelConfig single = toy_config();
  single.grid.x_range = {0.0, 2.56};
  single.grid.y_range = {0.0, 2.56};
  single.stage_channels = {64, 64, 64};
  single.stage_depths = {1, 0, 0};
  const auto one = scaling_study(single, {3, 7, 11});
  EXPECT_EQ(one.rows[1].strip_params, 1024u);
  EXPECT_EQ(one.rows[1].full_params, 3200u);
  EXPECT_EQ(rep.rows.size(), 4u);
  EXPECT_NEAR(rep.strip_param_exponent, 1.0, 0.15);
  EXPECT_NEAR(rep.strip_mac_exponent, 1.0, 0.15);
  EXPECT_NEAR(rep.full_param_exponent, 2.0, 0.15);
  EXPECT_NEAR(rep.full_mac_exponent, 2.0, 0.15);
  const auto& r21 = rep.rows.back();
  const double ratio = static_cast<double>(r21.full_macs) / static_cast<double>(r21.strip_macs);
  EXPECT_NEAR(ratio, 10.5, 10.5 * 0.15);
  EXPECT_THROW(scaling_study(cfg, {3}), std::invalid_argument);
  EXPECT_THROW(scaling_study(cfg, {3, 4, 7}), std::invalid_argument);
}

TEST(Analyzer, PointwiseConvMacs) {
  ModelConfig cfg = one_block_config(64, 7);
  cfg.c0 = 64;
  const CostReport r = count_costs(cfg, 16, 16);
  // 1x1 conv, 64 -> 64 channels at 8 x 8.
  EXPECT_EQ(layer(r, "backbone.stage0.down.pw").macs, 64u * 64 * 8 * 8);
  EXPECT_EQ(layer(r, "backbone.stage0.down.pw").macs, 262144u);
  EXPECT_EQ(layer(r, "backbone.stage0.sab0.sam.pw").macs, 64u * 64 * 8 * 8);
  // Stage 2 of an 8 x 8 grid is a single cell.
  const CostReport tiny = count_costs(cfg, 8, 8);
  EXPECT_EQ(layer(tiny, "backbone.stage2.sab0.sam.pw").macs, 4096u);
}

TEST(Analyzer, MacsQuarterWhenBothDimsHalve) {
  const ModelConfig cfg = reference_config();
  CostReport big = count_costs(cfg, 496, 432);
  CostReport small = count_costs(cfg, 248, 216);
  // The pillar encoder cost depends on capacity, not resolution.
  const auto pfn = layer(big, "pfn").macs;
  const double ratio = static_cast<double>(big.total_macs() - pfn) / static_cast<double>(small.total_macs() - pfn);
  EXPECT_NEAR(ratio, 4.0, 4.0 * 0.02);
  EXPECT_EQ(big.total_params(), small.total_params());
}

TEST(Analyzer, HalvingOneDimHalvesMacs) {
  const ModelConfig cfg = reference_config();
  const CostReport a = count_costs(cfg, 496, 432);
  const CostReport b = count_costs(cfg, 248, 432);
  const auto pfn = layer(a, "pfn").macs;
  const double ratio = static_cast<double>(a.total_macs() - pfn) / static_cast<double>(b.total_macs() - pfn);
  EXPECT_NEAR(ratio, 2.0, 2.0 * 0.02);
}

TEST(Analyzer, TotalsMatchInstantiatedAndSerializedCounts) {
  for (const ModelConfig& cfg : {reference_config(), toy_config(), one_block_config(8, 3)}) {
    Rng rng(1);
    const auto p = DetectorParams<float>::init(cfg, rng);
    const auto r = count_params(cfg);
    EXPECT_EQ(r.total_params(), p.scalar_count());
    EXPECT_EQ(r.total_params(), scalar_count(decode_weights(encode_weights(collect_tensors<float>(p)))));
  }
}

TEST(Analyzer, LayerNamesMatchParameterNames) {
  const ModelConfig cfg = toy_config();
  Rng rng(2);
  const auto p = DetectorParams<float>::init(cfg, rng);
  const auto r = count_params(cfg);
  for (const auto& l : r.layers) {
    std::uint64_t n = 0;
    p.visit([&](const std::string& name, const Var<float>& v) {
      if (name.rfind(l.name + ".", 0) == 0) n += v.value().size();
    });
    EXPECT_EQ(n, l.params) << l.name;
  }
}

TEST(Analyzer, RemovingABlockSubtractsItsCost) {
  ModelConfig cfg = reference_config();
  const auto full = count_costs(cfg, 496, 432);
  cfg.stage_depths[1] = 1;
  const auto less = count_costs(cfg, 496, 432);
  EXPECT_EQ(full.total_params() - less.total_params(), sab_param_count(64, 7));
  EXPECT_EQ(full.total_params() - less.total_params(), full.params_under("backbone.stage1.sab1."));
  std::uint64_t block_macs = 0;
  for (const auto& l : full.layers) {
    if (l.name.rfind("backbone.stage1.sab1.", 0) == 0) block_macs += l.macs;
  }
  EXPECT_EQ(full.total_macs() - less.total_macs(), block_macs);
}

TEST(Analyzer, ReferenceBudget) {
  const auto r = count_costs(reference_config(), 496, 432);
  EXPECT_GE(r.total_params(), 550000u);
  EXPECT_LE(r.total_params(), 750000u);
  const HeadlineFigure h = headline(r);
  EXPECT_LE(h.deviation, 0.30) << h.convention << " " << h.giga;
  EXPECT_EQ(r.total_flops(), 2 * r.total_macs());
}

TEST(Analyzer, RejectsBadResolution) {
  EXPECT_THROW(count_costs(reference_config(), 100, 432), std::invalid_argument);
}

TEST(Analyzer, LoglogSlopeOfPowerLaw) {
  EXPECT_NEAR(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}), 2.0, 1e-12);
}
