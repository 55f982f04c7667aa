#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <functional>
#include <string>
#include <vector>

#include "stripdet/anchors.hpp"
#include "stripdet/gradcheck.hpp"
#include "stripdet/loss.hpp"
#include "stripdet/nn.hpp"
#include "stripdet/pillar.hpp"
#include "stripdet/strip_attention.hpp"

namespace stripdet {

struct GradcheckCase {
  std::string name;
  double max_error = 0;
};

namespace gradcheck_detail {

using V = Var<double>;
using T4 = Tensor4<double>;

inline const Dims kInput{1, 8, 6, 6};

// Scalar probe: a random-weighted sum keeps every output element's gradient
// well away from zero.
inline std::function<V(const V&)> probe(std::function<V(const V&)> f, const Dims& out_dims, Rng& rng) {
  auto weights = std::make_shared<T4>(random_tensor<double>(out_dims, rng, -1.0, 1.0));
  return [f = std::move(f), weights](const V& x) { return weighted_sum(f(x), *weights); };
}

// Replaces one parameter slot with the probed variable for the duration of f.
template <typename P>
std::function<V(const V&)> with_param(const P& base, V P::*slot, std::function<V(const P&)> body) {
  return [base, slot, body](const V& w) {
    P p = base;
    p.*slot = w;
    return body(p);
  };
}

inline void add_conv_cases(std::vector<std::pair<std::string, std::function<double(Rng&)>>>& cases,
                           const std::string& label, const ConvSpec& spec) {
  cases.push_back({label + " (input)", [spec](Rng& rng) {
                     const auto p = ConvParams<double>::init(spec, rng);
                     const T4 x = random_tensor<double>(kInput, rng, -1, 1);
                     const Dims od = ops::conv2d(x, spec, p.weight.value(), nn::detail::span_of(p.bias)).dims();
                     return gradcheck(probe([p](const V& v) { return nn::conv2d(v, p); }, od, rng), x);
                   }});
  cases.push_back({label + " (weight)", [spec](Rng& rng) {
                     const auto p = ConvParams<double>::init(spec, rng);
                     const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                     const Dims od = nn::conv2d(x, p).dims();
                     auto body = [x](const ConvParams<double>& q) { return nn::conv2d(x, q); };
                     return gradcheck(probe(with_param<ConvParams<double>>(p, &ConvParams<double>::weight, body), od, rng),
                                      p.weight.value());
                   }});
  if (spec.bias) {
    cases.push_back({label + " (bias)", [spec](Rng& rng) {
                       const auto p = ConvParams<double>::init(spec, rng);
                       const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                       const Dims od = nn::conv2d(x, p).dims();
                       auto body = [x](const ConvParams<double>& q) { return nn::conv2d(x, q); };
                       return gradcheck(
                           probe(with_param<ConvParams<double>>(p, &ConvParams<double>::bias, body), od, rng),
                           p.bias.value());
                     }});
  }
}

// Smallest distance of the pillar net from a kink: |pre-activation| of any
// real point, or the gap between the two largest activations of a pillar.
inline double pfn_kink_distance(const PillarBatch<double>& batch, const LinearParams<double>& p) {
  double worst = std::numeric_limits<double>::infinity();
  const Tensor4<double>& w = p.weight.value();
  for (std::size_t q = 0; q < batch.size(); ++q) {
    for (std::size_t c = 0; c < p.out_channels(); ++c) {
      std::vector<double> acts;
      for (std::size_t m = 0; m < batch.counts[q]; ++m) {
        double pre = p.bias.value()[c];
        for (std::size_t i = 0; i < kPillarFeatures; ++i) pre += w(c, i, 0, 0) * batch.point(q, m)[i];
        worst = std::min(worst, std::abs(pre));
        acts.push_back(std::max(pre, 0.0));
      }
      std::sort(acts.rbegin(), acts.rend());
      if (acts.size() > 1 && acts[0] > 0) worst = std::min(worst, acts[0] - acts[1]);
    }
  }
  return worst;
}

// Tiny detection problem for the loss: 16x16 cells, one class, two yaws.
inline ModelConfig loss_config() {
  ModelConfig cfg = toy_config();
  cfg.grid.x_range = {0.0, 5.12};
  cfg.grid.y_range = {-2.56, 2.56};
  return cfg;
}

}  // namespace gradcheck_detail

// Every differentiable op plus the composed SAM/SAB, on 1x8x6x6 inputs.
inline std::vector<std::pair<std::string, std::function<double(Rng&)>>> gradcheck_cases() {
  using namespace gradcheck_detail;
  std::vector<std::pair<std::string, std::function<double(Rng&)>>> cases;
  const std::size_t C = kInput.c;

  add_conv_cases(cases, "conv3x3", ConvSpec::standard(C, 5, 3, 1));
  add_conv_cases(cases, "conv3x3 stride 2", ConvSpec::standard(C, 4, 3, 2));
  add_conv_cases(cases, "depthwise 3x3 stride 2", ConvSpec::depthwise(C, 3, 3, 2));
  add_conv_cases(cases, "depthwise 1x5", ConvSpec::depthwise(C, 1, 5, 1));
  add_conv_cases(cases, "depthwise 5x1", ConvSpec::depthwise(C, 5, 1, 1));
  add_conv_cases(cases, "pointwise", ConvSpec::pointwise(C, 6));

  cases.push_back({"linear (input)", [](Rng& rng) {
                     const auto p = LinearParams<double>::init(kInput.c, 5, rng);
                     return gradcheck(probe([p](const V& v) { return nn::linear(v, p); }, {1, 5, 6, 6}, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"linear (weight)", [](Rng& rng) {
                     const auto p = LinearParams<double>::init(kInput.c, 5, rng);
                     const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                     auto body = [x](const LinearParams<double>& q) { return nn::linear(x, q); };
                     return gradcheck(
                         probe(with_param<LinearParams<double>>(p, &LinearParams<double>::weight, body), {1, 5, 6, 6},
                               rng),
                         p.weight.value());
                   }});
  cases.push_back({"linear (bias)", [](Rng& rng) {
                     const auto p = LinearParams<double>::init(kInput.c, 5, rng);
                     const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                     auto body = [x](const LinearParams<double>& q) { return nn::linear(x, q); };
                     return gradcheck(
                         probe(with_param<LinearParams<double>>(p, &LinearParams<double>::bias, body), {1, 5, 6, 6},
                               rng),
                         p.bias.value());
                   }});
  cases.push_back({"gelu", [](Rng& rng) {
                     // GeLU' vanishes near x = -0.75, where a relative error is meaningless.
                     T4 x = random_tensor<double>(kInput, rng, -3, 3);
                     for (double& v : x.values()) {
                       if (std::abs(v + 0.75) < 0.25) v += 1.0;
                     }
                     return gradcheck(probe([](const V& v) { return nn::gelu(v); }, kInput, rng), x);
                   }});
  cases.push_back({"sigmoid", [](Rng& rng) {
                     return gradcheck(probe([](const V& v) { return nn::sigmoid(v); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -4, 4));
                   }});
  cases.push_back({"relu", [](Rng& rng) {
                     // Keep inputs off the kink so central differences are exact.
                     T4 x = random_tensor<double>(kInput, rng, -1, 1);
                     for (double& v : x.values()) v += v < 0 ? -0.05 : 0.05;
                     return gradcheck(probe([](const V& v) { return nn::relu(v); }, kInput, rng), x);
                   }});
  cases.push_back({"layernorm (input)", [](Rng& rng) {
                     auto p = NormParams<double>::identity(kInput.c);
                     fill_uniform(p.gamma.mutable_value(), rng, 0.5, 1.5);
                     fill_uniform(p.beta.mutable_value(), rng, -0.5, 0.5);
                     return gradcheck(probe([p](const V& v) { return nn::layernorm(v, p); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"layernorm (gamma)", [](Rng& rng) {
                     auto p = NormParams<double>::identity(kInput.c);
                     const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                     auto body = [x](const NormParams<double>& q) { return nn::layernorm(x, q); };
                     return gradcheck(
                         probe(with_param<NormParams<double>>(p, &NormParams<double>::gamma, body), kInput, rng),
                         random_tensor<double>(p.gamma.dims(), rng, 0.5, 1.5));
                   }});
  cases.push_back({"layernorm (beta)", [](Rng& rng) {
                     auto p = NormParams<double>::identity(kInput.c);
                     const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                     auto body = [x](const NormParams<double>& q) { return nn::layernorm(x, q); };
                     return gradcheck(
                         probe(with_param<NormParams<double>>(p, &NormParams<double>::beta, body), kInput, rng),
                         random_tensor<double>(p.beta.dims(), rng, -0.5, 0.5));
                   }});
  cases.push_back({"upsample x2", [](Rng& rng) {
                     return gradcheck(
                         probe([](const V& v) { return nn::upsample_nearest(v, 2); }, {1, kInput.c, 12, 12}, rng),
                         random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"concat", [](Rng& rng) {
                     const V other(random_tensor<double>({1, 3, 6, 6}, rng, -1, 1), false);
                     return gradcheck(
                         probe([other](const V& v) { return nn::concat_channels<double>({other, v, other}); },
                               {1, kInput.c + 6, 6, 6}, rng),
                         random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"add", [](Rng& rng) {
                     const V other(random_tensor<double>(kInput, rng, -1, 1), false);
                     return gradcheck(probe([other](const V& v) { return add(add(v, other), v); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"mul", [](Rng& rng) {
                     const V other(random_tensor<double>(kInput, rng, -1, 1), false);
                     return gradcheck(probe([other](const V& v) { return mul(mul(v, other), v); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"scale", [](Rng& rng) {
                     return gradcheck(probe([](const V& v) { return scale(v, -1.7); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});

  cases.push_back({"sam (input)", [](Rng& rng) {
                     const auto p = SAMParams<double>::init(kInput.c, 5, rng);
                     return gradcheck(probe([p](const V& v) { return sam_forward(v, p); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"sab (input)", [](Rng& rng) {
                     const auto p = SABParams<double>::init(kInput.c, 5, rng);
                     return gradcheck(probe([p](const V& v) { return sab_forward(v, p); }, kInput, rng),
                                      random_tensor<double>(kInput, rng, -1, 1));
                   }});
  cases.push_back({"sab (parameters)", [](Rng& rng) {
                     // Every parameter tensor of the block, one at a time.
                     const auto base = SABParams<double>::init(kInput.c, 5, rng);
                     const V x(random_tensor<double>(kInput, rng, -1, 1), false);
                     const auto weights = std::make_shared<T4>(random_tensor<double>(kInput, rng, -1, 1));
                     std::vector<std::string> names;
                     base.visit("sab", [&names](const std::string& n, const V&) { names.push_back(n); });
                     double worst = 0;
                     for (const std::string& target : names) {
                       T4 start;
                       base.visit("sab", [&](const std::string& n, const V& v) {
                         if (n == target) start = v.value();
                       });
                       if (target.ends_with(".gamma")) {
                         for (double& g : start.values()) g = 0.5 + rng.uniform();
                       }
                       auto f = [&](const V& w) {
                         SABParams<double> p = base;
                         // Rebind the targeted slot to the probed variable.
                         auto rebind = [&](ConvParams<double>& c, const std::string& prefix) {
                           if (prefix + ".weight" == target) c.weight = w;
                           if (prefix + ".bias" == target) c.bias = w;
                         };
                         auto rebind_lin = [&](LinearParams<double>& c, const std::string& prefix) {
                           if (prefix + ".weight" == target) c.weight = w;
                           if (prefix + ".bias" == target) c.bias = w;
                         };
                         rebind_lin(p.pre_linear, "sab.pre_linear");
                         rebind(p.sam.dw3x3, "sab.sam.dw3x3");
                         rebind(p.sam.dw_1xk, "sab.sam.dw_1xk");
                         rebind(p.sam.dw_kx1, "sab.sam.dw_kx1");
                         rebind(p.sam.pw, "sab.sam.pw");
                         rebind_lin(p.sam.proj, "sab.sam.proj");
                         if (target == "sab.norm.gamma") p.norm.gamma = w;
                         if (target == "sab.norm.beta") p.norm.beta = w;
                         rebind(p.conv3x3, "sab.conv3x3");
                         return weighted_sum(sab_forward(x, p), *weights);
                       };
                       worst = std::max(worst, gradcheck(f, start));
                     }
                     return worst;
                   }});

  cases.push_back({"pillar feature net (weight)", [](Rng& rng) {
                     PointCloud pc;
                     for (int n = 0; n < 40; ++n) {
                       pc.points.push_back({static_cast<float>(rng.uniform(0, 0.96)),
                                            static_cast<float>(rng.uniform(-0.48, 0.48)),
                                            static_cast<float>(rng.uniform(-2, 0)), static_cast<float>(rng.uniform())});
                     }
                     GridSpec grid;
                     grid.x_range = {0, 0.96};
                     grid.y_range = {-0.48, 0.48};
                     grid.pillar_dx = grid.pillar_dy = 0.32;
                     grid.max_points_per_pillar = 6;
                     const auto batch = std::make_shared<PillarBatch<double>>(pillarize<double>(pc, grid));
                     // Max and ReLU are only piecewise smooth: draw weights until every
                     // pre-activation and every max gap is clear of the finite-difference step.
                     auto p = LinearParams<double>::init(kPillarFeatures, 8, rng);
                     while (pfn_kink_distance(*batch, p) < 1e-2) p = LinearParams<double>::init(kPillarFeatures, 8, rng);
                     auto body = [batch, grid](const LinearParams<double>& q) {
                       return scatter_to_bev(pfn_forward(*batch, q), batch->coords, grid);
                     };
                     return gradcheck(probe(with_param<LinearParams<double>>(p, &LinearParams<double>::weight, body),
                                            {1, 8, 3, 3}, rng),
                                      p.weight.value());
                   }});
  cases.push_back({"scatter to bev", [](Rng& rng) {
                     GridSpec grid;
                     grid.x_range = {0, 1.28};
                     grid.y_range = {0, 1.28};
                     grid.pillar_dx = grid.pillar_dy = 0.32;
                     const std::vector<GridCoord> coords{{0, 1}, {3, 3}, {2, 0}};
                     return gradcheck(
                         probe([coords, grid](const V& v) { return scatter_to_bev(v, coords, grid); }, {1, 8, 4, 4},
                               rng),
                         random_tensor<double>({3, 8, 1, 1}, rng, -1, 1));
                   }});

  auto loss_case = [](std::size_t which) {
    return [which](Rng& rng) {
      const ModelConfig cfg = loss_config();
      const auto anchors = std::make_shared<std::vector<Anchor>>(generate_anchors(cfg));
      const Box3D gt{2.3, 0.2, -1.7, 1.7, 4.0, 1.5, rng.uniform(-3, 3)};
      const auto targets = std::make_shared<AnchorTargets>(assign_targets(*anchors, {{gt, 0}}, cfg.anchors));
      const std::size_t A = cfg.anchors_per_cell(), R = cfg.grid.height() / 2, Cc = cfg.grid.width() / 2;
      std::vector<V> maps{V(random_tensor<double>({1, A * cfg.num_classes(), R, Cc}, rng, -2, 2), false),
                          V(random_tensor<double>({1, A * 7, R, Cc}, rng, -0.5, 0.5), false),
                          V(random_tensor<double>({1, A * 2, R, Cc}, rng, -2, 2), false)};
      const T4 start = maps[which].value();
      auto f = [maps, which, anchors, targets, cfg](const V& v) {
        std::vector<V> m = maps;
        m[which] = v;
        return detection_loss(m[0], m[1], m[2], *anchors, *targets, cfg);
      };
      return gradcheck(f, start);
    };
  };
  cases.push_back({"detection loss (cls)", loss_case(0)});
  cases.push_back({"detection loss (box)", loss_case(1)});
  cases.push_back({"detection loss (dir)", loss_case(2)});
  return cases;
}

// Runs every case over `seeds` seeds derived from `seed` and reports the worst
// error per case.
inline std::vector<GradcheckCase> run_gradcheck_suite(std::uint64_t seed, std::size_t seeds = 10) {
  std::vector<GradcheckCase> out;
  for (auto& [name, fn] : gradcheck_cases()) {
    GradcheckCase c{name, 0.0};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng = Rng(seed + s).split("gradcheck").split(name);
      c.max_error = std::max(c.max_error, fn(rng));
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace stripdet
