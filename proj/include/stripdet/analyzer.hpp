#pragma once

// Static parameter and multiply-accumulate accounting for a ModelConfig.
// Walks the architecture independently of the instantiated parameter structs
// so the two can be cross-checked.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stripdet/config.hpp"
#include "stripdet/pillar.hpp"

namespace stripdet {

struct LayerStats {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::vector<LayerStats> layers;
  // Elementwise work (activations, gating, residual adds, norms) at one FLOP
  // per output element; excluded from the headline figure.
  std::uint64_t minor_flops = 0;

  std::uint64_t total_params() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.params;
    return n;
  }
  std::uint64_t total_macs() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.macs;
    return n;
  }
  std::uint64_t total_flops() const { return 2 * total_macs(); }

  // Sum over layers whose name starts with `prefix`.
  std::uint64_t params_under(const std::string& prefix) const {
    std::uint64_t n = 0;
    for (const auto& l : layers) {
      if (l.name.rfind(prefix, 0) == 0) n += l.params;
    }
    return n;
  }
};

namespace analyzer_detail {

struct Walker {
  CostReport report;
  std::uint64_t h = 0;
  std::uint64_t w = 0;

  void conv(const std::string& name, std::uint64_t in, std::uint64_t out, std::uint64_t kh, std::uint64_t kw,
            std::uint64_t groups, std::uint64_t stride, bool bias = true) {
    const std::uint64_t ph = kh / 2, pw = kw / 2;
    const std::uint64_t oh = (h + 2 * ph - kh) / stride + 1;
    const std::uint64_t ow = (w + 2 * pw - kw) / stride + 1;
    const std::uint64_t per_out = (in / groups) * kh * kw;
    report.layers.push_back({name, out * per_out + (bias ? out : 0), out * oh * ow * per_out});
    h = oh;
    w = ow;
  }

  void linear(const std::string& name, std::uint64_t in, std::uint64_t out) {
    report.layers.push_back({name, out * in + out, out * in * h * w});
  }

  void norm(const std::string& name, std::uint64_t ch) {
    report.layers.push_back({name, 2 * ch, 0});
    report.minor_flops += ch * h * w;
  }

  void elementwise(std::uint64_t ch, std::uint64_t count) { report.minor_flops += count * ch * h * w; }

  void sab(const std::string& p, std::uint64_t c, std::uint64_t k) {
    linear(p + ".pre_linear", c, c);
    elementwise(c, 1);  // gelu
    conv(p + ".sam.dw3x3", c, c, 3, 3, c, 1);
    conv(p + ".sam.dw_1xk", c, c, 1, k, c, 1);
    conv(p + ".sam.dw_kx1", c, c, k, 1, c, 1);
    conv(p + ".sam.pw", c, c, 1, 1, 1, 1);
    linear(p + ".sam.proj", c, c);
    elementwise(c, 2);  // gelu, gating product
    elementwise(c, 1);  // residual
    norm(p + ".norm", c);
    conv(p + ".conv3x3", c, c, 3, 3, 1, 1);
    elementwise(c, 1);  // residual
  }
};

}  // namespace analyzer_detail

// Per-layer parameter and MAC counts at the given BEV resolution. The pillar
// encoder is charged at full pillar capacity.
inline CostReport count_costs(const ModelConfig& cfg, std::size_t bev_h, std::size_t bev_w) {
  cfg.validate();
  if (bev_h % 8 != 0 || bev_w % 8 != 0) {
    throw std::invalid_argument("analyzer: BEV dims must be divisible by 8");
  }
  analyzer_detail::Walker wk;
  const std::uint64_t c0 = cfg.c0;
  const std::uint64_t capacity = static_cast<std::uint64_t>(cfg.grid.max_pillars) * cfg.grid.max_points_per_pillar;
  wk.report.layers.push_back({"pfn", c0 * kPillarFeatures + c0, capacity * kPillarFeatures * c0});
  wk.report.minor_flops += capacity * c0;  // relu

  wk.h = bev_h;
  wk.w = bev_w;
  std::uint64_t in = c0;
  std::uint64_t fused_h = 0, fused_w = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string prefix = "backbone.stage" + std::to_string(s);
    const std::uint64_t ch = cfg.stage_channels[s];
    wk.conv(prefix + ".down.dw", in, in, 3, 3, in, 2);
    wk.conv(prefix + ".down.pw", in, ch, 1, 1, 1, 1);
    if (s == 0) {
      fused_h = wk.h;
      fused_w = wk.w;
    }
    for (std::size_t b = 0; b < cfg.stage_depths[s]; ++b) {
      wk.sab(prefix + ".sab" + std::to_string(b), ch, cfg.k);
    }
    in = ch;
  }

  const std::uint64_t fused = cfg.fused_channels();
  const std::uint64_t A = cfg.anchors_per_cell();
  const std::uint64_t outs[3] = {A * cfg.num_classes(), A * 7, A * 2};
  const char* names[3] = {"head.cls", "head.box", "head.dir"};
  for (std::size_t b = 0; b < 3; ++b) {
    wk.h = fused_h;
    wk.w = fused_w;
    wk.conv(std::string(names[b]) + ".conv", fused, cfg.head_channels, 3, 3, 1, 1);
    wk.elementwise(cfg.head_channels, 1);
    wk.conv(std::string(names[b]) + ".out", cfg.head_channels, outs[b], 1, 1, 1, 1);
  }
  return wk.report;
}

inline CostReport count_params(const ModelConfig& cfg) {
  return count_costs(cfg, cfg.grid.height(), cfg.grid.width());
}

inline CostReport count_macs(const ModelConfig& cfg, std::size_t bev_h, std::size_t bev_w) {
  return count_costs(cfg, bev_h, bev_w);
}

// Closed-form SAB parameter count at width C and strip length K.
inline std::uint64_t sab_param_count(std::uint64_t c, std::uint64_t k) {
  return (c * c + c)               // pre_linear
         + (9 * c + c)             // dw3x3
         + 2 * (k * c + c)         // strip pair
         + (c * c + c)             // pw
         + (c * c + c)             // proj
         + 2 * c                   // norm
         + (9 * c * c + c);        // conv3x3
}

struct ScalingRow {
  std::size_t k = 0;
  std::uint64_t strip_params = 0;
  std::uint64_t strip_macs = 0;
  std::uint64_t full_params = 0;
  std::uint64_t full_macs = 0;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  double strip_param_exponent = 0;
  double strip_mac_exponent = 0;
  double full_param_exponent = 0;
  double full_mac_exponent = 0;
};

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// Strip pair (1xK + Kx1 depthwise) versus a single KxK depthwise kernel, summed
// over every SAB in the model at the config's BEV resolution.
inline ScalingReport scaling_study(const ModelConfig& cfg, const std::vector<std::size_t>& ks) {
  if (ks.size() < 3) throw std::invalid_argument("scaling_study: need at least 3 K values");
  for (std::size_t k : ks) {
    if (k == 0 || k % 2 == 0) throw std::invalid_argument("scaling_study: K values must be odd");
  }
  const std::uint64_t h0 = cfg.grid.height(), w0 = cfg.grid.width();
  ScalingReport rep;
  for (std::size_t k : ks) {
    ScalingRow row;
    row.k = k;
    std::uint64_t h = h0, w = w0;
    for (std::size_t s = 0; s < 3; ++s) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
      const std::uint64_t c = cfg.stage_channels[s];
      const std::uint64_t blocks = cfg.stage_depths[s];
      row.strip_params += blocks * 2 * (c * k + c);
      row.strip_macs += blocks * 2 * c * k * h * w;
      row.full_params += blocks * (c * k * k + c);
      row.full_macs += blocks * c * k * k * h * w;
    }
    rep.rows.push_back(row);
  }
  std::vector<double> x, sp, sm, fp, fm;
  for (const auto& r : rep.rows) {
    x.push_back(static_cast<double>(r.k));
    sp.push_back(static_cast<double>(r.strip_params));
    sm.push_back(static_cast<double>(r.strip_macs));
    fp.push_back(static_cast<double>(r.full_params));
    fm.push_back(static_cast<double>(r.full_macs));
  }
  rep.strip_param_exponent = loglog_slope(x, sp);
  rep.strip_mac_exponent = loglog_slope(x, sm);
  rep.full_param_exponent = loglog_slope(x, fp);
  rep.full_mac_exponent = loglog_slope(x, fm);
  return rep;
}

inline constexpr double kReferenceGiga = 9.5;

// Which counting convention (MACs or 2*MACs) lands closest to the reference
// figure, as a relative deviation.
struct HeadlineFigure {
  std::string convention;
  double giga = 0;
  double deviation = 0;
};

inline HeadlineFigure headline(const CostReport& r, double reference_giga = kReferenceGiga) {
  const double macs = static_cast<double>(r.total_macs()) * 1e-9;
  const double flops = 2.0 * macs;
  const double dm = std::abs(macs - reference_giga) / reference_giga;
  const double df = std::abs(flops - reference_giga) / reference_giga;
  if (dm <= df) return {"MACs", macs, dm};
  return {"FLOPs=2*MACs", flops, df};
}

inline void print_report(std::ostream& os, const CostReport& r) {
  os << std::left << std::setw(44) << "layer" << std::right << std::setw(12) << "params" << std::setw(16) << "MACs"
     << "\n";
  for (const auto& l : r.layers) {
    os << std::left << std::setw(44) << l.name << std::right << std::setw(12) << l.params << std::setw(16) << l.macs
       << "\n";
  }
  const HeadlineFigure hf = headline(r);
  std::ostringstream tail;
  tail << std::fixed << std::setprecision(4);
  tail << "total params " << r.total_params() << " (" << static_cast<double>(r.total_params()) * 1e-6 << "M)\n";
  tail << "total MACs " << r.total_macs() << " (" << static_cast<double>(r.total_macs()) * 1e-9 << "G)"
       << ", FLOPs " << r.total_flops() << " (" << static_cast<double>(r.total_flops()) * 1e-9 << "G)\n";
  tail << "minor elementwise FLOPs " << r.minor_flops << " (excluded)\n";
  tail << "headline convention " << hf.convention << ": " << hf.giga << "G vs reference " << kReferenceGiga
       << "G (deviation " << hf.deviation * 100.0 << "%)\n";
  os << tail.str();
}

// One record per layer: name<TAB>params<TAB>macs.
inline void write_report_tsv(std::ostream& os, const CostReport& r) {
  os << "name\tparams\tmacs\n";
  for (const auto& l : r.layers) os << l.name << "\t" << l.params << "\t" << l.macs << "\n";
}

inline void print_scaling(std::ostream& os, const ScalingReport& rep) {
  os << std::setw(4) << "K" << std::setw(14) << "strip_params" << std::setw(14) << "full_params" << std::setw(16)
     << "strip_macs" << std::setw(16) << "full_macs" << std::setw(10) << "ratio" << "\n";
  for (const auto& r : rep.rows) {
    std::ostringstream ratio;
    ratio << std::fixed << std::setprecision(3)
          << static_cast<double>(r.full_params) / static_cast<double>(r.strip_params);
    os << std::setw(4) << r.k << std::setw(14) << r.strip_params << std::setw(14) << r.full_params << std::setw(16)
       << r.strip_macs << std::setw(16) << r.full_macs << std::setw(10) << ratio.str() << "\n";
  }
  std::ostringstream tail;
  tail << std::fixed << std::setprecision(4);
  tail << "growth exponent (params): strip " << rep.strip_param_exponent << ", full " << rep.full_param_exponent
       << "\n";
  tail << "growth exponent (MACs):   strip " << rep.strip_mac_exponent << ", full " << rep.full_mac_exponent << "\n";
  os << tail.str();
}

}  // namespace stripdet
