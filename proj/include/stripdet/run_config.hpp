#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stripdet/config.hpp"

namespace stripdet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model configuration plus run paths and seed, read from a `key = value`
// document. '#' starts a comment. Anchors are given as
//   anchor.<Class> = width, length, height, z_center, match_iou, unmatch_iou
// and replace the default anchor set when present.
struct RunConfig {
  ModelConfig model = reference_config();
  std::string points;
  std::string weights;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> defaulted;  // keys not present in the document
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return std::stoull(v);
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v, std::size_t n) {
  const auto parts = split_list(v);
  if (parts.size() != n) {
    throw ConfigError("config: key '" + key + "' expects " + std::to_string(n) + " comma-separated values");
  }
  std::vector<double> out;
  for (const auto& p : parts) out.push_back(to_double(key, p));
  return out;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    auto count = [&t](const std::string& key, auto member) {
      t[key] = {[key, member](RunConfig& c, const std::string& v) { member(c) = to_count(key, v); },
                [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
    };
    auto real = [&t](const std::string& key, auto member) {
      t[key] = {[key, member](RunConfig& c, const std::string& v) { member(c) = to_double(key, v); },
                [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }};
    };
    auto triple = [&t](const std::string& key, auto member) {
      t[key] = {[key, member](RunConfig& c, const std::string& v) {
                  const auto parts = split_list(v);
                  if (parts.size() != 3) throw ConfigError("config: key '" + key + "' expects 3 values");
                  for (std::size_t i = 0; i < 3; ++i) member(c)[i] = to_count(key, parts[i]);
                },
                [member](const RunConfig& c) {
                  const auto& a = member(const_cast<RunConfig&>(c));
                  return std::to_string(a[0]) + ", " + std::to_string(a[1]) + ", " + std::to_string(a[2]);
                }};
    };
    auto range = [&t](const std::string& key, auto member) {
      t[key] = {[key, member](RunConfig& c, const std::string& v) {
                  const auto d = to_doubles(key, v, 2);
                  member(c) = {d[0], d[1]};
                },
                [member](const RunConfig& c) {
                  const auto& r = member(const_cast<RunConfig&>(c));
                  return fmt(r.first) + ", " + fmt(r.second);
                }};
    };
    auto text = [&t](const std::string& key, auto member) {
      t[key] = {[member](RunConfig& c, const std::string& v) { member(c) = v; },
                [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
    };

    count("c0", [](RunConfig& c) -> std::size_t& { return c.model.c0; });
    triple("stage_channels", [](RunConfig& c) -> std::array<std::size_t, 3>& { return c.model.stage_channels; });
    triple("stage_depths", [](RunConfig& c) -> std::array<std::size_t, 3>& { return c.model.stage_depths; });
    count("k", [](RunConfig& c) -> std::size_t& { return c.model.k; });
    count("head_channels", [](RunConfig& c) -> std::size_t& { return c.model.head_channels; });
    range("grid.x_range", [](RunConfig& c) -> Range& { return c.model.grid.x_range; });
    range("grid.y_range", [](RunConfig& c) -> Range& { return c.model.grid.y_range; });
    range("grid.z_range", [](RunConfig& c) -> Range& { return c.model.grid.z_range; });
    real("grid.pillar_dx", [](RunConfig& c) -> double& { return c.model.grid.pillar_dx; });
    real("grid.pillar_dy", [](RunConfig& c) -> double& { return c.model.grid.pillar_dy; });
    count("grid.max_points_per_pillar", [](RunConfig& c) -> std::size_t& { return c.model.grid.max_points_per_pillar; });
    count("grid.max_pillars", [](RunConfig& c) -> std::size_t& { return c.model.grid.max_pillars; });
    real("loss.w_cls", [](RunConfig& c) -> double& { return c.model.loss_weights.cls; });
    real("loss.w_bbox", [](RunConfig& c) -> double& { return c.model.loss_weights.bbox; });
    real("loss.w_dir", [](RunConfig& c) -> double& { return c.model.loss_weights.dir; });
    real("focal.alpha", [](RunConfig& c) -> double& { return c.model.focal_alpha; });
    real("focal.gamma", [](RunConfig& c) -> double& { return c.model.focal_gamma; });
    real("smooth_l1.beta", [](RunConfig& c) -> double& { return c.model.smooth_l1_beta; });
    real("score_threshold", [](RunConfig& c) -> double& { return c.model.score_threshold; });
    real("nms_iou_threshold", [](RunConfig& c) -> double& { return c.model.nms_iou_threshold; });
    count("pre_nms_max", [](RunConfig& c) -> std::size_t& { return c.model.pre_nms_max; });
    count("max_detections", [](RunConfig& c) -> std::size_t& { return c.model.max_detections; });
    real("train.lr", [](RunConfig& c) -> double& { return c.model.train.lr; });
    real("train.weight_decay", [](RunConfig& c) -> double& { return c.model.train.weight_decay; });
    real("train.clip_norm", [](RunConfig& c) -> double& { return c.model.train.clip_norm; });
    count("train.steps", [](RunConfig& c) -> std::size_t& { return c.model.train.steps; });
    text("points", [](RunConfig& c) -> std::string& { return c.points; });
    text("weights", [](RunConfig& c) -> std::string& { return c.weights; });
    text("out", [](RunConfig& c) -> std::string& { return c.out; });
    count("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    return t;
  }();
  return table;
}

inline std::string format_anchor(const AnchorSpec& a) {
  return fmt(a.width) + ", " + fmt(a.length) + ", " + fmt(a.height) + ", " + fmt(a.z_center) + ", " +
         fmt(a.match_iou) + ", " + fmt(a.unmatch_iou);
}

}  // namespace config_detail

// Parses a config document. `base` selects the starting defaults ("reference"
// or "toy") and may itself be set in the document as the first key.
inline RunConfig parse_run_config(const std::string& text) {
  using namespace config_detail;
  RunConfig cfg;
  std::map<std::string, bool> seen;
  std::vector<AnchorSpec> anchors;
  bool base_allowed = true;

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    seen[key] = true;

    if (key == "base") {
      if (!base_allowed) throw ConfigError("config: 'base' must come before other keys");
      if (value == "reference") {
        cfg.model = reference_config();
      } else if (value == "toy") {
        cfg.model = toy_config();
      } else {
        throw ConfigError("config: unknown base '" + value + "' (expected reference or toy)");
      }
      continue;
    }
    base_allowed = false;

    if (key.rfind("anchor.", 0) == 0) {
      const auto v = to_doubles(key, value, 6);
      AnchorSpec a;
      a.class_name = key.substr(7);
      a.width = v[0];
      a.length = v[1];
      a.height = v[2];
      a.z_center = v[3];
      a.match_iou = v[4];
      a.unmatch_iou = v[5];
      anchors.push_back(a);
      continue;
    }
    const auto it = fields().find(key);
    if (it == fields().end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    it->second.set(cfg, value);
  }
  if (!anchors.empty()) cfg.model.anchors = anchors;
  for (const auto& [key, field] : fields()) {
    if (!seen.count(key)) cfg.defaulted.push_back(key);
  }
  if (anchors.empty()) cfg.defaulted.push_back("anchor.*");
  try {
    cfg.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

// Writes every key, so the result parses back to the same configuration.
inline std::string format_run_config(const RunConfig& cfg) {
  using namespace config_detail;
  std::ostringstream os;
  for (const auto& [key, field] : fields()) os << key << " = " << field.get(cfg) << "\n";
  for (const auto& a : cfg.model.anchors) os << "anchor." << a.class_name << " = " << format_anchor(a) << "\n";
  return os.str();
}

}  // namespace stripdet
