// stripdet command-line driver.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stripdet/analyzer.hpp"
#include "stripdet/gradcheck_suite.hpp"
#include "stripdet/io.hpp"
#include "stripdet/model.hpp"
#include "stripdet/run_config.hpp"
#include "stripdet/train.hpp"

namespace {

using namespace stripdet;

constexpr int kUsage = 2;
constexpr int kFailure = 1;

// Operational failure with a message already suitable for the user.
struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_config(const std::string& path) {
  RunConfig cfg = path.empty() ? parse_run_config("") : load_run_config(path);
  if (!cfg.defaulted.empty()) {
    std::cerr << "note: using defaults for";
    for (const auto& k : cfg.defaulted) std::cerr << " " << k;
    std::cerr << "\n";
  }
  return cfg;
}

void write_detections(std::ostream& os, const std::vector<Detection>& dets, const ModelConfig& cfg) {
  const auto names = cfg.class_names();
  os << std::setprecision(6);
  for (const Detection& d : dets) {
    os << names.at(d.label) << " " << d.score << " " << d.box.x << " " << d.box.y << " " << d.box.z << " " << d.box.w
       << " " << d.box.l << " " << d.box.h << " " << d.box.yaw << "\n";
  }
}

int cmd_analyze(const std::string& config, std::optional<std::size_t> bev_h, std::optional<std::size_t> bev_w,
                const std::string& report) {
  const RunConfig cfg = load_config(config);
  const std::size_t h = bev_h.value_or(cfg.model.grid.height());
  const std::size_t w = bev_w.value_or(cfg.model.grid.width());
  const CostReport r = count_costs(cfg.model, h, w);
  std::cout << "bev " << h << "x" << w << "\n";
  print_report(std::cout, r);
  if (!report.empty()) {
    std::ofstream out(report);
    if (!out) throw Failure("cannot write report " + report);
    write_report_tsv(out, r);
  }
  return 0;
}

int cmd_scaling(const std::string& config, const std::vector<std::size_t>& ks) {
  const RunConfig cfg = load_config(config);
  print_scaling(std::cout, scaling_study(cfg.model, ks));
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradcheck_suite(seed, seeds);
  bool ok = true;
  for (const auto& c : results) {
    const bool pass = c.max_error <= 1e-5;
    ok = ok && pass;
    std::cout << (pass ? "ok   " : "FAIL ") << std::left << std::setw(34) << c.name << std::scientific
              << std::setprecision(3) << c.max_error << std::defaultfloat << "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << results.size() << " cases x " << seeds << " seeds in " << std::fixed << std::setprecision(2) << secs
            << " s\n";
  return ok ? 0 : kFailure;
}

int cmd_infer(const std::string& config, std::string weights, std::string points, std::string out) {
  const RunConfig cfg = load_config(config);
  if (weights.empty()) weights = cfg.weights;
  if (points.empty()) points = cfg.points;
  if (out.empty()) out = cfg.out;
  if (weights.empty() || points.empty() || out.empty()) {
    throw Failure("infer needs weights, points and out (flags or config keys)");
  }
  auto params = DetectorParams<float>::zeros(cfg.model);
  assign_tensors<float>(params, load_weights(weights));
  const PointCloud pc = read_kitti_bin(points);
  PostprocessStats stats;
  const auto dets = detect(pc, cfg.model, params, &stats);
  if (stats.dropped_nonfinite) std::cerr << "warning: dropped " << stats.dropped_nonfinite << " non-finite boxes\n";
  std::ofstream os(out);
  if (!os) throw Failure("cannot write " + out);
  write_detections(os, dets, cfg.model);
  std::cout << dets.size() << " detections written to " << out << "\n";
  return 0;
}

int cmd_init(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  const RunConfig cfg = load_config(config);
  Rng rng = Rng(seed.value_or(cfg.seed)).split("init");
  const auto params = DetectorParams<float>::init(cfg.model, rng);
  save_weights<float>(params, out);
  std::cout << params.scalar_count() << " parameters written to " << out << "\n";
  return 0;
}

int cmd_train_toy(const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::size_t> steps) {
  RunConfig cfg = config.empty() ? parse_run_config("base = toy\n") : load_config(config);
  const std::uint64_t s = seed.value_or(cfg.seed);
  const std::size_t n = steps.value_or(cfg.model.train.steps);
  ToyRun run = train_toy<float>(cfg.model, s, n, 2, &std::cout);
  const double first = run.losses.front().total, last = run.losses.back().total;
  std::cout << std::setprecision(6) << "first loss " << first << ", final loss " << last << " (" << 100.0 * last / first
            << "% of first)\n";
  std::cout << "detections:\n";
  write_detections(std::cout, run.detections, cfg.model);
  bool all = true;
  for (std::size_t g = 0; g < run.scene.boxes.size(); ++g) {
    double best = 0;
    for (const Detection& d : run.detections) best = std::max(best, rotated_iou_bev(d.box, run.scene.boxes[g]));
    std::cout << "gt " << g << " best IoU " << best << "\n";
    all = all && best >= 0.7;
  }
  std::cout << std::fixed << std::setprecision(1) << "elapsed " << run.seconds << " s\n";
  return (all && last <= 0.1 * first) ? 0 : kFailure;
}

int cmd_bench(const std::string& config, std::size_t runs, const std::string& points) {
  const RunConfig cfg = load_config(config);
  Rng rng = Rng(cfg.seed).split("init");
  const auto params = DetectorParams<float>::init(cfg.model, rng);
  const PointCloud pc = points.empty() ? synth_scene(cfg.seed, 4, cfg.model.grid).cloud : read_kitti_bin(points);
  std::vector<double> ms;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto head = detector_forward(pc, cfg.model, params);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    (void)head;
  }
  double mean = 0;
  for (double v : ms) mean += v;
  mean /= static_cast<double>(ms.size());
  double var = 0;
  for (double v : ms) var += (v - mean) * (v - mean);
  const double sd = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  std::cout << std::fixed << std::setprecision(2) << "forward " << cfg.model.grid.height() << "x"
            << cfg.model.grid.width() << ", " << runs << " runs: mean " << mean << " ms, sd " << sd << " ms\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stripdet: strip-attention pillar detector"};
  app.require_subcommand(1);

  std::string config, weights, points, out, report;
  std::optional<std::size_t> bev_h, bev_w, steps;
  std::optional<std::uint64_t> seed;
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 10, runs = 5;
  std::vector<std::size_t> ks{3, 7, 11, 21};

  auto* analyze = app.add_subcommand("analyze", "per-layer parameter and MAC table");
  analyze->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  analyze->add_option("--bev-h", bev_h, "BEV height in cells (default: grid)");
  analyze->add_option("--bev-w", bev_w, "BEV width in cells (default: grid)");
  analyze->add_option("--report", report, "write name/params/macs records here");

  auto* scaling = app.add_subcommand("scaling", "strip pair vs full kernel cost growth");
  scaling->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  scaling->add_option("--k", ks, "odd kernel sizes")->delimiter(',');

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc->add_option("--seed", gc_seed, "base seed");
  gc->add_option("--seeds", gc_seeds, "number of seeds per case");

  auto* infer = app.add_subcommand("infer", "detect objects in a KITTI .bin scan");
  infer->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  infer->add_option("--weights", weights, "weight file");
  infer->add_option("--points", points, "KITTI velodyne .bin");
  infer->add_option("--out", out, "detection output file");

  auto* init = app.add_subcommand("init", "write randomly initialized weights");
  init->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  init->add_option("--seed", seed, "seed (default: config seed)");
  init->add_option("--out", out, "weight file")->required();

  auto* train = app.add_subcommand("train-toy", "overfit one synthetic scene");
  train->add_option("--config", config, "config file (default: toy settings)")->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "scene and init seed");
  train->add_option("--steps", steps, "optimizer steps");

  auto* bench = app.add_subcommand("bench", "time forward passes");
  bench->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  bench->add_option("--runs", runs, "number of timed passes")->check(CLI::PositiveNumber);
  bench->add_option("--points", points, "KITTI .bin (default: synthetic scene)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*analyze) return cmd_analyze(config, bev_h, bev_w, report);
    if (*scaling) return cmd_scaling(config, ks);
    if (*gc) return cmd_gradcheck(gc_seed, gc_seeds);
    if (*infer) return cmd_infer(config, weights, points, out);
    if (*init) return cmd_init(config, seed, out);
    if (*train) return cmd_train_toy(config, seed, steps);
    if (*bench) return cmd_bench(config, runs, points);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
