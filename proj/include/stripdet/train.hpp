#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <vector>

#include "stripdet/anchors.hpp"
#include "stripdet/loss.hpp"
#include "stripdet/model.hpp"
#include "stripdet/optim.hpp"
#include "stripdet/synth.hpp"

namespace stripdet {

struct ToyRun {
  SyntheticScene scene;
  std::vector<LossBreakdown> losses;  // one per step, measured before the update
  std::vector<Detection> detections;  // after the final step
  double seconds = 0;
};

// Overfits a freshly initialized detector to one synthetic scene. Every box in
// the scene is labeled with the config's first class.
template <typename T>
ToyRun train_toy(const ModelConfig& cfg, std::uint64_t seed, std::size_t steps, std::size_t n_boxes = 2,
                 std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  ToyRun run;
  run.scene = synth_scene(seed, n_boxes, cfg.grid);

  Rng init_rng = Rng(seed).split("init");
  DetectorParams<T> params = DetectorParams<T>::init(cfg, init_rng);
  const std::vector<Anchor> anchors = generate_anchors(cfg);
  std::vector<LabeledBox> gts;
  for (const Box3D& b : run.scene.boxes) gts.push_back({b, 0});
  const AnchorTargets targets = assign_targets(anchors, gts, cfg.anchors);
  const PillarBatch<T> batch = pillarize<T>(run.scene.cloud, cfg.grid);

  AdamW<T> opt(params.vars(), cfg.train);
  const OneCycle schedule{cfg.train.lr, steps};
  for (std::size_t step = 0; step < steps; ++step) {
    Tape<T> tape;
    LossBreakdown parts;
    Var<T> loss;
    {
      auto rec = tape.record();
      const Var<T> bev = scatter_to_bev(pfn_forward(batch, params.pfn), batch.coords, cfg.grid);
      const HeadOutput<T> head = head_forward(backbone_forward(bev, cfg, params), cfg, params);
      loss = detection_loss(head.cls, head.box, head.dir, anchors, targets, cfg, &parts);
    }
    tape.backward(loss);
    clip_grad_norm(opt.params(), cfg.train.clip_norm);
    opt.step(schedule.lr(step));
    opt.zero_grad();
    run.losses.push_back(parts);
    if (log && (step % 25 == 0 || step + 1 == steps)) {
      *log << "step " << step + 1 << " loss " << parts.total << " cls " << parts.cls << " bbox " << parts.bbox
           << " dir " << parts.dir << "\n";
    }
  }
  run.detections = detect(run.scene.cloud, cfg, params);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace stripdet
