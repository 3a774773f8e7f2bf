#pragma once

#include <iosfwd>

#include "slsdf/optimizer.hpp"
#include "slsdf/render.hpp"
#include "slsdf/scene.hpp"

namespace slsdf {

struct LossWeights {
  double lambda_sc = 1.0;   // applied after the phase-1 iterations
  double lambda_reg = 0.1;
  bool use_rendered = true; // lambda_rc in {0,1}; off only for ablations
};

struct TrainConfig {
  int batch_rays = 512;       // M
  int iterations = 1000;
  int phase1_iterations = 250;  // lambda_sc forced to 0 below this
  int k_coarse = 32;
  int k_fine = 16;
  WeightMode weight_mode = WeightMode::Alpha;  // see the weight-mode note in README
  LossWeights loss;
  AdamConfig adam;
  double b_floor = 0.02;      // rays drawn only where fringe contrast exceeds this
  double s_lr_scale = 10.0;   // sharpness step multiplier (the NeuS exp(10v) convention)
  double z_near = 0.5;        // camera-frame depth slab, meters
  double z_far = 1.0;
  uint64_t seed = 1;
  int workers = 0;            // 0 = hardware concurrency
  int chunk_rays = 16;        // tape granularity; results are chunk-count invariant

  void validate() const;
};

struct LossReport {
  int iteration = 0;
  int pattern_count = 0;
  double l_rc = 0, l_sc = 0, l_reg = 0, total = 0;
  double inv_s = 0;
  double wall_ms = 0;
};

// Plain loss helpers, shared with tests/oracles. Matrices are (rays x patterns).
double loss_rc(const ad::Mat& rendered, const ad::Mat& captured);
double loss_sc(const ad::Mat& surface, const ad::Mat& captured);
/// Mean (|grad| - 1)^2 over rows of a (samples x 3) gradient matrix.
double loss_reg(const ad::Mat& gradients);

/// Owns the network, optimizer state and the capture/pattern pairing for one
/// training run. One trainer = one writer; rays render and differentiate on
/// independent per-chunk tapes, gradients reduce in fixed chunk order.
class Trainer {
 public:
  Trainer(SdfNetwork net, SceneBox box, DeviceModel camera, DeviceModel projector,
          CaptureSet captures, PatternSet patterns, TrainConfig cfg);

  /// One optimizer step; throws NumericError on a non-finite loss.
  LossReport step();

  /// Increment the pattern/image count mid-run: a/b maps are re-estimated
  /// over the enlarged set, optimizer state is preserved.
  void add_pattern(Pattern pattern, ImageF image);

  const SdfNetwork& network() const { return net_; }
  SdfNetwork& network() { return net_; }
  const SceneBox& box() const { return box_; }
  int iteration() const { return iteration_; }
  int pattern_count() const { return static_cast<int>(patterns_.patterns.size()); }
  const TrainConfig& config() const { return cfg_; }
  const CaptureSet& captures() const { return captures_; }
  /// Flat gradient from the most recent step (checkpoint parameter order).
  const Eigen::VectorXd& last_gradient() const { return last_grad_; }

  /// Dump the next step's first chunk tape as a plain-text op list.
  void debug_dump_next_tape(std::ostream* os) { debug_dump_ = os; }

  static void write_csv_header(std::ostream& os);
  static void append_csv(std::ostream& os, const LossReport& r);

 private:
  void rebuild_valid_pixels();

  SdfNetwork net_;
  SceneBox box_;
  DeviceModel camera_, projector_;
  CaptureSet captures_;
  PatternSet patterns_;
  TrainConfig cfg_;
  Adam adam_;
  std::vector<int> valid_pixels_;
  int iteration_ = 0;
  Eigen::VectorXd last_grad_;
  std::ostream* debug_dump_ = nullptr;
};

}  // namespace slsdf
