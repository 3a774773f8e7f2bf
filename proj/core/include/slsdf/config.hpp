#pragma once

#include "slsdf/pattern.hpp"
#include "slsdf/trainer.hpp"

namespace slsdf {

struct PatternSpec {
  std::string kind = "random-multiscale";  // random-multiscale | gray-code | phase-gt
  std::vector<int> scales = {20, 10, 5};
  int per_scale = 2;
  int budget = 0;  // >0: first `budget` patterns cycling through the scales
  uint64_t seed = 7;
  double blur_sigma = 1.0;
  int vertical_tiles = 1;
  int gray_bits = 5;
  bool gray_inverse = false;
  double phase_wavelength = 16.0;
};

/// Everything one experiment run depends on. Presets fill the defaults, a
/// config file overrides them, CLI flags override both; the resolved result
/// is written next to the outputs as a loadable snapshot.
struct ExperimentConfig {
  std::string preset = "desk";
  std::string calibration_path;
  std::string scene_path;
  PatternSpec patterns;
  NetConfig net;
  TrainConfig train;
  double noise_sigma = -1.0;  // < 0: use the scene file's value
  double init_radius = 0.3;   // geometric init radius, normalized units
  std::string out_dir;
};

ExperimentConfig make_preset(const std::string& name);
ExperimentConfig load_experiment_config(const std::string& path);
void write_resolved_config(const std::string& path, const ExperimentConfig& cfg);

/// Generate the configured pattern set at projector resolution, apply blur,
/// and quantize to the 16-bit export lattice so in-memory grids match their
/// files bit-exactly.
PatternSet build_patterns(const PatternSpec& spec, int width, int height);

/// Budgeted multiscale set: pattern j has scale scales[j % |scales|], so
/// prefixes of increasing budgets share their members (used by the sweep and
/// the incremental schedule).
PatternSet build_budget_multiscale(const PatternSpec& spec, int width, int height, int budget);

}  // namespace slsdf
