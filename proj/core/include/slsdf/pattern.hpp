#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slsdf/common.hpp"

namespace slsdf {

enum class PatternKind { RandomBinary, GrayCode, GrayCodeInverse, PhaseShift };

const char* pattern_kind_name(PatternKind k);
PatternKind pattern_kind_from_name(const std::string& name);

struct Pattern {
  ImageF grid;  // intensities in [0,1], projector resolution
  PatternKind kind = PatternKind::RandomBinary;
  int scale = 0;          // unit square side in pixels (random-binary)
  int bit = -1;           // bit index, 0 = most significant (gray code)
  int shift = 0;          // fringe width = 2^shift columns (gray code)
  double phase = 0.0;     // phase offset in radians (phase-shift)
  double wavelength = 0;  // pixels (phase-shift)
};

struct PatternSet {
  std::vector<Pattern> patterns;
  uint64_t rng_seed = 0;
  double blur_sigma = 0.0;  // applied blur, for the manifest

  int width() const { return patterns.empty() ? 0 : patterns.front().grid.width; }
  int height() const { return patterns.empty() ? 0 : patterns.front().grid.height; }
  size_t count() const { return patterns.size(); }
};

uint32_t gray_encode(uint32_t n);
uint32_t gray_decode(uint32_t g);

/// Multi-scale random binary patterns: the projector plane is tiled with
/// squares of each scale, every square independently 0 or 1 with p = 1/2.
/// Emits `per_scale` patterns per scale, grouped coarse-to-fine.
/// vertical_tiles > 1 generates height/vertical_tiles rows and repeats them.
PatternSet gen_random_multiscale(int width, int height, const std::vector<int>& scales,
                                 int per_scale, uint64_t seed, int vertical_tiles = 1);

/// One random-binary pattern identified by (scale index, index within scale).
/// Content depends only on (seed, scale, index), so pattern sets of different
/// budgets generated from one seed share their common members.
Pattern gen_random_pattern(int width, int height, int scale, int scale_index,
                           int index_in_scale, uint64_t seed, int vertical_tiles = 1);

/// Gray-code column patterns, bit 0 = most significant. Column c gets the
/// codeword gray(c >> shift) with shift = ceil(log2(width)) - num_bits.
/// with_inverse interleaves each pattern with its complement.
PatternSet gen_gray_code(int width, int height, int num_bits, bool with_inverse);

/// steps-shift sinusoid set: pattern k has intensity
/// 0.5 + 0.5*cos(2*pi*column/wavelength + 2*pi*k/steps).
PatternSet gen_phase_shift(int width, int height, double wavelength, int steps);

/// Separable Gaussian blur with reflective borders; sigma = 0 is the identity.
Pattern blur(const Pattern& p, double sigma);
PatternSet blur(const PatternSet& set, double sigma);

struct SampleResult {
  double value = 0;
  double du = 0, dv = 0;  // analytic gradient of the bilinear surface
  bool out_of_bounds = false;
};

/// Bilinear lookup with texel centers at integer coordinates. Out-of-bounds
/// coordinates clamp to the border (flagged, gradient frozen at zero across
/// the clamped axis).
SampleResult sample_bilinear(const ImageF& grid, double u, double v);

// Pattern set on disk: one 16-bit PGM per pattern plus a plain-text manifest
// (see FORMATS.md). Grids are quantized to the file's 16-bit lattice at save
// time so memory and disk stay bit-exact.
void save_pattern_set(const std::string& dir, PatternSet& set);
PatternSet load_pattern_set(const std::string& dir);

}  // namespace slsdf
