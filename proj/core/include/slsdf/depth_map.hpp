#pragma once

#include <cmath>
#include <string>

#include "slsdf/common.hpp"

namespace slsdf {

/// Per-camera-pixel metric depth (camera-frame z, meters). Invalid pixels
/// carry a NaN sentinel. z_near/z_far declare the valid depth range the
/// producer enforced.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // row-major, NaN = invalid
  double z_near = 0, z_far = 0;
  std::string source = "unknown";  // neural | neural-expected | gray-code | phase-gt | simulator

  DepthMap() = default;
  DepthMap(int w, int h, double zn, double zf, std::string src)
      : width(w), height(h),
        depth(static_cast<size_t>(w) * h, std::numeric_limits<float>::quiet_NaN()),
        z_near(zn), z_far(zf), source(std::move(src)) {}

  float& at(int x, int y) { return depth[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return depth[static_cast<size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return std::isfinite(at(x, y)); }
  size_t valid_count() const;
};

void save_depth_map(const std::string& path, const DepthMap& map);
DepthMap load_depth_map(const std::string& path);

struct DepthMetrics {
  double mean_l1 = 0;   // meters, over pixels valid in both maps
  double rmse = 0;      // meters, same mask
  double coverage = 0;  // fraction of truth-valid pixels valid in the estimate
  size_t shared_valid = 0;
  ImageF error_map;  // |estimate - truth|, NaN where not shared-valid
};

/// Mean absolute depth error over pixels valid in BOTH maps, plus coverage of
/// the truth's valid set. Throws DomainError on resolution mismatch.
DepthMetrics mean_l1(const DepthMap& estimate, const DepthMap& truth);

}  // namespace slsdf
