#pragma once

#include "slsdf/depth_map.hpp"
#include "slsdf/geometry.hpp"
#include "slsdf/pattern.hpp"

namespace slsdf {

/// Per camera pixel: sub-pixel projector column, or NaN where decoding
/// failed; confidence is the decision margin of the weakest bit.
struct Correspondence {
  int width = 0, height = 0;
  std::vector<float> column;      // NaN = invalid
  std::vector<float> confidence;

  Correspondence() = default;
  Correspondence(int w, int h)
      : width(w), height(h),
        column(static_cast<size_t>(w) * h, std::numeric_limits<float>::quiet_NaN()),
        confidence(static_cast<size_t>(w) * h, 0.f) {}
  float& col(int x, int y) { return column[static_cast<size_t>(y) * width + x]; }
  float col(int x, int y) const { return column[static_cast<size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return std::isfinite(col(x, y)); }
};

/// Fixed-threshold Gray-code decoding: bit k = [I_k > a + b/2], Gray decode,
/// then sub-pixel interpolation between fringe transitions along each row.
/// Pixels with b below the floor are invalid.
Correspondence decode_gray_fixed(const std::vector<ImageF>& images, const PatternSet& meta,
                                 const ImageF& a_map, const ImageF& b_map,
                                 double b_floor = 0.02);

/// Inverse-pair Gray-code decoding: images alternate pattern/inverse and
/// bit k = [I_k > I_k_inverse]; margin = min_k |I_k - I_k_inv|.
Correspondence decode_gray_inverse(const std::vector<ImageF>& images, const PatternSet& meta,
                                   double b_floor = 0.02);

struct WrappedPhase {
  ImageF phase;       // (-pi, pi]
  ImageF modulation;  // fringe amplitude, the decode confidence
};

/// 4-step phase decode: phi = atan2(I3 - I1, I0 - I2).
WrappedPhase decode_phase_shift(const std::vector<ImageF>& images, double wavelength);

/// Absolute column from wrapped phase + Gray-code fringe index: the period
/// is chosen to minimize |column - gray column| (half-period consistency
/// correction); disagreement beyond one period invalidates the pixel.
Correspondence unwrap_with_gray(const WrappedPhase& wrapped, const Correspondence& gray,
                                double wavelength, int projector_width);

/// Triangulate every valid correspondence into camera-frame depth.
DepthMap correspondence_to_depth(const Correspondence& corr, const DeviceModel& camera,
                                 const DeviceModel& projector, double z_near, double z_far,
                                 const std::string& source_tag);

/// Outlier pass standing in for manual ground-truth cleanup: drops pixels
/// whose column deviates from the window median by more than max_dev or
/// whose confidence is below min_confidence.
Correspondence median_margin_filter(const Correspondence& corr, int radius, double max_dev,
                                    double min_confidence);

}  // namespace slsdf
