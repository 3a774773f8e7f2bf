#include "slsdf/decode.hpp"

#include <algorithm>

#include "slsdf/scene.hpp"

namespace slsdf {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct GrayMeta {
  int num_bits = 0;
  int shift = 0;
};

GrayMeta gray_meta(const PatternSet& meta, bool inverse) {
  GrayMeta g;
  for (const Pattern& p : meta.patterns) {
    if (p.kind == PatternKind::GrayCode) {
      ++g.num_bits;
      g.shift = p.shift;
    } else if (p.kind == PatternKind::GrayCodeInverse) {
      if (!inverse) throw ConfigError("decode_gray_fixed: set contains inverse patterns");
    } else {
      throw ConfigError("gray decode: pattern set is not a gray-code set");
    }
  }
  if (g.num_bits == 0) throw ConfigError("gray decode: no gray-code patterns in the set");
  return g;
}

// Integer fringe decode -> sub-pixel column by interpolating between fringe
// transitions along each camera row. A transition between adjacent pixels
// whose fringe indices differ by exactly one pins the boundary column at the
// pixel midpoint; columns between anchors are linear in camera x. Rows or
// spans without anchors fall back to the fringe center.
//
// Columns are texel-centered: texel c spans [c-0.5, c+0.5), so fringe k of
// width fw covers [k*fw - 0.5, (k+1)*fw - 0.5).
Correspondence interpolate_fringes(const std::vector<int>& fringe,
                                   const std::vector<float>& margin, int w, int h,
                                   double fringe_width) {
  Correspondence corr(w, h);
  std::vector<double> anchor_x, anchor_col;
  for (int y = 0; y < h; ++y) {
    anchor_x.clear();
    anchor_col.clear();
    const int row0 = y * w;
    for (int x = 0; x + 1 < w; ++x) {
      const int f0 = fringe[static_cast<size_t>(row0 + x)];
      const int f1 = fringe[static_cast<size_t>(row0 + x + 1)];
      if (f0 < 0 || f1 < 0 || std::abs(f1 - f0) != 1) continue;
      const double boundary = std::max(f0, f1) * fringe_width - 0.5;
      if (!anchor_col.empty() && boundary <= anchor_col.back()) continue;  // keep monotone
      anchor_x.push_back(x + 0.5);
      anchor_col.push_back(boundary);
    }
    size_t seg = 0;
    for (int x = 0; x < w; ++x) {
      const int f = fringe[static_cast<size_t>(row0 + x)];
      if (f < 0) continue;
      // the integer decode bounds the answer to its fringe; interpolation
      // refines within it and falls back to the center when it disagrees
      // (rows crossing a depth discontinuity)
      const double flo = f * fringe_width - 0.5;
      const double fhi = (f + 1) * fringe_width - 0.5;
      double col = 0.5 * (flo + fhi);
      if (anchor_x.size() >= 2) {
        while (seg + 2 < anchor_x.size() && anchor_x[seg + 1] < x) ++seg;
        const double x0 = anchor_x[seg], x1 = anchor_x[seg + 1];
        const double c0 = anchor_col[seg], c1 = anchor_col[seg + 1];
        const double interp = c0 + (c1 - c0) * (x - x0) / (x1 - x0);
        if (interp >= flo && interp <= fhi) col = interp;
      }
      corr.col(x, y) = static_cast<float>(col);
      corr.confidence[static_cast<size_t>(row0 + x)] = margin[static_cast<size_t>(row0 + x)];
    }
  }
  return corr;
}

}  // namespace

Correspondence decode_gray_fixed(const std::vector<ImageF>& images, const PatternSet& meta,
                                 const ImageF& a_map, const ImageF& b_map, double b_floor) {
  const GrayMeta g = gray_meta(meta, false);
  if (images.size() != static_cast<size_t>(g.num_bits))
    throw ConfigError("decode_gray_fixed: image/pattern count mismatch");
  const int w = images[0].width, h = images[0].height;
  std::vector<int> fringe(static_cast<size_t>(w) * h, -1);
  std::vector<float> margin(static_cast<size_t>(w) * h, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t pix = static_cast<size_t>(y) * w + x;
      const double b = b_map.at(x, y);
      if (b <= b_floor) continue;
      const double thr = a_map.at(x, y) + 0.5 * b;
      uint32_t code = 0;
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < g.num_bits; ++k) {
        const double v = images[static_cast<size_t>(k)].at(x, y);
        code = (code << 1) | (v > thr ? 1u : 0u);
        worst = std::min(worst, std::abs(v - thr));
      }
      fringe[pix] = static_cast<int>(gray_decode(code));
      margin[pix] = static_cast<float>(worst);
    }
  return interpolate_fringes(fringe, margin, w, h, std::ldexp(1.0, g.shift));
}

Correspondence decode_gray_inverse(const std::vector<ImageF>& images, const PatternSet& meta,
                                   double b_floor) {
  const GrayMeta g = gray_meta(meta, true);
  if (images.size() % 2 != 0) throw ConfigError("decode_gray_inverse: odd image count");
  if (images.size() != 2 * static_cast<size_t>(g.num_bits))
    throw ConfigError("decode_gray_inverse: image/pattern count mismatch");
  // pairs must alternate pattern/inverse
  for (size_t i = 0; i < meta.patterns.size(); ++i) {
    const PatternKind want = i % 2 == 0 ? PatternKind::GrayCode : PatternKind::GrayCodeInverse;
    if (meta.patterns[i].kind != want)
      throw ConfigError("decode_gray_inverse: images must alternate pattern/inverse");
  }
  const int w = images[0].width, h = images[0].height;
  auto ab = estimate_ab(images);
  std::vector<int> fringe(static_cast<size_t>(w) * h, -1);
  std::vector<float> margin(static_cast<size_t>(w) * h, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t pix = static_cast<size_t>(y) * w + x;
      if (ab.second.at(x, y) <= b_floor) continue;
      uint32_t code = 0;
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < g.num_bits; ++k) {
        const double v = images[static_cast<size_t>(2 * k)].at(x, y);
        const double vi = images[static_cast<size_t>(2 * k + 1)].at(x, y);
        code = (code << 1) | (v > vi ? 1u : 0u);
        worst = std::min(worst, std::abs(v - vi));
      }
      fringe[pix] = static_cast<int>(gray_decode(code));
      margin[pix] = static_cast<float>(worst);
    }
  return interpolate_fringes(fringe, margin, w, h, std::ldexp(1.0, g.shift));
}

WrappedPhase decode_phase_shift(const std::vector<ImageF>& images, double wavelength) {
  if (images.size() != 4) throw ConfigError("decode_phase_shift: expected the 4-step set");
  (void)wavelength;
  const int w = images[0].width, h = images[0].height;
  WrappedPhase out;
  out.phase = ImageF(w, h);
  out.modulation = ImageF(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double s = images[3].at(x, y) - images[1].at(x, y);
      const double c = images[0].at(x, y) - images[2].at(x, y);
      out.phase.at(x, y) = static_cast<float>(std::atan2(s, c));
      out.modulation.at(x, y) = static_cast<float>(0.5 * std::sqrt(s * s + c * c));
    }
  return out;
}

Correspondence unwrap_with_gray(const WrappedPhase& wrapped, const Correspondence& gray,
                                double wavelength, int projector_width) {
  if (wrapped.phase.width != gray.width || wrapped.phase.height != gray.height)
    throw ConfigError("unwrap_with_gray: resolution mismatch");
  Correspondence corr(gray.width, gray.height);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) {
      if (!gray.valid(x, y)) continue;
      const double phi = wrapped.phase.at(x, y);
      double frac = phi / kTwoPi;  // position within the period, [0,1)
      frac -= std::floor(frac);
      const double within = frac * wavelength;
      // Anchor the period on the decoded fringe CENTER: the sub-pixel part
      // comes entirely from the phase, and the center maximizes the margin
      // against the half-period consistency rule (sub-pixel gray estimates
      // can drift within their fringe near depth discontinuities). Fringe k
      // covers texel-centered columns [k*wl - 0.5, (k+1)*wl - 0.5).
      const double k_hat = std::floor((gray.col(x, y) + 0.5) / wavelength);
      const double c_gray = (k_hat + 0.5) * wavelength - 0.5;
      const double period = std::round((c_gray - within) / wavelength);
      const double col = period * wavelength + within;
      if (std::abs(col - c_gray) > 0.5 * wavelength + 1.0) continue;  // inconsistent inputs
      if (col < 0 || col >= projector_width) continue;
      corr.col(x, y) = static_cast<float>(col);
      // confidence: the weaker of the fringe decision margin and the
      // phase modulation; period flips ride on near-zero gray margins
      corr.confidence[static_cast<size_t>(y) * gray.width + x] =
          std::min(wrapped.modulation.at(x, y),
                   gray.confidence[static_cast<size_t>(y) * gray.width + x]);
    }
  return corr;
}

DepthMap correspondence_to_depth(const Correspondence& corr, const DeviceModel& camera,
                                 const DeviceModel& projector, double z_near, double z_far,
                                 const std::string& source_tag) {
  DepthMap map(corr.width, corr.height, z_near, z_far, source_tag);
  for (int y = 0; y < corr.height; ++y)
    for (int x = 0; x < corr.width; ++x) {
      if (!corr.valid(x, y)) continue;
      double depth;
      try {
        depth = triangulate(camera, {double(x), double(y)}, projector, corr.col(x, y));
      } catch (const GeometryError&) {
        continue;
      }
      if (depth < z_near || depth > z_far) continue;
      map.at(x, y) = static_cast<float>(depth);
    }
  return map;
}

Correspondence median_margin_filter(const Correspondence& corr, int radius, double max_dev,
                                    double min_confidence) {
  Correspondence out = corr;
  std::vector<float> window;
  for (int y = 0; y < corr.height; ++y)
    for (int x = 0; x < corr.width; ++x) {
      const size_t pix = static_cast<size_t>(y) * corr.width + x;
      if (!corr.valid(x, y)) continue;
      if (corr.confidence[pix] < min_confidence) {
        out.column[pix] = std::numeric_limits<float>::quiet_NaN();
        continue;
      }
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= corr.width || ny >= corr.height) continue;
          if (corr.valid(nx, ny)) window.push_back(corr.col(nx, ny));
        }
      if (window.size() < 5) continue;
      std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
      const float med = window[window.size() / 2];
      if (std::abs(corr.col(x, y) - med) > max_dev)
        out.column[pix] = std::numeric_limits<float>::quiet_NaN();
    }
  return out;
}

}  // namespace slsdf
