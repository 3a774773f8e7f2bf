#include "slsdf/depth_map.hpp"

namespace slsdf {

size_t DepthMap::valid_count() const {
  size_t n = 0;
  for (float v : depth)
    if (std::isfinite(v)) ++n;
  return n;
}

void save_depth_map(const std::string& path, const DepthMap& map) {
  ImageF img(map.width, map.height);
  img.data.assign(map.depth.begin(), map.depth.end());
  FloatMapHeader hdr;
  hdr.width = map.width;
  hdr.height = map.height;
  hdr.t_near = map.z_near;
  hdr.t_far = map.z_far;
  hdr.source = map.source;
  write_float_map(path, img, hdr);
}

DepthMap load_depth_map(const std::string& path) {
  FloatMapHeader hdr;
  ImageF img = read_float_map(path, &hdr);
  DepthMap map(hdr.width, hdr.height, hdr.t_near, hdr.t_far, hdr.source);
  map.depth.assign(img.data.begin(), img.data.end());
  return map;
}

DepthMetrics mean_l1(const DepthMap& estimate, const DepthMap& truth) {
  if (estimate.width != truth.width || estimate.height != truth.height)
    throw DomainError("depth map resolutions differ");
  DepthMetrics m;
  m.error_map = ImageF(truth.width, truth.height, std::numeric_limits<float>::quiet_NaN());
  double sum_abs = 0, sum_sq = 0;
  size_t truth_valid = 0, both = 0;
  for (int y = 0; y < truth.height; ++y)
    for (int x = 0; x < truth.width; ++x) {
      if (!truth.valid(x, y)) continue;
      ++truth_valid;
      if (!estimate.valid(x, y)) continue;
      ++both;
      const double e = std::abs(static_cast<double>(estimate.at(x, y)) - truth.at(x, y));
      m.error_map.at(x, y) = static_cast<float>(e);
      sum_abs += e;
      sum_sq += e * e;
    }
  m.shared_valid = both;
  if (both > 0) {
    m.mean_l1 = sum_abs / static_cast<double>(both);
    m.rmse = std::sqrt(sum_sq / static_cast<double>(both));
  }
  m.coverage = truth_valid > 0 ? static_cast<double>(both) / static_cast<double>(truth_valid) : 0.0;
  return m;
}

}  // namespace slsdf
