#pragma once

#include <functional>

#include "slsdf/depth_map.hpp"
#include "slsdf/render.hpp"

namespace slsdf {

/// Batched field evaluation over normalized points; the extraction routines
/// are generic over it so analytic fields test the same code path.
using SdfBatchFn = std::function<Eigen::VectorXd(const ad::Mat&)>;

/// Depth by per-ray root finding: march samples_per_ray uniform points,
/// locate the first positive-to-negative sign change of f and refine it with
/// 30 bisection steps; rays without a crossing are invalid.
DepthMap extract_depth(const SdfBatchFn& f, const SceneBox& box, const DeviceModel& camera,
                       double z_near, double z_far, int samples_per_ray = 64, int workers = 0);
DepthMap extract_depth(const SdfNetwork& net, const SceneBox& box, const DeviceModel& camera,
                       double z_near, double z_far, int samples_per_ray = 64, int workers = 0);

/// Depth from the expected surface point under the rendering weights;
/// invalid when the accumulated weight is below 1e-3.
DepthMap extract_depth_expected(const SdfBatchFn& f, double s, const SceneBox& box,
                                const DeviceModel& camera, double z_near, double z_far,
                                WeightMode mode, int samples_per_ray = 64, int workers = 0);
DepthMap extract_depth_expected(const SdfNetwork& net, const SceneBox& box,
                                const DeviceModel& camera, double z_near, double z_far,
                                WeightMode mode, int samples_per_ray = 64, int workers = 0);

}  // namespace slsdf
