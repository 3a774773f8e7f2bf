#pragma once

#include <Eigen/Dense>
#include <optional>
#include <variant>

#include "slsdf/depth_map.hpp"
#include "slsdf/geometry.hpp"
#include "slsdf/pattern.hpp"

namespace slsdf {

// Analytic scene primitives, combined by min-union. Each primitive SDF is
// exact, so the union is a valid (lower-bound) sphere-tracing distance.
struct PlanePrim {
  Eigen::Vector3d normal;  // unit
  double offset = 0;       // sdf(x) = normal . x - offset
};
struct SpherePrim {
  Eigen::Vector3d center;
  double radius = 0;
};
struct BoxPrim {
  Eigen::Vector3d center;
  Eigen::Vector3d half_extents;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> box
};
using Primitive = std::variant<PlanePrim, SpherePrim, BoxPrim>;

struct AnalyticScene {
  std::vector<Primitive> primitives;
  double ambient = 0.15;    // a0, background light level
  double contrast = 0.7;    // b0, fringe contrast of lit surfaces
  double noise_sigma = 0.0; // default capture noise, intensity units
};

double scene_sdf(const AnalyticScene& scene, const Eigen::Vector3d& point);

/// Outward unit normal from central differences of the scene SDF.
Eigen::Vector3d scene_normal(const AnalyticScene& scene, const Eigen::Vector3d& point,
                             double h = 1e-6);

struct TraceHit {
  double t = 0;
  Eigen::Vector3d point;
};

/// March t <- t + sdf from ray.t_near until |sdf| < 1e-6 m or t > t_far.
std::optional<TraceHit> sphere_trace(const AnalyticScene& scene, const Ray& ray);

struct CaptureSet {
  std::vector<ImageF> images;  // camera frames, one per pattern, values in [0,1]
  ImageF a_map;                // per-pixel background level (Eq. estimate from images)
  ImageF b_map;                // per-pixel fringe contrast
  double noise_sigma = 0.0;
};

/// a = per-pixel min over images, b = per-pixel max - min. Needs >= 2 images.
std::pair<ImageF, ImageF> estimate_ab(const std::vector<ImageF>& images);

struct SimulationResult {
  CaptureSet captures;
  DepthMap gt_depth;   // camera-frame z from sphere tracing, NaN on miss
  ImageF gt_column;    // true projector column per camera pixel, NaN if unlit/miss
  ImageF lit_mask;     // 1 where the projector directly lights the surface
};

/// Synthesize captured images I_i = a0 + b0 * P_i(pi(x)) + noise at the
/// sphere-traced surface, with projector shadowing; misses read a0 + noise.
/// a/b maps in the result are re-estimated from the images, not copied.
SimulationResult render_captures(const AnalyticScene& scene, const DeviceModel& camera,
                                 const DeviceModel& projector, const PatternSet& patterns,
                                 double noise_sigma, uint64_t seed,
                                 double z_near = 0.5, double z_far = 1.0, int workers = 0);

// Scene description file: plain text listing primitives and photometric
// constants (see FORMATS.md).
AnalyticScene load_scene(const std::string& path);
void save_scene(const std::string& path, const AnalyticScene& scene);

/// The reference desk scene: a wall plane at z = 0.9 m plus a 7 cm sphere
/// slightly off axis at z = 0.8 m.
AnalyticScene make_reference_scene();

void save_capture_set(const std::string& dir, CaptureSet& captures);
CaptureSet load_capture_set(const std::string& dir);

}  // namespace slsdf
