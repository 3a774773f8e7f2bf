#pragma once

#include <Eigen/Dense>
#include <string>

#include "slsdf/common.hpp"

namespace slsdf {

struct Intrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
  int width = 0, height = 0;

  void validate() const;
  bool contains(double px, double py) const {
    return px >= -0.5 && px < width - 0.5 && py >= -0.5 && py < height - 0.5;
  }
};

/// Pinhole device. `rotation` maps world to device coordinates,
/// x_device = rotation * x_world + translation.
struct DeviceModel {
  Intrinsics intrinsics;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
  Eigen::Vector3d to_device(const Eigen::Vector3d& world) const {
    return rotation * world + translation;
  }
  void validate(double tol = 1e-9) const;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit length
  double t_near = 0, t_far = 0;

  Eigen::Vector3d at(double t) const { return origin + t * direction; }
};

/// Back-project a pixel to a world-space ray. Bounds are copied as given
/// (ray-parameter bounds). Throws DomainError for pixels outside the image.
Ray pixel_to_ray(const DeviceModel& device, const Eigen::Vector2d& pixel,
                 double t_near, double t_far);

/// Back-project with bounds given as a device-frame depth slab [z_near, z_far];
/// the per-ray parameter bounds become z / dir_z so every sample stays inside
/// the slab and every valid depth lands inside [z_near, z_far].
Ray pixel_to_ray_depth_slab(const DeviceModel& device, const Eigen::Vector2d& pixel,
                            double z_near, double z_far);

/// Perspective projection into device pixel coordinates (the reprojection
/// function pi). Throws GeometryError when the point is at or behind the
/// device plane (device-frame depth <= 1e-9 m).
Eigen::Vector2d project(const DeviceModel& device, const Eigen::Vector3d& point);

/// Device-frame depth (z coordinate) of a world point.
double device_depth(const DeviceModel& device, const Eigen::Vector3d& point);

/// Intersect the camera ray through cam_pixel with the vertical plane of the
/// given projector column; returns camera-frame depth of the intersection.
/// Throws GeometryError when the ray is within 1e-6 rad of the plane.
double triangulate(const DeviceModel& camera, const Eigen::Vector2d& cam_pixel,
                   const DeviceModel& projector, double proj_column);

/// Nearest rotation matrix in Frobenius norm (SVD projection).
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

/// World->device rotation for a device at `from` whose optical axis points at
/// `to`, with world +y kept as the device vertical.
Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to);

struct RigCalibration {
  DeviceModel camera;
  DeviceModel projector;
};

// Calibration file: plain text, one `device camera` and one `device projector`
// block (see FORMATS.md). Rotations off orthonormal by more than 1e-6 are
// rejected; smaller deviations are snapped to the nearest rotation.
RigCalibration load_calibration(const std::string& path);
void save_calibration(const std::string& path, const RigCalibration& rig);

/// The shipped synthetic desk rig: 320x256 camera at the world origin,
/// 320x200 projector 0.2 m to the right, toed in toward (0,0,0.75).
RigCalibration make_desk_rig();

}  // namespace slsdf
