#include "slsdf/geometry.hpp"

#include <fstream>
#include <sstream>

namespace slsdf {

void Intrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw ConfigError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("intrinsics: resolution must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw ConfigError("intrinsics: principal point outside the image");
}

void DeviceModel::validate(double tol) const {
  intrinsics.validate();
  Eigen::Matrix3d e = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (e.cwiseAbs().maxCoeff() > tol)
    throw GeometryError("device rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > tol)
    throw GeometryError("device rotation is not proper (det != +1)");
}

Ray pixel_to_ray(const DeviceModel& device, const Eigen::Vector2d& pixel,
                 double t_near, double t_far) {
  if (!device.intrinsics.contains(pixel.x(), pixel.y()))
    throw DomainError("pixel outside the image rectangle");
  if (!(t_near > 0 && t_near < t_far))
    throw DomainError("ray bounds must satisfy 0 < t_near < t_far");
  const Intrinsics& in = device.intrinsics;
  Eigen::Vector3d dir_dev((pixel.x() - in.cx) / in.fx, (pixel.y() - in.cy) / in.fy, 1.0);
  Ray r;
  r.origin = device.center();
  r.direction = (device.rotation.transpose() * dir_dev).normalized();
  r.t_near = t_near;
  r.t_far = t_far;
  return r;
}

Ray pixel_to_ray_depth_slab(const DeviceModel& device, const Eigen::Vector2d& pixel,
                            double z_near, double z_far) {
  if (!(z_near > 0 && z_near < z_far))
    throw DomainError("depth slab must satisfy 0 < z_near < z_far");
  const Intrinsics& in = device.intrinsics;
  Eigen::Vector3d dir_dev((pixel.x() - in.cx) / in.fx, (pixel.y() - in.cy) / in.fy, 1.0);
  const double inv_dz = dir_dev.norm();  // t = z * |dir_dev| for unit world direction
  return pixel_to_ray(device, pixel, z_near * inv_dz, z_far * inv_dz);
}

Eigen::Vector2d project(const DeviceModel& device, const Eigen::Vector3d& point) {
  Eigen::Vector3d p = device.to_device(point);
  if (p.z() <= 1e-9) throw GeometryError("point at or behind the device plane");
  const Intrinsics& in = device.intrinsics;
  return {in.fx * p.x() / p.z() + in.cx, in.fy * p.y() / p.z() + in.cy};
}

double device_depth(const DeviceModel& device, const Eigen::Vector3d& point) {
  return device.to_device(point).z();
}

double triangulate(const DeviceModel& camera, const Eigen::Vector2d& cam_pixel,
                   const DeviceModel& projector, double proj_column) {
  Ray ray = pixel_to_ray(camera, cam_pixel, 1e-6, 1.0);
  // Projector-frame plane of column u: x_p - (u - cx)/fx * z_p = 0.
  const Intrinsics& pi = projector.intrinsics;
  Eigen::Vector3d n_dev(1.0, 0.0, -(proj_column - pi.cx) / pi.fx);
  Eigen::Vector3d n = (projector.rotation.transpose() * n_dev).normalized();
  const double denom = n.dot(ray.direction);
  if (std::abs(denom) < 1e-6) throw GeometryError("camera ray parallel to the column plane");
  const Eigen::Vector3d proj_center = projector.center();
  const double t = n.dot(proj_center - ray.origin) / denom;
  if (t <= 0) throw GeometryError("triangulated point behind the camera");
  return device_depth(camera, ray.at(t));
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  Eigen::Vector3d fwd = (to - from).normalized();
  Eigen::Vector3d up(0, 1, 0);
  if (std::abs(fwd.dot(up)) > 0.999) up = Eigen::Vector3d(1, 0, 0);
  Eigen::Vector3d right = up.cross(fwd).normalized();
  Eigen::Vector3d down = fwd.cross(right);
  Eigen::Matrix3d r;  // rows are the device axes expressed in world coordinates
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = fwd;
  return r;
}

namespace {

DeviceModel parse_device_block(std::istream& in, const std::string& path) {
  DeviceModel d;
  std::string key;
  bool have_rot = false, have_trans = false;
  while (in >> key) {
    if (key == "fx") in >> d.intrinsics.fx;
    else if (key == "fy") in >> d.intrinsics.fy;
    else if (key == "cx") in >> d.intrinsics.cx;
    else if (key == "cy") in >> d.intrinsics.cy;
    else if (key == "width") in >> d.intrinsics.width;
    else if (key == "height") in >> d.intrinsics.height;
    else if (key == "rotation") {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) in >> d.rotation(r, c);
      have_rot = true;
    } else if (key == "translation") {
      for (int i = 0; i < 3; ++i) in >> d.translation(i);
      have_trans = true;
    } else if (key == "end") {
      break;
    } else {
      throw ConfigError("unknown calibration key '" + key + "' in " + path);
    }
    if (!in) throw ConfigError("malformed calibration value in " + path);
  }
  if (!have_rot || !have_trans)
    throw ConfigError("calibration device block missing rotation/translation in " + path);
  d.intrinsics.validate();
  Eigen::Matrix3d e = d.rotation.transpose() * d.rotation - Eigen::Matrix3d::Identity();
  if (e.cwiseAbs().maxCoeff() > 1e-6 || d.rotation.determinant() < 0)
    throw ConfigError("calibration rotation not orthonormal within 1e-6 in " + path);
  d.rotation = nearest_rotation(d.rotation);
  return d;
}

void write_device_block(std::ostream& out, const char* name, const DeviceModel& d) {
  out << "device " << name << "\n";
  out.precision(17);
  out << "fx " << d.intrinsics.fx << "\nfy " << d.intrinsics.fy << "\n";
  out << "cx " << d.intrinsics.cx << "\ncy " << d.intrinsics.cy << "\n";
  out << "width " << d.intrinsics.width << "\nheight " << d.intrinsics.height << "\n";
  out << "rotation";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << " " << d.rotation(r, c);
  out << "\ntranslation " << d.translation.x() << " " << d.translation.y() << " "
      << d.translation.z() << "\nend\n";
}

}  // namespace

RigCalibration load_calibration(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open calibration file: " + path);
  RigCalibration rig;
  bool have_cam = false, have_proj = false;
  std::string key;
  while (f >> key) {
    if (key.empty() || key[0] == '#') {
      std::string rest;
      std::getline(f, rest);
      continue;
    }
    if (key != "device") throw ConfigError("expected 'device' block in " + path);
    std::string which;
    f >> which;
    if (which == "camera") {
      rig.camera = parse_device_block(f, path);
      have_cam = true;
    } else if (which == "projector") {
      rig.projector = parse_device_block(f, path);
      have_proj = true;
    } else {
      throw ConfigError("unknown device '" + which + "' in " + path);
    }
  }
  if (!have_cam || !have_proj)
    throw ConfigError("calibration needs both camera and projector blocks: " + path);
  return rig;
}

void save_calibration(const std::string& path, const RigCalibration& rig) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  write_device_block(f, "camera", rig.camera);
  write_device_block(f, "projector", rig.projector);
}

RigCalibration make_desk_rig() {
  RigCalibration rig;
  rig.camera.intrinsics = {600, 600, 159.5, 127.5, 320, 256};
  rig.camera.rotation = Eigen::Matrix3d::Identity();
  rig.camera.translation = Eigen::Vector3d::Zero();

  rig.projector.intrinsics = {430, 430, 159.5, 99.5, 320, 200};
  const Eigen::Vector3d pos(0.2, 0.0, 0.0);
  rig.projector.rotation = look_at_rotation(pos, Eigen::Vector3d(0, 0, 0.75));
  rig.projector.translation = -rig.projector.rotation * pos;
  return rig;
}

}  // namespace slsdf
