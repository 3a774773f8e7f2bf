#include "slsdf/scene.hpp"

#include <filesystem>
#include <fstream>

#include "slsdf/parallel.hpp"
#include "slsdf/rng.hpp"

namespace slsdf {

namespace {

double primitive_sdf(const Primitive& prim, const Eigen::Vector3d& x) {
  if (const auto* p = std::get_if<PlanePrim>(&prim)) return p->normal.dot(x) - p->offset;
  if (const auto* s = std::get_if<SpherePrim>(&prim)) return (x - s->center).norm() - s->radius;
  const auto& b = std::get<BoxPrim>(prim);
  const Eigen::Vector3d q = (b.rotation * (x - b.center)).cwiseAbs() - b.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

}  // namespace

double scene_sdf(const AnalyticScene& scene, const Eigen::Vector3d& point) {
  double d = std::numeric_limits<double>::infinity();
  for (const Primitive& prim : scene.primitives) d = std::min(d, primitive_sdf(prim, point));
  return d;
}

Eigen::Vector3d scene_normal(const AnalyticScene& scene, const Eigen::Vector3d& p, double h) {
  Eigen::Vector3d g;
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d dp = Eigen::Vector3d::Zero();
    dp(i) = h;
    g(i) = (scene_sdf(scene, p + dp) - scene_sdf(scene, p - dp)) / (2 * h);
  }
  const double n = g.norm();
  return n > 0 ? Eigen::Vector3d(g / n) : Eigen::Vector3d(0, 0, -1);
}

std::optional<TraceHit> sphere_trace(const AnalyticScene& scene, const Ray& ray) {
  constexpr double kSurfaceEps = 1e-6;
  constexpr int kMaxSteps = 512;
  double t = ray.t_near;
  for (int i = 0; i < kMaxSteps && t <= ray.t_far; ++i) {
    const Eigen::Vector3d p = ray.at(t);
    const double d = scene_sdf(scene, p);
    if (d < kSurfaceEps) return TraceHit{t, p};
    t += d;
  }
  return std::nullopt;
}

std::pair<ImageF, ImageF> estimate_ab(const std::vector<ImageF>& images) {
  if (images.size() < 2) throw DomainError("estimate_ab needs at least 2 images");
  const int w = images[0].width, h = images[0].height;
  for (const ImageF& img : images)
    if (img.width != w || img.height != h) throw DomainError("estimate_ab: image sizes differ");
  ImageF a(w, h), b(w, h);
  for (size_t i = 0; i < a.size(); ++i) {
    float lo = images[0].data[i], hi = lo;
    for (size_t k = 1; k < images.size(); ++k) {
      const float v = images[k].data[i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    a.data[i] = lo;
    b.data[i] = hi - lo;
  }
  return {std::move(a), std::move(b)};
}

SimulationResult render_captures(const AnalyticScene& scene, const DeviceModel& camera,
                                 const DeviceModel& projector, const PatternSet& patterns,
                                 double noise_sigma, uint64_t seed,
                                 double z_near, double z_far, int workers) {
  if (patterns.patterns.empty()) throw ConfigError("render_captures: empty pattern set");
  if (patterns.width() != projector.intrinsics.width ||
      patterns.height() != projector.intrinsics.height)
    throw ConfigError("pattern resolution does not match the projector");

  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  const int n = static_cast<int>(patterns.patterns.size());
  SimulationResult res;
  res.captures.images.assign(static_cast<size_t>(n), ImageF(w, h));
  res.captures.noise_sigma = noise_sigma;
  res.gt_depth = DepthMap(w, h, z_near, z_far, "simulator");
  res.gt_column = ImageF(w, h, std::numeric_limits<float>::quiet_NaN());
  res.lit_mask = ImageF(w, h, 0.f);

  const Eigen::Vector3d proj_center = projector.center();
  constexpr double kShadowOffset = 1e-4;  // m along the surface normal

  parallel_for(h, workers, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const size_t pix = static_cast<size_t>(y) * w + x;
      const Ray ray = pixel_to_ray_depth_slab(camera, {double(x), double(y)}, z_near, z_far);
      const auto hit = sphere_trace(scene, ray);

      double pattern_gain = 0.0;  // b0 if lit, 0 if shadowed/unlit
      double column = std::numeric_limits<double>::quiet_NaN();
      Eigen::Vector2d uv(0, 0);
      if (hit) {
        res.gt_depth.at(x, y) = static_cast<float>(device_depth(camera, hit->point));
        const double proj_z = device_depth(projector, hit->point);
        bool lit = proj_z > 1e-9;
        if (lit) {
          uv = project(projector, hit->point);
          lit = projector.intrinsics.contains(uv.x(), uv.y());
        }
        if (lit) {
          // occlusion test toward the projector
          const Eigen::Vector3d nrm = scene_normal(scene, hit->point);
          const Eigen::Vector3d start = hit->point + kShadowOffset * nrm;
          const double dist = (proj_center - start).norm();
          Ray shadow_ray{start, (proj_center - start).normalized(), 1e-9, dist - 1e-6};
          if (sphere_trace(scene, shadow_ray)) lit = false;
        }
        if (lit) {
          pattern_gain = scene.contrast;
          column = uv.x();
          res.gt_column.at(x, y) = static_cast<float>(column);
          res.lit_mask.at(x, y) = 1.f;
        }
      }
      for (int i = 0; i < n; ++i) {
        double v = scene.ambient;
        if (pattern_gain > 0)
          v += pattern_gain * sample_bilinear(patterns.patterns[i].grid, uv.x(), uv.y()).value;
        if (noise_sigma > 0)
          v += noise_sigma * rng_gaussian(rng_key(seed, 0xca97, pix, static_cast<uint64_t>(i)));
        res.captures.images[static_cast<size_t>(i)].at(x, y) =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  });

  auto ab = estimate_ab(res.captures.images);
  res.captures.a_map = std::move(ab.first);
  res.captures.b_map = std::move(ab.second);
  return res;
}

AnalyticScene load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scene file: " + path);
  AnalyticScene scene;
  scene.ambient = 0.15;
  scene.contrast = 0.7;
  std::string key;
  while (f >> key) {
    if (key[0] == '#') {
      std::string rest;
      std::getline(f, rest);
      continue;
    }
    if (key == "ambient") f >> scene.ambient;
    else if (key == "contrast") f >> scene.contrast;
    else if (key == "noise_sigma") f >> scene.noise_sigma;
    else if (key == "plane") {
      PlanePrim p;
      f >> p.normal.x() >> p.normal.y() >> p.normal.z() >> p.offset;
      const double n = p.normal.norm();
      if (n < 1e-12) throw ConfigError("plane normal must be nonzero: " + path);
      p.normal /= n;
      scene.primitives.emplace_back(p);
    } else if (key == "sphere") {
      SpherePrim s;
      f >> s.center.x() >> s.center.y() >> s.center.z() >> s.radius;
      if (s.radius <= 0) throw ConfigError("sphere radius must be positive: " + path);
      scene.primitives.emplace_back(s);
    } else if (key == "box") {
      BoxPrim b;
      f >> b.center.x() >> b.center.y() >> b.center.z() >> b.half_extents.x() >>
          b.half_extents.y() >> b.half_extents.z();
      scene.primitives.emplace_back(b);
    } else {
      throw ConfigError("unknown scene key '" + key + "' in " + path);
    }
    if (!f) throw ConfigError("malformed scene value in " + path);
  }
  if (scene.primitives.empty()) throw ConfigError("scene has no primitives: " + path);
  if (!(scene.ambient >= 0 && scene.ambient < 1))
    throw ConfigError("ambient must be in [0,1): " + path);
  if (!(scene.contrast > 0 && scene.ambient + scene.contrast <= 1))
    throw ConfigError("contrast must be in (0, 1-ambient]: " + path);
  return scene;
}

void save_scene(const std::string& path, const AnalyticScene& scene) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f.precision(17);
  f << "ambient " << scene.ambient << "\ncontrast " << scene.contrast << "\nnoise_sigma "
    << scene.noise_sigma << "\n";
  for (const Primitive& prim : scene.primitives) {
    if (const auto* p = std::get_if<PlanePrim>(&prim))
      f << "plane " << p->normal.x() << " " << p->normal.y() << " " << p->normal.z() << " "
        << p->offset << "\n";
    else if (const auto* s = std::get_if<SpherePrim>(&prim))
      f << "sphere " << s->center.x() << " " << s->center.y() << " " << s->center.z() << " "
        << s->radius << "\n";
    else {
      const auto& b = std::get<BoxPrim>(prim);
      f << "box " << b.center.x() << " " << b.center.y() << " " << b.center.z() << " "
        << b.half_extents.x() << " " << b.half_extents.y() << " " << b.half_extents.z() << "\n";
    }
  }
}

AnalyticScene make_reference_scene() {
  AnalyticScene scene;
  scene.ambient = 0.15;
  scene.contrast = 0.7;
  scene.noise_sigma = 0.01;
  scene.primitives.emplace_back(PlanePrim{{0, 0, -1}, -0.9});
  scene.primitives.emplace_back(SpherePrim{{0.02, -0.015, 0.80}, 0.07});
  return scene;
}

void save_capture_set(const std::string& dir, CaptureSet& captures) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream m(fs::path(dir) / "captures.manifest");
  if (!m) throw ConfigError("cannot write capture manifest in " + dir);
  m.precision(17);
  m << "SLCAPTURES 1\n";
  m << "count " << captures.images.size() << "\n";
  m << "noise_sigma " << captures.noise_sigma << "\n";
  for (size_t i = 0; i < captures.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "image_%03zu.pgm", i);
    quantize16(captures.images[i]);
    write_pgm16((fs::path(dir) / name).string(), captures.images[i]);
    m << "image " << i << " " << name << "\n";
  }
  // a/b re-estimated from the quantized images so disk and memory agree
  auto ab = estimate_ab(captures.images);
  captures.a_map = std::move(ab.first);
  captures.b_map = std::move(ab.second);
  FloatMapHeader hdr;
  hdr.width = captures.a_map.width;
  hdr.height = captures.a_map.height;
  hdr.source = "a-map";
  write_float_map((fs::path(dir) / "a_map.slf").string(), captures.a_map, hdr);
  hdr.source = "b-map";
  write_float_map((fs::path(dir) / "b_map.slf").string(), captures.b_map, hdr);
}

CaptureSet load_capture_set(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream m(fs::path(dir) / "captures.manifest");
  if (!m) throw ConfigError("no captures.manifest in " + dir);
  std::string magic, version;
  m >> magic >> version;
  if (magic != "SLCAPTURES" || version != "1") throw ConfigError("bad capture manifest in " + dir);
  CaptureSet set;
  size_t count = 0;
  std::string key;
  while (m >> key) {
    if (key == "count") m >> count;
    else if (key == "noise_sigma") m >> set.noise_sigma;
    else if (key == "image") {
      size_t idx;
      std::string file;
      m >> idx >> file;
      set.images.push_back(read_pgm16((fs::path(dir) / file).string()));
    } else {
      throw ConfigError("unknown capture manifest key '" + key + "' in " + dir);
    }
  }
  if (set.images.size() != count) throw ConfigError("capture manifest count mismatch in " + dir);
  auto ab = estimate_ab(set.images);
  set.a_map = std::move(ab.first);
  set.b_map = std::move(ab.second);
  return set;
}

}  // namespace slsdf
