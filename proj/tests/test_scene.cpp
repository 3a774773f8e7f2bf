#include <filesystem>

#include "doctest.h"
#include "slsdf/rng.hpp"
#include "slsdf/scene.hpp"

using namespace slsdf;

namespace {

AnalyticScene sphere_only() {
  AnalyticScene s;
  s.primitives.emplace_back(SpherePrim{{0, 0, 0.75}, 0.25});
  return s;
}

}  // namespace

TEST_CASE("scene sdf: sphere and plane values") {
  const AnalyticScene s = sphere_only();
  CHECK(scene_sdf(s, {0, 0, 0}) == doctest::Approx(0.5));

  AnalyticScene p;
  p.primitives.emplace_back(PlanePrim{{0, 0, -1}, -0.9});
  CHECK(scene_sdf(p, {0.3, -0.2, 0.9}) == doctest::Approx(0.0));
  CHECK(scene_sdf(p, {0, 0, 0}) == doctest::Approx(0.9));
}

TEST_CASE("scene sdf gradient has unit magnitude away from edges") {
  AnalyticScene s = make_reference_scene();
  s.primitives.emplace_back(BoxPrim{{-0.15, 0.1, 0.8}, {0.03, 0.04, 0.05}});
  const double h = 1e-6;
  int checked = 0;
  for (uint64_t i = 0; checked < 1000 && i < 4000; ++i) {
    const Eigen::Vector3d p(0.6 * rng_uniform(rng_key(5, i, 0)) - 0.3,
                            0.5 * rng_uniform(rng_key(5, i, 1)) - 0.25,
                            0.5 + 0.5 * rng_uniform(rng_key(5, i, 2)));
    // skip points near the min-union crease or primitive edges where the
    // gradient is legitimately discontinuous
    double best = 1e9, second = 1e9;
    for (const Primitive& prim : s.primitives) {
      AnalyticScene one;
      one.primitives.push_back(prim);
      const double d = scene_sdf(one, p);
      if (d < best) {
        second = best;
        best = d;
      } else {
        second = std::min(second, d);
      }
    }
    if (second - best < 1e-3) continue;
    Eigen::Vector3d g;
    for (int axis = 0; axis < 3; ++axis) {
      Eigen::Vector3d dp = Eigen::Vector3d::Zero();
      dp(axis) = h;
      g(axis) = (scene_sdf(s, p + dp) - scene_sdf(s, p - dp)) / (2 * h);
    }
    CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-5));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("sphere trace hits the sphere face at t=0.5") {
  const AnalyticScene s = sphere_only();
  Ray ray{{0, 0, 0}, {0, 0, 1}, 0.05, 2.0};
  const auto hit = sphere_trace(s, ray);
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("sphere trace misses when pointing away") {
  const AnalyticScene s = sphere_only();
  Ray ray{{0, 0, 0}, {0, 0, -1}, 0.05, 2.0};
  CHECK_FALSE(sphere_trace(s, ray).has_value());
}

TEST_CASE("sphere trace on a plane matches the closed-form intersection") {
  AnalyticScene p;
  p.primitives.emplace_back(PlanePrim{{0, 0, -1}, -0.9});
  for (uint64_t i = 0; i < 25; ++i) {
    Eigen::Vector3d dir(0.4 * rng_uniform(rng_key(9, i, 0)) - 0.2,
                        0.4 * rng_uniform(rng_key(9, i, 1)) - 0.2, 1.0);
    dir.normalize();
    Ray ray{{0, 0, 0}, dir, 0.05, 3.0};
    const auto hit = sphere_trace(p, ray);
    REQUIRE(hit.has_value());
    const double t_true = 0.9 / dir.z();
    CHECK(std::abs(hit->t - t_true) < 1e-6);
  }
}

TEST_CASE("estimate_ab follows the min/max rule") {
  std::vector<ImageF> imgs(3, ImageF(2, 1));
  imgs[0].at(0, 0) = 0.2f;
  imgs[1].at(0, 0) = 0.5f;
  imgs[2].at(0, 0) = 0.8f;
  imgs[0].at(1, 0) = 0.3f;
  imgs[1].at(1, 0) = 0.3f;
  imgs[2].at(1, 0) = 0.3f;
  const auto [a, b] = estimate_ab(imgs);
  CHECK(a.at(0, 0) == doctest::Approx(0.2));
  CHECK(b.at(0, 0) == doctest::Approx(0.6));
  CHECK(a.at(1, 0) == doctest::Approx(0.3));
  CHECK(b.at(1, 0) == 0.f);  // shadow/occlusion mask

  std::vector<ImageF> one(1, ImageF(2, 1));
  CHECK_THROWS_AS(estimate_ab(one), DomainError);
}

TEST_CASE("render_captures: constant pattern reads a0+b0 on lit pixels") {
  const RigCalibration rig = make_desk_rig();
  const AnalyticScene scene = make_reference_scene();
  PatternSet set;
  Pattern white;
  white.grid = ImageF(320, 200, 1.f);
  set.patterns.push_back(white);
  Pattern black = white;
  for (float& v : black.grid.data) v = 0.f;
  set.patterns.push_back(black);

  const SimulationResult sim =
      render_captures(scene, rig.camera, rig.projector, set, 0.0, 1, 0.5, 1.0, 2);
  int lit = 0;
  for (int y = 0; y < 256; y += 5)
    for (int x = 0; x < 320; x += 5) {
      if (sim.lit_mask.at(x, y) != 1.f) continue;
      ++lit;
      CHECK(sim.captures.images[0].at(x, y) ==
            doctest::Approx(scene.ambient + scene.contrast).epsilon(1e-6));
      CHECK(sim.captures.images[1].at(x, y) == doctest::Approx(scene.ambient).epsilon(1e-6));
      // full-range patterns recover a0/b0 exactly through the min/max rule
      CHECK(sim.captures.a_map.at(x, y) == doctest::Approx(scene.ambient).epsilon(1e-6));
      CHECK(sim.captures.b_map.at(x, y) == doctest::Approx(scene.contrast).epsilon(1e-6));
    }
  CHECK(lit > 1000);
}

TEST_CASE("shadowed pixels read the same ambient value in every image") {
  const RigCalibration rig = make_desk_rig();
  const AnalyticScene scene = make_reference_scene();
  const PatternSet set = gen_random_multiscale(320, 200, {20, 10, 5}, 2, 7);
  const SimulationResult sim =
      render_captures(scene, rig.camera, rig.projector, set, 0.0, 1, 0.5, 1.0, 2);

  int shadowed = 0;
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 320; ++x) {
      if (!sim.gt_depth.valid(x, y) || sim.lit_mask.at(x, y) != 0.f) continue;
      ++shadowed;
      for (const ImageF& img : sim.captures.images)
        CHECK(img.at(x, y) == doctest::Approx(scene.ambient).epsilon(1e-7));
      CHECK(sim.captures.b_map.at(x, y) == 0.f);
    }
  // the sphere must cast a visible projector shadow on the wall
  CHECK(shadowed > 200);
}

TEST_CASE("binary multiscale captures modulate by exactly b0 where both levels are seen") {
  const RigCalibration rig = make_desk_rig();
  AnalyticScene scene = make_reference_scene();
  const PatternSet set = gen_random_multiscale(320, 200, {20, 10, 5}, 2, 7);
  const SimulationResult sim =
      render_captures(scene, rig.camera, rig.projector, set, 0.0, 1, 0.5, 1.0, 2);

  int modulated = 0;
  for (int y = 2; y < 256; y += 3)
    for (int x = 2; x < 320; x += 3) {
      if (sim.lit_mask.at(x, y) != 1.f) continue;
      // if the pixel sits inside constant-0 and constant-1 squares across
      // the set, max-min over the images equals b0 exactly
      float lo = 1.f, hi = 0.f;
      for (const ImageF& img : sim.captures.images) {
        lo = std::min(lo, img.at(x, y));
        hi = std::max(hi, img.at(x, y));
      }
      if (std::abs(lo - scene.ambient) < 1e-6 &&
          std::abs(hi - (scene.ambient + scene.contrast)) < 1e-6) {
        ++modulated;
        CHECK(sim.captures.b_map.at(x, y) == doctest::Approx(scene.contrast).epsilon(1e-6));
      }
    }
  CHECK(modulated > 500);
}

TEST_CASE("captures are bit-exact under a fixed seed") {
  const RigCalibration rig = make_desk_rig();
  const AnalyticScene scene = make_reference_scene();
  const PatternSet set = gen_random_multiscale(320, 200, {10}, 2, 3);
  const SimulationResult a =
      render_captures(scene, rig.camera, rig.projector, set, 0.01, 17, 0.5, 1.0, 2);
  const SimulationResult b =
      render_captures(scene, rig.camera, rig.projector, set, 0.01, 17, 0.5, 1.0, 1);
  for (size_t i = 0; i < a.captures.images.size(); ++i)
    CHECK(a.captures.images[i].data == b.captures.images[i].data);
  const SimulationResult c =
      render_captures(scene, rig.camera, rig.projector, set, 0.01, 18, 0.5, 1.0, 2);
  CHECK(a.captures.images[0].data != c.captures.images[0].data);
}

TEST_CASE("scene file round trip") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "slsdf_scene.txt").string();
  AnalyticScene s = make_reference_scene();
  s.primitives.emplace_back(BoxPrim{{0.1, 0, 0.85}, {0.02, 0.03, 0.04}});
  save_scene(path, s);
  const AnalyticScene loaded = load_scene(path);
  CHECK(loaded.primitives.size() == s.primitives.size());
  CHECK(loaded.ambient == doctest::Approx(s.ambient));
  CHECK(loaded.contrast == doctest::Approx(s.contrast));
  CHECK(loaded.noise_sigma == doctest::Approx(s.noise_sigma));
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d p(rng_gaussian(rng_key(1, i, 0)) * 0.3,
                            rng_gaussian(rng_key(1, i, 1)) * 0.3,
                            0.5 + 0.5 * rng_uniform(rng_key(1, i, 2)));
    CHECK(scene_sdf(loaded, p) == doctest::Approx(scene_sdf(s, p)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(load_scene("/nonexistent/scene.txt"), ConfigError);
}

TEST_CASE("capture set io round trip") {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / "slsdf_test_caps").string();
  const RigCalibration rig = make_desk_rig();
  const AnalyticScene scene = make_reference_scene();
  const PatternSet set = gen_random_multiscale(320, 200, {20}, 2, 3);
  SimulationResult sim =
      render_captures(scene, rig.camera, rig.projector, set, 0.01, 5, 0.5, 1.0, 2);
  save_capture_set(dir, sim.captures);
  const CaptureSet loaded = load_capture_set(dir);
  CHECK(loaded.images.size() == 2);
  for (size_t i = 0; i < loaded.images.size(); ++i)
    CHECK(loaded.images[i].data == sim.captures.images[i].data);
  CHECK(loaded.a_map.data == sim.captures.a_map.data);
  CHECK(loaded.b_map.data == sim.captures.b_map.data);
}
