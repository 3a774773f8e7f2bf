#include "doctest.h"
#include "slsdf/render.hpp"
#include "slsdf/rng.hpp"
#include "slsdf/scene.hpp"

using namespace slsdf;
using ad::Mat;

namespace {

// analytic linear SDF ramp along t: f(t) = z0 - t (crosses zero at t = z0)
std::vector<double> ramp_sdf(const std::vector<double>& t, double z0) {
  std::vector<double> f(t.size());
  for (size_t i = 0; i < t.size(); ++i) f[i] = z0 - t[i];
  return f;
}

std::vector<double> uniform_midpoints(double t0, double t1, int k) {
  std::vector<double> t(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) t[static_cast<size_t>(i)] = t0 + (t1 - t0) * (i + 0.5) / k;
  return t;
}

}  // namespace

TEST_CASE("logistic density at zero is s/4") {
  CHECK(logistic_density(0.0, 4.0) == doctest::Approx(1.0));
  CHECK(logistic_density(0.0, 100.0) == doctest::Approx(25.0));
}

TEST_CASE("stratified samples: one per bin, strictly increasing") {
  const auto t = stratified_samples(0.5, 1.0, 32, rng_key(1, 2));
  for (int i = 0; i < 32; ++i) {
    CHECK(t[static_cast<size_t>(i)] >= 0.5 + 0.5 * i / 32.0);
    CHECK(t[static_cast<size_t>(i)] < 0.5 + 0.5 * (i + 1) / 32.0);
    if (i) CHECK(t[static_cast<size_t>(i)] > t[static_cast<size_t>(i - 1)]);
  }
}

TEST_CASE("eq3 weights: uniform for constant sdf, always normalized") {
  const auto t = uniform_midpoints(0.5, 1.0, 16);
  const std::vector<double> f(16, 0.2);
  const auto w = weights_eq3(f, 30.0, t, 0.5, 1.0);
  for (double wi : w) CHECK(wi == doctest::Approx(1.0 / 16).epsilon(1e-12));

  for (uint64_t s = 0; s < 10; ++s) {
    std::vector<double> fr(16);
    for (int i = 0; i < 16; ++i) fr[static_cast<size_t>(i)] = rng_gaussian(rng_key(s, i)) * 0.3;
    const auto wr = weights_eq3(fr, 55.0, t, 0.5, 1.0);
    double sum = 0;
    for (double wi : wr) sum += wi;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("alpha weights: single crossing concentrates nearly all mass") {
  const auto t = uniform_midpoints(0.0, 1.0, 64);
  const auto f = ramp_sdf(t, 0.6);
  const auto w = weights_alpha(f, 150.0, t);
  double sum = 0;
  for (double wi : w) sum += wi;
  CHECK(sum >= 0.99);
  // mass sits near the crossing
  double center = 0;
  for (size_t i = 0; i < w.size(); ++i) center += w[i] * t[i];
  CHECK(center / sum == doctest::Approx(0.6).epsilon(0.02));
}

TEST_CASE("alpha weights: all-positive sdf leaves the ray empty") {
  const auto t = uniform_midpoints(0.0, 1.0, 64);
  const std::vector<double> f(64, 0.4);
  const auto w = weights_alpha(f, 100.0, t);
  double sum = 0;
  for (double wi : w) sum += wi;
  CHECK(sum < 1e-3);
}

TEST_CASE("alpha weights: increasing sdf contributes zero") {
  const auto t = uniform_midpoints(0.0, 1.0, 8);
  std::vector<double> f(8);
  for (int i = 0; i < 8; ++i) f[static_cast<size_t>(i)] = -0.2 + 0.1 * i;
  const auto w = weights_alpha(f, 50.0, t);
  for (double wi : w) CHECK(wi == 0.0);
}

TEST_CASE("fine samples pile up around a delta-like coarse peak") {
  // coarse weights: a spike in bin 20 of 32
  std::vector<double> w(32, 1e-6);
  w[20] = 1.0;
  int within = 0, total = 0;
  for (uint64_t trial = 0; trial < 100; ++trial) {
    const auto fine = sample_from_weights(w, 0.0, 1.0, 16, rng_key(7, trial));
    for (double t : fine) {
      const int bin = std::min(31, static_cast<int>(t * 32));
      ++total;
      if (std::abs(bin - 20) <= 2) ++within;
    }
  }
  CHECK(static_cast<double>(within) / total >= 0.8);
}

TEST_CASE("sample_ray merges sorted coarse+fine with correct counts") {
  NetConfig cfg;
  cfg.hidden_layers = 2;
  cfg.width = 48;
  cfg.skip_layer = 1;
  cfg.encoding.num_frequencies = 2;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, 0.5, 3);
  SceneBox box;  // identity box [-1,1]^3
  Ray ray{{0, 0, -0.9}, {0, 0, 1}, 0.1, 1.8};
  const RaySamples s = sample_ray(net, box, ray, 32, 16, rng_key(1, 1), WeightMode::Eq3);
  CHECK(s.t.size() == 48);
  for (size_t i = 1; i < s.t.size(); ++i) CHECK(s.t[i] > s.t[i - 1]);
  CHECK(s.points.rows() == 48);
  // k_fine = 0 falls back to plain stratified sampling
  const RaySamples c = sample_ray(net, box, ray, 32, 0, rng_key(1, 2), WeightMode::Eq3);
  CHECK(c.t.size() == 32);
}

TEST_CASE("render_pixel: background-only and delta-weight cases") {
  const RigCalibration rig = make_desk_rig();
  PatternSet set;
  Pattern white;
  white.grid = ImageF(320, 200, 1.f);
  set.patterns.push_back(white);

  Mat pts(2, 3);
  pts << 0, 0, 0.75, 0.01, 0.01, 0.8;
  const std::vector<double> delta = {1.0, 0.0};
  const PixelRender bg = render_pixel(pts, delta, set, rig.projector, 0.2, 0.0);
  CHECK(bg.intensities[0] == doctest::Approx(0.2));
  const PixelRender lit = render_pixel(pts, delta, set, rig.projector, 0.1, 0.8);
  CHECK(lit.intensities[0] == doctest::Approx(0.9));
}

TEST_CASE("render_pixel matches dense quadrature on an analytic ramp") {
  const RigCalibration rig = make_desk_rig();
  PatternSet set = gen_random_multiscale(320, 200, {20, 10}, 1, 5);
  set = blur(set, 1.0);
  const double s = 50.0, a = 0.15, b = 0.7;
  const Ray ray = pixel_to_ray_depth_slab(rig.camera, {142.0, 120.0}, 0.5, 1.0);

  auto render_at = [&](int k) {
    const auto t = uniform_midpoints(ray.t_near, ray.t_far, k);
    const auto f = ramp_sdf(t, 0.78);  // plane-like crossing at t = 0.78
    const auto w = weights_eq3(f, s, t, ray.t_near, ray.t_far);
    Mat pts(k, 3);
    for (int i = 0; i < k; ++i) pts.row(i) = ray.at(t[static_cast<size_t>(i)]).transpose();
    return render_pixel(pts, w, set, rig.projector, a, b);
  };
  const PixelRender coarse = render_at(64);
  const PixelRender dense = render_at(4096);
  for (size_t i = 0; i < set.patterns.size(); ++i)
    CHECK(std::abs(coarse.intensities[i] - dense.intensities[i]) < 1e-3);
  CHECK(coarse.weight_sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("expected surface: delta weight, symmetric peaks, quadrature match") {
  Mat pts(4, 3);
  pts << 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0, 4;
  std::vector<double> delta = {0, 1, 0, 0};
  auto s = expected_surface(pts, delta);
  REQUIRE(s.has_value());
  CHECK((*s - Eigen::Vector3d(0, 0, 2)).norm() == 0.0);

  std::vector<double> two_peaks = {0.5, 0, 0, 0.5};
  s = expected_surface(pts, two_peaks);
  REQUIRE(s.has_value());
  CHECK((*s - Eigen::Vector3d(0, 0, 2.5)).norm() < 1e-12);  // midpoint pathology

  std::vector<double> empty(4, 1e-9);
  CHECK_FALSE(expected_surface(pts, empty).has_value());

  // dense-quadrature agreement for a smooth weight profile
  const int k = 64;
  Mat line(k, 3);
  std::vector<double> w(static_cast<size_t>(k));
  const auto t = uniform_midpoints(0.5, 1.0, k);
  const auto f = ramp_sdf(t, 0.7);
  const auto weights = weights_eq3(f, 60.0, t, 0.5, 1.0);
  for (int i = 0; i < k; ++i) {
    line.row(i) = Eigen::Vector3d(0.1 * t[static_cast<size_t>(i)], 0, t[static_cast<size_t>(i)]).transpose();
    w[static_cast<size_t>(i)] = weights[static_cast<size_t>(i)];
  }
  const auto coarse = expected_surface(line, w);

  const int kd = 4096;
  Mat lined(kd, 3);
  const auto td = uniform_midpoints(0.5, 1.0, kd);
  const auto fd = ramp_sdf(td, 0.7);
  const auto wd = weights_eq3(fd, 60.0, td, 0.5, 1.0);
  for (int i = 0; i < kd; ++i)
    lined.row(i) = Eigen::Vector3d(0.1 * td[static_cast<size_t>(i)], 0, td[static_cast<size_t>(i)]).transpose();
  const auto dense = expected_surface(lined, wd);
  REQUIRE(coarse.has_value());
  REQUIRE(dense.has_value());
  CHECK((*coarse - *dense).norm() < 1e-4);
}

TEST_CASE("surface color: white texel, shadow pixel, gradient continuity") {
  const RigCalibration rig = make_desk_rig();
  PatternSet set;
  Pattern white;
  white.grid = ImageF(320, 200, 1.f);
  set.patterns.push_back(white);
  const Eigen::Vector3d p(0, 0, 0.8);
  const auto lit = surface_color(p, set, rig.projector, 0.1, 0.8);
  CHECK(lit[0] == doctest::Approx(0.9));
  const auto dark = surface_color(p, set, rig.projector, 0.1, 0.0);
  CHECK(dark[0] == doctest::Approx(0.1));
}

TEST_CASE("tape weights agree with the plain implementations in both modes") {
  const int m = 5, k = 24;
  const auto t = uniform_midpoints(0.5, 1.0, k);
  Mat f(m, k), dt(m, k);
  const auto bins = midpoint_bin_widths(t, 0.5, 1.0);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < k; ++i) {
      f(j, i) = 0.4 * rng_gaussian(rng_key(91, j, i));
      dt(j, i) = bins[static_cast<size_t>(i)];
    }
  const double s = 37.0;

  for (WeightMode mode : {WeightMode::Eq3, WeightMode::Alpha}) {
    ad::Tape tape;
    ad::Var fv = tape.param(f);
    ad::Var sv = tape.exp(tape.param(Mat::Constant(1, 1, std::log(s))));
    ad::Var w = emit_weights(tape, mode, fv, sv, dt);
    for (int j = 0; j < m; ++j) {
      std::vector<double> frow(static_cast<size_t>(k));
      for (int i = 0; i < k; ++i) frow[static_cast<size_t>(i)] = f(j, i);
      const auto plain = mode == WeightMode::Eq3 ? weights_eq3(frow, s, t, 0.5, 1.0)
                                                 : weights_alpha(frow, s, t);
      for (int i = 0; i < k; ++i)
        CHECK(tape.value(w)(j, i) == doctest::Approx(plain[static_cast<size_t>(i)]).epsilon(1e-10));
    }
  }
}

TEST_CASE("tape surface color matches the plain path and differentiates") {
  const RigCalibration rig = make_desk_rig();
  PatternSet set = gen_random_multiscale(320, 200, {10, 5}, 1, 6);
  set = blur(set, 1.0);
  SceneBox box = make_working_box(rig.camera, 0.5, 1.0);

  const int m = 4, k = 16;
  const auto t = uniform_midpoints(0.55, 0.95, k);
  Mat xs(m, k), ys(m, k), zs(m, k), f(m, k), dt(m, k);
  const auto bins = midpoint_bin_widths(t, 0.55, 0.95);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < k; ++i) {
      const Eigen::Vector3d pw(0.02 * j - 0.03, 0.01 * j, t[static_cast<size_t>(i)]);
      const Eigen::Vector3d pn = box.normalize(pw);
      xs(j, i) = pn.x();
      ys(j, i) = pn.y();
      zs(j, i) = pn.z();
      f(j, i) = 0.78 + 0.005 * j - t[static_cast<size_t>(i)];
      dt(j, i) = bins[static_cast<size_t>(i)];
    }
  Mat a = Mat::Constant(m, 1, 0.15), b = Mat::Constant(m, 1, 0.7);

  ad::Tape tape;
  ad::Var fv = tape.param(f);
  ad::Var sv = tape.exp(tape.constant(Mat::Constant(1, 1, std::log(60.0))));
  ad::Var w = emit_weights(tape, WeightMode::Eq3, fv, sv, dt);
  const SurfaceEmit surf = emit_expected_surface(tape, w, xs, ys, zs, box, WeightMode::Eq3);
  const SurfaceColorEmit colors = emit_surface_color(tape, surf, set, rig.projector, a, b);

  for (int j = 0; j < m; ++j) {
    // plain reference: weights row -> expected surface -> surface color
    std::vector<double> frow(static_cast<size_t>(k)), wrow;
    for (int i = 0; i < k; ++i) frow[static_cast<size_t>(i)] = f(j, i);
    wrow = weights_eq3(frow, 60.0, t, 0.55, 0.95);
    Mat pts(k, 3);
    for (int i = 0; i < k; ++i)
      pts.row(i) = Eigen::Vector3d(0.02 * j - 0.03, 0.01 * j, t[static_cast<size_t>(i)]).transpose();
    const auto sp = expected_surface(pts, wrow);
    REQUIRE(sp.has_value());
    CHECK(tape.value(surf.x)(j, 0) == doctest::Approx(sp->x()).epsilon(1e-9));
    CHECK(tape.value(surf.z)(j, 0) == doctest::Approx(sp->z()).epsilon(1e-9));
    const auto plain_colors = surface_color(*sp, set, rig.projector, 0.15, 0.7);
    for (size_t i = 0; i < set.patterns.size(); ++i)
      CHECK(tape.value(colors.intensities[i])(j, 0) ==
            doctest::Approx(plain_colors[i]).epsilon(1e-9));
  }

  // gradient of surface intensity w.r.t. the sdf values via finite
  // differences; probe only rays whose projection sits away from texel
  // boundaries, where the bilinear surface is differentiable
  ad::Var loss = tape.sum(colors.intensities[0]);
  tape.backward(loss);
  const Mat g = tape.grad(fv);
  std::vector<int> probe_rays;
  for (int j = 0; j < m; ++j) {
    const auto sp = project(rig.projector, Eigen::Vector3d(tape.value(surf.x)(j, 0),
                                                           tape.value(surf.y)(j, 0),
                                                           tape.value(surf.z)(j, 0)));
    const double fu = sp.x() - std::floor(sp.x());
    const double fvv = sp.y() - std::floor(sp.y());
    if (fu > 0.1 && fu < 0.9 && fvv > 0.1 && fvv < 0.9) probe_rays.push_back(j);
  }
  REQUIRE(probe_rays.size() >= 2);
  const double h = 1e-6;
  for (int j : probe_rays)
    for (int i = 4; i < 8; ++i) {
      Mat fp = f, fm = f;
      fp(j, i) += h;
      fm(j, i) -= h;
      auto eval = [&](const Mat& fmat) {
        ad::Tape tp;
        ad::Var fv2 = tp.param(fmat);
        ad::Var sv2 = tp.exp(tp.constant(Mat::Constant(1, 1, std::log(60.0))));
        ad::Var w2 = emit_weights(tp, WeightMode::Eq3, fv2, sv2, dt);
        const SurfaceEmit s2 = emit_expected_surface(tp, w2, xs, ys, zs, box, WeightMode::Eq3);
        const SurfaceColorEmit c2 = emit_surface_color(tp, s2, set, rig.projector, a, b);
        return tp.value(tp.sum(c2.intensities[0]))(0, 0);
      };
      const double fd = (eval(fp) - eval(fm)) / (2 * h);
      // floor above central-difference noise: pattern plateaus make some
      // gradients exactly zero while FD returns eps/h-level junk
      const double denom = std::max({std::abs(fd), std::abs(g(j, i)), 1e-6});
      CHECK(std::abs(fd - g(j, i)) / denom < 2e-3);
    }
}

TEST_CASE("doubling K changes rendered intensity by less than 1e-2") {
  const RigCalibration rig = make_desk_rig();
  PatternSet set = gen_random_multiscale(320, 200, {20}, 1, 8);
  set = blur(set, 1.0);
  const Ray ray = pixel_to_ray_depth_slab(rig.camera, {200.0, 100.0}, 0.5, 1.0);
  auto render_at = [&](int k) {
    const auto t = uniform_midpoints(ray.t_near, ray.t_far, k);
    const auto f = ramp_sdf(t, 0.8);
    const auto w = weights_eq3(f, 45.0, t, ray.t_near, ray.t_far);
    Mat pts(k, 3);
    for (int i = 0; i < k; ++i) pts.row(i) = ray.at(t[static_cast<size_t>(i)]).transpose();
    return render_pixel(pts, w, set, rig.projector, 0.15, 0.7).intensities[0];
  };
  CHECK(std::abs(render_at(64) - render_at(128)) < 1e-2);
}
