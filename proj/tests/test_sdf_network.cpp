#include <filesystem>

#include "doctest.h"
#include "slsdf/rng.hpp"
#include "slsdf/sdf_network.hpp"

using namespace slsdf;
using ad::Mat;

namespace {
Mat random_pts(int n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Mat m(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = lo + (hi - lo) * rng_uniform(rng_key(seed, i, j));
  return m;
}
}  // namespace

TEST_CASE("encoding at the origin: sines zero, cosines one") {
  EncodingConfig cfg;
  cfg.num_frequencies = 2;
  const Mat enc = SdfNetwork::encode(Mat::Zero(1, 3), cfg);
  REQUIRE(enc.cols() == 3 + 12);
  for (int c = 0; c < 3; ++c) CHECK(enc(0, c) == 0.0);
  for (int k = 0; k < 2; ++k)
    for (int axis = 0; axis < 3; ++axis) {
      CHECK(enc(0, 3 + 6 * k + axis) == 0.0);        // sin terms
      CHECK(enc(0, 3 + 6 * k + 3 + axis) == 1.0);    // cos terms
    }
}

TEST_CASE("encoding dimension for L=6 with input is 39") {
  EncodingConfig cfg;
  cfg.num_frequencies = 6;
  CHECK(cfg.dim() == 39);
  CHECK(SdfNetwork::encode(Mat::Zero(2, 3), cfg).cols() == 39);
  EncodingConfig no_input = cfg;
  no_input.include_input = false;
  CHECK(no_input.dim() == 36);
}

TEST_CASE("k=0 band is 2-periodic in each coordinate") {
  EncodingConfig cfg;
  cfg.num_frequencies = 1;
  const Mat p = random_pts(8, 4);
  Mat shifted = p;
  shifted.col(0).array() += 2.0;
  const Mat a = SdfNetwork::encode(p, cfg);
  const Mat b = SdfNetwork::encode(shifted, cfg);
  // sin/cos(pi x) columns agree after a shift of 2 in x
  for (int i = 0; i < 8; ++i) {
    CHECK(a(i, 3) == doctest::Approx(b(i, 3)).epsilon(1e-9));
    CHECK(a(i, 6) == doctest::Approx(b(i, 6)).epsilon(1e-9));
  }
}

TEST_CASE("geometric init approximates a sphere of the requested radius") {
  NetConfig cfg;  // desk default 4x64, skip 2, L=6
  const double r0 = 0.5;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, r0, 7);

  const Mat pts = random_pts(1000, 5);
  const Eigen::VectorXd f = net.forward_batch(pts);
  double max_err = 0;
  for (int i = 0; i < pts.rows(); ++i)
    max_err = std::max(max_err, std::abs(f(i) - (pts.row(i).norm() - r0)));
  CHECK(max_err < 0.1);
}

TEST_CASE("geometric init gradient magnitude stays in [0.5, 2]") {
  NetConfig cfg;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, 0.5, 7);
  // the sphere SDF's gradient is undefined at the center, so any smooth
  // approximation flattens there; sample away from the cone point
  Mat pts(1000, 3);
  int count = 0;
  for (uint64_t i = 0; count < 1000; ++i) {
    const Mat p = random_pts(1, i + 5000);
    if (p.row(0).norm() < 0.2) continue;
    pts.row(count++) = p.row(0);
  }
  Eigen::VectorXd vals;
  Mat grads;
  net.forward_with_gradient(pts, vals, grads);
  for (int i = 0; i < pts.rows(); ++i) {
    const double n = grads.row(i).norm();
    CHECK(n > 0.5);
    CHECK(n < 2.0);
  }
}

TEST_CASE("zero level set sits at radius r0 along random directions") {
  NetConfig cfg;
  const double r0 = 0.5;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, r0, 11);
  for (int d = 0; d < 32; ++d) {
    Eigen::Vector3d dir(rng_gaussian(rng_key(8, d, 0)), rng_gaussian(rng_key(8, d, 1)),
                        rng_gaussian(rng_key(8, d, 2)));
    dir.normalize();
    double lo = 0.05, hi = 1.0;
    REQUIRE(net.forward(lo * dir) < 0);
    REQUIRE(net.forward(hi * dir) > 0);
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      (net.forward(mid * dir) < 0 ? lo : hi) = mid;
    }
    CHECK(std::abs(0.5 * (lo + hi) - r0) < 0.1);
  }
}

TEST_CASE("init is deterministic under a fixed seed and s starts positive") {
  NetConfig cfg;
  const SdfNetwork a = SdfNetwork::geometric_init(cfg, 0.4, 13);
  const SdfNetwork b = SdfNetwork::geometric_init(cfg, 0.4, 13);
  CHECK(a.get_params() == b.get_params());
  CHECK(a.s() > 0.0);
  CHECK(1.0 / a.s() == doctest::Approx(0.3));
  const SdfNetwork c = SdfNetwork::geometric_init(cfg, 0.4, 14);
  CHECK(a.get_params() != c.get_params());
}

TEST_CASE("scene box normalization: center, corners, round trip") {
  SceneBox box;
  box.min = Eigen::Vector3d(-0.27, -0.27, 0.48);
  box.max = Eigen::Vector3d(0.27, 0.27, 1.02);
  CHECK(box.normalize(box.center()).norm() < 1e-12);
  CHECK((box.normalize(box.max) - Eigen::Vector3d(1, 1, 1)).norm() < 1e-12);
  CHECK((box.normalize(box.min) - Eigen::Vector3d(-1, -1, -1)).norm() < 1e-12);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d p(rng_gaussian(rng_key(3, i, 0)), rng_gaussian(rng_key(3, i, 1)),
                            rng_gaussian(rng_key(3, i, 2)));
    CHECK((box.denormalize(box.normalize(p)) - p).norm() < 1e-12);
  }
  SceneBox degenerate = box;
  degenerate.max.z() = degenerate.min.z();
  CHECK_THROWS_AS(degenerate.validate(), ConfigError);
}

TEST_CASE("working box is a cube containing the frustum slab") {
  const RigCalibration rig = make_desk_rig();
  const SceneBox box = make_working_box(rig.camera, 0.5, 1.0);
  const Eigen::Vector3d ext = box.max - box.min;
  CHECK(ext.x() == doctest::Approx(ext.y()));
  CHECK(ext.y() == doctest::Approx(ext.z()));
  // frustum corners at both depths are inside
  for (double z : {0.5, 1.0})
    for (double px : {0.0, 319.0})
      for (double py : {0.0, 255.0}) {
        const Ray r = pixel_to_ray_depth_slab(rig.camera, {px, py}, 0.5, 1.0);
        const Eigen::Vector3d p = r.at(z == 0.5 ? r.t_near : r.t_far);
        const Eigen::Vector3d n = box.normalize(p);
        CHECK(n.cwiseAbs().maxCoeff() <= 1.0);
      }
}

TEST_CASE("forward pass is deterministic and within the mac budget") {
  NetConfig cfg;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, 0.5, 3);
  const Mat pts = random_pts(4, 9);
  CHECK(net.forward_batch(pts) == net.forward_batch(pts));
  // 39*64 + 64*25 + 64*64 + 64*64 + 64*1 = 12352 multiply-adds per point
  CHECK(net.forward_macs() == 12352);
  CHECK(net.forward_macs() < 20000);
}

TEST_CASE("tape forward agrees with the plain forward") {
  NetConfig cfg;
  cfg.hidden_layers = 3;
  cfg.width = 48;
  cfg.skip_layer = 2;
  cfg.encoding.num_frequencies = 3;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, 0.5, 21);
  const Mat pts = random_pts(12, 22);

  ad::Tape tape;
  const auto params = net.emit_params(tape);
  Mat enc, tang;
  SdfNetwork::encode_with_tangents(pts, cfg.encoding, enc, tang);
  const auto [f, g] = net.emit_forward_with_tangents(tape, params, tape.constant(enc),
                                                     tape.constant(tang));
  const Eigen::VectorXd plain = net.forward_batch(pts);
  CHECK((tape.value(f).col(0) - plain).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd vals;
  Mat grads;
  net.forward_with_gradient(pts, vals, grads);
  for (int i = 0; i < pts.rows(); ++i)
    for (int axis = 0; axis < 3; ++axis)
      CHECK(tape.value(g)(axis * pts.rows() + i, 0) ==
            doctest::Approx(grads(i, axis)).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip preserves parameters, box and behavior") {
  namespace fs = std::filesystem;
  NetConfig cfg;
  cfg.hidden_layers = 3;
  cfg.width = 48;
  cfg.skip_layer = 1;
  const SdfNetwork net = SdfNetwork::geometric_init(cfg, 0.42, 31);
  SceneBox box;
  box.min = Eigen::Vector3d(-0.3, -0.25, 0.45);
  box.max = Eigen::Vector3d(0.3, 0.35, 1.05);

  const std::string path = (fs::temp_directory_path() / "slsdf_net.ckpt").string();
  net.save_checkpoint(path, box);
  const auto [loaded, loaded_box] = SdfNetwork::load_checkpoint(path);
  CHECK(loaded.get_params() == net.get_params());
  CHECK((loaded_box.min - box.min).norm() == 0.0);
  CHECK((loaded_box.max - box.max).norm() == 0.0);
  const Mat pts = random_pts(5, 33);
  CHECK(loaded.forward_batch(pts) == net.forward_batch(pts));
}

TEST_CASE("parameter vector round trip") {
  NetConfig cfg;
  SdfNetwork net = SdfNetwork::geometric_init(cfg, 0.5, 41);
  Eigen::VectorXd p = net.get_params();
  CHECK(p.size() == net.num_params());
  p(7) += 0.125;
  p(p.size() - 1) = 1.75;  // log s
  net.set_params(p);
  CHECK(net.get_params() == p);
  CHECK(net.log_s() == 1.75);
}
