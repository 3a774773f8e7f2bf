#include <filesystem>

#include "doctest.h"
#include "slsdf/extract.hpp"
#include "slsdf/rng.hpp"
#include "slsdf/scene.hpp"

using namespace slsdf;
using ad::Mat;

namespace {

// analytic plane SDF at a given camera depth, in normalized coordinates
SdfBatchFn plane_field(const SceneBox& box, double z_plane) {
  return [box, z_plane](const Mat& pts) {
    Eigen::VectorXd f(pts.rows());
    const double scale = box.half_extent().z();
    for (long i = 0; i < pts.rows(); ++i) {
      const Eigen::Vector3d w = box.denormalize(pts.row(i).transpose());
      f(i) = (z_plane - w.z()) / scale;  // unit gradient in normalized z
    }
    return f;
  };
}

}  // namespace

TEST_CASE("root-finding extractor on an analytic plane is exact to 1e-6") {
  const RigCalibration rig = make_desk_rig();
  const SceneBox box = make_working_box(rig.camera, 0.5, 1.0);
  const DepthMap d = extract_depth(plane_field(box, 0.8), box, rig.camera, 0.5, 1.0, 64, 2);
  CHECK(d.valid(160, 128));
  for (int y = 0; y < 256; y += 17)
    for (int x = 0; x < 320; x += 13) {
      REQUIRE(d.valid(x, y));
      CHECK(std::abs(d.at(x, y) - 0.8) < 1e-6);
    }
}

TEST_CASE("no crossing means invalid pixels") {
  const RigCalibration rig = make_desk_rig();
  const SceneBox box = make_working_box(rig.camera, 0.5, 1.0);
  const SdfBatchFn positive = [](const Mat& pts) {
    return Eigen::VectorXd::Constant(pts.rows(), 0.5).eval();
  };
  const DepthMap d = extract_depth(positive, box, rig.camera, 0.5, 1.0, 32, 2);
  CHECK(d.valid_count() == 0);
}

TEST_CASE("expected-surface extractor: ramp crossing within a sample bin, empty ray invalid") {
  const RigCalibration rig = make_desk_rig();
  const SceneBox box = make_working_box(rig.camera, 0.5, 1.0);
  const int k = 64;
  const DepthMap d = extract_depth_expected(plane_field(box, 0.8), 120.0 * box.half_extent().z(),
                                            box, rig.camera, 0.5, 1.0, WeightMode::Eq3, k, 2);
  const double bin = 0.5 / k;
  for (int y = 10; y < 256; y += 31)
    for (int x = 7; x < 320; x += 41) {
      REQUIRE(d.valid(x, y));
      CHECK(std::abs(d.at(x, y) - 0.8) < bin + 1e-6);
    }

  // alpha-mode extractor leaves all-positive fields empty
  const SdfBatchFn positive = [](const Mat& pts) {
    return Eigen::VectorXd::Constant(pts.rows(), 0.5).eval();
  };
  const DepthMap e = extract_depth_expected(positive, 100.0, box, rig.camera, 0.5, 1.0,
                                            WeightMode::Alpha, 32, 2);
  CHECK(e.valid_count() == 0);
}

TEST_CASE("the two extractors agree on a sharp analytic field") {
  const RigCalibration rig = make_desk_rig();
  const SceneBox box = make_working_box(rig.camera, 0.5, 1.0);
  const int k = 64;
  const DepthMap root = extract_depth(plane_field(box, 0.77), box, rig.camera, 0.5, 1.0, k, 2);
  const DepthMap expd = extract_depth_expected(plane_field(box, 0.77),
                                               200.0 * box.half_extent().z(), box, rig.camera,
                                               0.5, 1.0, WeightMode::Eq3, k, 2);
  size_t agree = 0, both = 0;
  const double spacing = 0.5 / k;
  for (int y = 0; y < 256; ++y)
    for (int x = 0; x < 320; ++x) {
      if (!root.valid(x, y) || !expd.valid(x, y)) continue;
      ++both;
      if (std::abs(root.at(x, y) - expd.at(x, y)) < 2 * spacing) ++agree;
    }
  CHECK(both > 70000);
  CHECK(static_cast<double>(agree) / static_cast<double>(both) >= 0.95);
}

TEST_CASE("mean_l1: identical maps, constant offset, naive-loop oracle") {
  DepthMap a(8, 4, 0.5, 1.0, "simulator");
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) a.at(x, y) = static_cast<float>(0.6 + 0.01 * x + 0.02 * y);
  const DepthMetrics same = mean_l1(a, a);
  CHECK(same.mean_l1 == 0.0);
  CHECK(same.coverage == 1.0);

  DepthMap b = a;
  for (float& v : b.depth) v += 1.0f;
  CHECK(mean_l1(b, a).mean_l1 == doctest::Approx(1.0).epsilon(1e-6));

  // random maps with holes vs naive double loop
  DepthMap est(8, 4, 0.5, 1.0, "neural");
  DepthMap truth(8, 4, 0.5, 1.0, "simulator");
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) {
      if (rng_uniform(rng_key(1, x, y)) > 0.2)
        est.at(x, y) = static_cast<float>(rng_uniform(rng_key(2, x, y)));
      if (rng_uniform(rng_key(3, x, y)) > 0.2)
        truth.at(x, y) = static_cast<float>(rng_uniform(rng_key(4, x, y)));
    }
  double sum = 0;
  size_t both = 0, tvalid = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) {
      if (!truth.valid(x, y)) continue;
      ++tvalid;
      if (!est.valid(x, y)) continue;
      ++both;
      sum += std::abs(double(est.at(x, y)) - double(truth.at(x, y)));
    }
  const DepthMetrics m = mean_l1(est, truth);
  CHECK(std::abs(m.mean_l1 - sum / double(both)) < 1e-15);
  CHECK(m.coverage == doctest::Approx(double(both) / double(tvalid)));
  CHECK(m.shared_valid == both);

  DepthMap wrong_size(4, 4, 0.5, 1.0, "neural");
  CHECK_THROWS_AS(mean_l1(wrong_size, truth), DomainError);
}

TEST_CASE("depth map file round trip with NaN sentinels") {
  namespace fs = std::filesystem;
  DepthMap d(6, 5, 0.5, 1.0, "gray-code");
  d.at(2, 3) = 0.75f;
  d.at(5, 0) = 0.9f;
  const std::string path = (fs::temp_directory_path() / "slsdf_depth.slf").string();
  save_depth_map(path, d);
  const DepthMap loaded = load_depth_map(path);
  CHECK(loaded.width == 6);
  CHECK(loaded.source == "gray-code");
  CHECK(loaded.z_near == 0.5);
  CHECK(loaded.valid_count() == 2);
  CHECK(loaded.at(2, 3) == 0.75f);
  CHECK_FALSE(loaded.valid(0, 0));
}

TEST_CASE("error maps ride the same container") {
  namespace fs = std::filesystem;
  DepthMap a(4, 4, 0.5, 1.0, "neural"), t(4, 4, 0.5, 1.0, "simulator");
  for (int i = 0; i < 4; ++i) {
    a.at(i, i) = 0.8f;
    t.at(i, i) = 0.78f;
  }
  const DepthMetrics m = mean_l1(a, t);
  const std::string path = (fs::temp_directory_path() / "slsdf_err.slf").string();
  FloatMapHeader hdr{4, 4, 0.5, 1.0, "error"};
  write_float_map(path, m.error_map, hdr);
  FloatMapHeader back;
  const ImageF err = read_float_map(path, &back);
  CHECK(back.source == "error");
  CHECK(err.at(1, 1) == doctest::Approx(0.02).epsilon(1e-4));
  CHECK(std::isnan(err.at(1, 0)));
}
