#include "slsdf/extract.hpp"

#include "slsdf/parallel.hpp"

namespace slsdf {

namespace {

// batched over rows of camera pixels to keep the network evaluations in
// large matrix products
struct RowContext {
  std::vector<Ray> rays;
  ad::Mat points;  // (w * k) x 3 normalized
};

void build_row(const DeviceModel& camera, const SceneBox& box, int y, double z_near, double z_far,
               int k, RowContext& ctx) {
  const int w = camera.intrinsics.width;
  ctx.rays.resize(static_cast<size_t>(w));
  ctx.points.resize(static_cast<long>(w) * k, 3);
  for (int x = 0; x < w; ++x) {
    const Ray ray = pixel_to_ray_depth_slab(camera, {double(x), double(y)}, z_near, z_far);
    ctx.rays[static_cast<size_t>(x)] = ray;
    for (int i = 0; i < k; ++i) {
      const double t = ray.t_near + (ray.t_far - ray.t_near) * (i + 0.5) / k;
      ctx.points.row(static_cast<long>(x) * k + i) = box.normalize(ray.at(t)).transpose();
    }
  }
}

}  // namespace

DepthMap extract_depth(const SdfBatchFn& field, const SceneBox& box, const DeviceModel& camera,
                       double z_near, double z_far, int samples_per_ray, int workers) {
  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  DepthMap map(w, h, z_near, z_far, "neural");
  const int k = samples_per_ray;
  tune_allocator_for_large_buffers();
  parallel_for(h, workers, [&](int y) {
    RowContext ctx;
    build_row(camera, box, y, z_near, z_far, k, ctx);
    const Eigen::VectorXd f = field(ctx.points);
    // bracket the first positive -> negative crossing per pixel
    std::vector<int> active;
    std::vector<double> lo(static_cast<size_t>(w)), hi(static_cast<size_t>(w));
    for (int x = 0; x < w; ++x) {
      const Ray& ray = ctx.rays[static_cast<size_t>(x)];
      const double step = (ray.t_far - ray.t_near) / k;
      for (int i = 0; i + 1 < k; ++i) {
        const double f0 = f(static_cast<long>(x) * k + i);
        const double f1 = f(static_cast<long>(x) * k + i + 1);
        if (f0 > 0 && f1 <= 0) {
          lo[static_cast<size_t>(x)] = ray.t_near + step * (i + 0.5);
          hi[static_cast<size_t>(x)] = lo[static_cast<size_t>(x)] + step;
          active.push_back(x);
          break;
        }
      }
    }
    // bisection, batched across the row's active pixels (f(lo) > 0 >= f(hi))
    ad::Mat mids(static_cast<long>(active.size()), 3);
    for (int it = 0; it < 30 && !active.empty(); ++it) {
      for (size_t j = 0; j < active.size(); ++j) {
        const int x = active[j];
        mids.row(static_cast<long>(j)) =
            box.normalize(ctx.rays[static_cast<size_t>(x)].at(0.5 * (lo[static_cast<size_t>(x)] +
                                                                     hi[static_cast<size_t>(x)])))
                .transpose();
      }
      const Eigen::VectorXd fm = field(mids.topRows(static_cast<long>(active.size())));
      for (size_t j = 0; j < active.size(); ++j) {
        const int x = active[j];
        const double mid = 0.5 * (lo[static_cast<size_t>(x)] + hi[static_cast<size_t>(x)]);
        (fm(static_cast<long>(j)) > 0 ? lo : hi)[static_cast<size_t>(x)] = mid;
      }
    }
    for (int x : active) {
      const double t_hit = 0.5 * (lo[static_cast<size_t>(x)] + hi[static_cast<size_t>(x)]);
      map.at(x, y) =
          static_cast<float>(device_depth(camera, ctx.rays[static_cast<size_t>(x)].at(t_hit)));
    }
  });
  return map;
}

DepthMap extract_depth_expected(const SdfBatchFn& field, double s, const SceneBox& box,
                                const DeviceModel& camera, double z_near, double z_far,
                                WeightMode mode, int samples_per_ray, int workers) {
  const int w = camera.intrinsics.width, h = camera.intrinsics.height;
  DepthMap map(w, h, z_near, z_far, "neural-expected");
  const int k = samples_per_ray;
  tune_allocator_for_large_buffers();
  parallel_for(h, workers, [&](int y) {
    RowContext ctx;
    build_row(camera, box, y, z_near, z_far, k, ctx);
    const Eigen::VectorXd f = field(ctx.points);
    std::vector<double> fv(static_cast<size_t>(k)), tv(static_cast<size_t>(k));
    for (int x = 0; x < w; ++x) {
      const Ray& ray = ctx.rays[static_cast<size_t>(x)];
      for (int i = 0; i < k; ++i) {
        fv[static_cast<size_t>(i)] = f(static_cast<long>(x) * k + i);
        tv[static_cast<size_t>(i)] = ray.t_near + (ray.t_far - ray.t_near) * (i + 0.5) / k;
      }
      const std::vector<double> wts = mode == WeightMode::Eq3
                                          ? weights_eq3(fv, s, tv, ray.t_near, ray.t_far)
                                          : weights_alpha(fv, s, tv);
      double wsum = 0, tsum = 0;
      for (int i = 0; i < k; ++i) {
        wsum += wts[static_cast<size_t>(i)];
        tsum += wts[static_cast<size_t>(i)] * tv[static_cast<size_t>(i)];
      }
      if (wsum < 1e-3) continue;
      const double t_exp = tsum / wsum;
      map.at(x, y) = static_cast<float>(device_depth(camera, ray.at(t_exp)));
    }
  });
  return map;
}

DepthMap extract_depth(const SdfNetwork& net, const SceneBox& box, const DeviceModel& camera,
                       double z_near, double z_far, int samples_per_ray, int workers) {
  return extract_depth([&net](const ad::Mat& pts) { return net.forward_batch(pts); }, box,
                       camera, z_near, z_far, samples_per_ray, workers);
}

DepthMap extract_depth_expected(const SdfNetwork& net, const SceneBox& box,
                                const DeviceModel& camera, double z_near, double z_far,
                                WeightMode mode, int samples_per_ray, int workers) {
  return extract_depth_expected([&net](const ad::Mat& pts) { return net.forward_batch(pts); },
                                net.s(), box, camera, z_near, z_far, mode, samples_per_ray,
                                workers);
}

}  // namespace slsdf
