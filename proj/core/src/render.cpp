#include "slsdf/render.hpp"

#include <algorithm>

#include "slsdf/rng.hpp"

namespace slsdf {

const char* weight_mode_name(WeightMode m) { return m == WeightMode::Eq3 ? "eq3" : "alpha"; }

WeightMode weight_mode_from_name(const std::string& name) {
  if (name == "eq3") return WeightMode::Eq3;
  if (name == "alpha") return WeightMode::Alpha;
  throw ConfigError("unknown weight mode: " + name);
}

double logistic_density(double x, double s) {
  // s * sigmoid(sx) * (1 - sigmoid(sx)), stable in both tails
  const double sx = s * x;
  double sig;
  if (sx >= 0) {
    const double e = std::exp(-sx);
    sig = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(sx);
    sig = e / (1.0 + e);
  }
  return s * sig * (1.0 - sig);
}

double logistic_cdf(double x, double s) {
  const double sx = s * x;
  if (sx >= 0) return 1.0 / (1.0 + std::exp(-sx));
  const double e = std::exp(sx);
  return e / (1.0 + e);
}

std::vector<double> stratified_samples(double t0, double t1, int k, uint64_t key) {
  std::vector<double> t(static_cast<size_t>(k));
  const double h = (t1 - t0) / k;
  for (int i = 0; i < k; ++i)
    t[static_cast<size_t>(i)] = t0 + (i + rng_uniform(rng_key(key, 0x57a7u, i))) * h;
  return t;
}

std::vector<double> sample_from_weights(const std::vector<double>& bin_weights, double t0,
                                        double t1, int k_fine, uint64_t key) {
  const int nb = static_cast<int>(bin_weights.size());
  std::vector<double> cdf(static_cast<size_t>(nb) + 1, 0.0);
  for (int i = 0; i < nb; ++i) cdf[i + 1] = cdf[i] + std::max(bin_weights[i], 0.0) + 1e-12;
  const double total = cdf.back();
  const double h = (t1 - t0) / nb;
  std::vector<double> out(static_cast<size_t>(k_fine));
  for (int j = 0; j < k_fine; ++j) {
    const double u = rng_uniform(rng_key(key, 0xf19eu, j)) * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    int bin = static_cast<int>(std::distance(cdf.begin(), it)) - 1;
    bin = std::clamp(bin, 0, nb - 1);
    const double frac = (u - cdf[bin]) / (cdf[bin + 1] - cdf[bin]);
    out[static_cast<size_t>(j)] = t0 + (bin + frac) * h;
  }
  return out;
}

RaySamples sample_ray(const SdfNetwork& net, const SceneBox& box, const Ray& world_ray,
                      int k_coarse, int k_fine, uint64_t key, WeightMode mode) {
  if (k_coarse < 2) throw DomainError("sample_ray: need at least 2 coarse samples");
  std::vector<double> t = stratified_samples(world_ray.t_near, world_ray.t_far, k_coarse, key);
  auto normalized_points = [&](const std::vector<double>& ts) {
    ad::Mat pts(static_cast<long>(ts.size()), 3);
    for (size_t i = 0; i < ts.size(); ++i)
      pts.row(static_cast<long>(i)) = box.normalize(world_ray.at(ts[i])).transpose();
    return pts;
  };
  if (k_fine > 0) {
    const Eigen::VectorXd f = net.forward_batch(normalized_points(t));
    const std::vector<double> fv(f.data(), f.data() + f.size());
    const std::vector<double> w =
        mode == WeightMode::Eq3 ? weights_eq3(fv, net.s(), t, world_ray.t_near, world_ray.t_far)
                                : weights_alpha(fv, net.s(), t);
    std::vector<double> fine =
        sample_from_weights(w, world_ray.t_near, world_ray.t_far, k_fine, key);
    t.insert(t.end(), fine.begin(), fine.end());
    std::sort(t.begin(), t.end());
  }
  RaySamples s;
  s.points = normalized_points(t);
  s.t = std::move(t);
  return s;
}

std::vector<double> midpoint_bin_widths(const std::vector<double>& t, double t_near,
                                        double t_far) {
  const size_t k = t.size();
  std::vector<double> dt(k);
  if (k == 1) {
    dt[0] = t_far - t_near;
    return dt;
  }
  for (size_t i = 0; i < k; ++i) {
    const double lo = i == 0 ? t_near : 0.5 * (t[i - 1] + t[i]);
    const double hi = i == k - 1 ? t_far : 0.5 * (t[i] + t[i + 1]);
    dt[i] = hi - lo;
  }
  return dt;
}

std::vector<double> weights_eq3(const std::vector<double>& sdf, double s,
                                const std::vector<double>& t, double t_near, double t_far) {
  if (sdf.size() != t.size() || sdf.size() < 2)
    throw DomainError("weights_eq3: need matching sdf/t with >= 2 samples");
  const std::vector<double> dt = midpoint_bin_widths(t, t_near, t_far);
  std::vector<double> w(sdf.size());
  double denom = 1e-30;
  for (size_t i = 0; i < sdf.size(); ++i) {
    w[i] = logistic_density(sdf[i], s) * dt[i];
    denom += w[i];
  }
  for (double& wi : w) wi /= denom;
  return w;
}

std::vector<double> weights_alpha(const std::vector<double>& sdf, double s,
                                  const std::vector<double>& t) {
  if (sdf.size() != t.size() || sdf.size() < 2)
    throw DomainError("weights_alpha: need matching sdf/t with >= 2 samples");
  const size_t k = sdf.size();
  std::vector<double> w(k, 0.0);
  // The compositing product is seeded with the entry CDF: a virtual opacity
  // 1 - Phi_s(f_0) accounts for rays that would already be inside a surface
  // at t_near. For monotone profiles the product then telescopes to exact
  // CDF differences Phi_i - Phi_{i+1}, which is shift-sensitive in f: it
  // pins the SDF sign, which the plain ratio form leaves as a gauge freedom
  // (the captures are rendered identically for f and f + c in its tails).
  double transmittance = logistic_cdf(sdf[0], s);
  for (size_t i = 0; i + 1 < k; ++i) {
    const double c0 = logistic_cdf(sdf[i], s);
    const double c1 = logistic_cdf(sdf[i + 1], s);
    double alpha = std::max((c0 - c1) / std::max(c0, 1e-30), 0.0);
    // capped below full opacity so the log-space tape path stays finite;
    // both implementations share the cap
    alpha = std::min(alpha, 1.0 - 1e-7);
    w[i] = transmittance * alpha;
    transmittance *= 1.0 - alpha;
  }
  return w;
}

double pattern_term(const Pattern& pattern, const DeviceModel& projector,
                    const Eigen::Vector3d& x) {
  const Eigen::Vector3d dev = projector.to_device(x);
  if (dev.z() <= 1e-9) return 0.0;
  const Intrinsics& in = projector.intrinsics;
  const double u = in.fx * dev.x() / dev.z() + in.cx;
  const double v = in.fy * dev.y() / dev.z() + in.cy;
  if (!in.contains(u, v)) return 0.0;
  return sample_bilinear(pattern.grid, u, v).value;
}

PixelRender render_pixel(const ad::Mat& points_world, const std::vector<double>& weights,
                         const PatternSet& patterns, const DeviceModel& projector, double a,
                         double b) {
  if (points_world.rows() != static_cast<long>(weights.size()))
    throw DomainError("render_pixel: weights/points mismatch");
  if (a < 0 || b < 0) throw DomainError("render_pixel: a and b must be non-negative");
  PixelRender out;
  out.intensities.assign(patterns.patterns.size(), 0.0);
  for (double w : weights) out.weight_sum += w;
  for (size_t i = 0; i < patterns.patterns.size(); ++i) {
    double acc = 0;
    for (size_t k = 0; k < weights.size(); ++k) {
      const Eigen::Vector3d x = points_world.row(static_cast<long>(k)).transpose();
      acc += weights[k] * (a + b * pattern_term(patterns.patterns[i], projector, x));
    }
    out.intensities[i] = acc;
  }
  return out;
}

std::optional<Eigen::Vector3d> expected_surface(const ad::Mat& points,
                                                const std::vector<double>& weights) {
  if (points.rows() != static_cast<long>(weights.size()))
    throw DomainError("expected_surface: weights/points mismatch");
  double wsum = 0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (size_t k = 0; k < weights.size(); ++k) {
    wsum += weights[k];
    acc += weights[k] * points.row(static_cast<long>(k)).transpose();
  }
  if (wsum <= 1e-6) return std::nullopt;
  return Eigen::Vector3d(acc / wsum);
}

std::vector<double> surface_color(const Eigen::Vector3d& surface_world,
                                  const PatternSet& patterns, const DeviceModel& projector,
                                  double a, double b) {
  std::vector<double> out(patterns.patterns.size(), a);
  for (size_t i = 0; i < patterns.patterns.size(); ++i)
    out[i] = a + b * pattern_term(patterns.patterns[i], projector, surface_world);
  return out;
}

ad::Var emit_weights(ad::Tape& tape, WeightMode mode, ad::Var sdf_mk, ad::Var s,
                     const ad::Mat& dt) {
  if (mode == WeightMode::Eq3) {
    // phi_s(f) = s sig(sf)(1 - sig(sf)); w = phi dt / rowsum(phi dt)
    ad::Var sf = tape.scalar_mul(s, sdf_mk);
    ad::Var sig = tape.sigmoid(sf);
    ad::Var one_minus = tape.add_scalar(tape.scale(sig, -1.0), 1.0);
    ad::Var phi = tape.scalar_mul(s, tape.mul(sig, one_minus));
    ad::Var phidt = tape.mul(phi, tape.constant(dt));
    ad::Var denom = tape.add_scalar(tape.row_sum(phidt), 1e-30);
    return tape.mul(phidt, tape.broadcast_col(tape.reciprocal(denom), sdf_mk.cols));
  }
  // alpha mode: alpha_i = max((Phi_i - Phi_{i+1})/Phi_i, 0) for i < K-1,
  // w_i = alpha_i * prod_{j<i}(1 - alpha_j) via exp(cumsum(log(1 - alpha))).
  // The column shift Phi_{i+1} is a matmul with a constant shift matrix and
  // the last column is masked out, mirroring the plain implementation.
  const int k = sdf_mk.cols;
  ad::Var cdf = tape.sigmoid(tape.scalar_mul(s, sdf_mk));
  ad::Mat head_mask = ad::Mat::Zero(sdf_mk.rows, k);
  head_mask.leftCols(k - 1).setOnes();
  ad::Mat shift = ad::Mat::Zero(k, k);
  for (int i = 0; i + 1 < k; ++i) shift(i + 1, i) = 1.0;  // col i of product = col i+1
  ad::Var cdf_next = tape.matmul(cdf, tape.constant(shift));
  ad::Var num = tape.sub(cdf, cdf_next);
  ad::Var ratio = tape.mul(num, tape.reciprocal(tape.max_const(cdf, 1e-30)));
  ad::Var alpha = tape.mul(tape.max_const(ratio, 0.0), tape.constant(head_mask));
  alpha = tape.min_const(alpha, 1.0 - 1e-7);
  ad::Var log_om = tape.log(tape.add_scalar(tape.scale(alpha, -1.0), 1.0));
  ad::Var transmittance = tape.exp(tape.cumsum_rows_exclusive(log_om));
  // entry-CDF seed, mirroring the plain implementation
  ad::Mat first_col = ad::Mat::Zero(k, 1);
  first_col(0, 0) = 1.0;
  ad::Var phi0 = tape.matmul(cdf, tape.constant(first_col));  // Mx1
  return tape.mul(tape.mul(alpha, transmittance), tape.broadcast_col(phi0, k));
}

SurfaceEmit emit_expected_surface(ad::Tape& tape, ad::Var weights, const ad::Mat& xs,
                                  const ad::Mat& ys, const ad::Mat& zs, const SceneBox& box,
                                  WeightMode mode) {
  SurfaceEmit out;
  out.weight_sum = tape.row_sum(weights);
  ad::Var w = weights;
  if (mode == WeightMode::Alpha) {
    ad::Var inv = tape.reciprocal(tape.max_const(out.weight_sum, 1e-12));
    w = tape.mul(weights, tape.broadcast_col(inv, weights.cols));
  }
  const Eigen::Vector3d c = box.center();
  const Eigen::Vector3d h = box.half_extent();
  out.x = tape.add_scalar(tape.scale(tape.row_sum(tape.mul(w, tape.constant(xs))), h.x()), c.x());
  out.y = tape.add_scalar(tape.scale(tape.row_sum(tape.mul(w, tape.constant(ys))), h.y()), c.y());
  out.z = tape.add_scalar(tape.scale(tape.row_sum(tape.mul(w, tape.constant(zs))), h.z()), c.z());
  return out;
}

SurfaceColorEmit emit_surface_color(ad::Tape& tape, const SurfaceEmit& surface,
                                    const PatternSet& patterns, const DeviceModel& projector,
                                    const ad::Mat& a, const ad::Mat& b) {
  const Eigen::Matrix3d& r = projector.rotation;
  const Eigen::Vector3d& tr = projector.translation;
  auto lin = [&](int row) {
    ad::Var v = tape.scale(surface.x, r(row, 0));
    v = tape.add(v, tape.scale(surface.y, r(row, 1)));
    v = tape.add(v, tape.scale(surface.z, r(row, 2)));
    return tape.add_scalar(v, tr(row));
  };
  ad::Var px = lin(0), py = lin(1), pz = lin(2);
  const Intrinsics& in = projector.intrinsics;

  // in-frustum mask from forward values; the switch itself carries no gradient
  const long m = surface.x.rows;
  ad::Mat mask(m, 1);
  const ad::Mat& zv = tape.value(pz);
  {
    const ad::Mat& xv = tape.value(px);
    const ad::Mat& yv = tape.value(py);
    for (long i = 0; i < m; ++i) {
      bool ok = zv(i, 0) > 1e-9;
      if (ok) {
        const double u = in.fx * xv(i, 0) / zv(i, 0) + in.cx;
        const double v = in.fy * yv(i, 0) / zv(i, 0) + in.cy;
        ok = in.contains(u, v);
      }
      mask(i, 0) = ok ? 1.0 : 0.0;
    }
  }
  // clamp z away from the plane so masked-off rows stay finite
  ad::Var zsafe = tape.max_const(pz, 1e-6);
  ad::Var invz = tape.reciprocal(zsafe);
  ad::Var u = tape.add_scalar(tape.scale(tape.mul(px, invz), in.fx), in.cx);
  ad::Var v = tape.add_scalar(tape.scale(tape.mul(py, invz), in.fy), in.cy);

  SurfaceColorEmit out;
  out.in_frustum = mask;
  ad::Var zero = tape.constant(ad::Mat::Zero(m, 1));
  ad::Var av = tape.constant(a);
  ad::Var bv = tape.constant(b);
  for (const Pattern& p : patterns.patterns) {
    ad::Var sampled = tape.pattern_sample(u, v, &p.grid);
    ad::Var gated = tape.select(mask, sampled, zero);
    out.intensities.push_back(tape.add(av, tape.mul(bv, gated)));
  }
  return out;
}

}  // namespace slsdf
