#pragma once

#include <optional>
#include <vector>

#include "slsdf/autodiff.hpp"
#include "slsdf/geometry.hpp"
#include "slsdf/pattern.hpp"
#include "slsdf/sdf_network.hpp"

namespace slsdf {

enum class WeightMode { Eq3, Alpha };
const char* weight_mode_name(WeightMode m);
WeightMode weight_mode_from_name(const std::string& name);

/// Logistic density phi_s(x) = s e^{-sx} / (1 + e^{-sx})^2.
double logistic_density(double x, double s);
/// Logistic CDF Phi_s(x) = sigmoid(s x).
double logistic_cdf(double x, double s);

struct RaySamples {
  std::vector<double> t;  // ascending ray parameters (world meters)
  ad::Mat points;         // K x 3 normalized coordinates (network input space)
};

/// K stratified-uniform samples: one per equal bin of [t0, t1], jittered by
/// the counter-keyed stream.
std::vector<double> stratified_samples(double t0, double t1, int k, uint64_t key);

/// Hierarchical sampling: k_coarse stratified samples, then k_fine samples
/// from the inverse CDF of the coarse weight distribution under the current
/// network (no gradients flow through sample positions). Merged and sorted.
RaySamples sample_ray(const SdfNetwork& net, const SceneBox& box, const Ray& world_ray,
                      int k_coarse, int k_fine, uint64_t key, WeightMode mode);

/// Draw k_fine positions from the piecewise-constant pdf given by bin
/// weights over [t0, t1] split into equal bins.
std::vector<double> sample_from_weights(const std::vector<double>& bin_weights, double t0,
                                        double t1, int k_fine, uint64_t key);

/// Bin widths for the discrete rendering integral: the sample midpoints
/// partition [t_near, t_far], so dt_i = (t_{i+1}+t_i)/2 - (t_i+t_{i-1})/2
/// with the first/last bins extended to the ray bounds. Sum(dt) = t_far - t_near.
std::vector<double> midpoint_bin_widths(const std::vector<double>& t, double t_near, double t_far);

/// Normalized logistic-density weights: w_i = phi_s(f_i) dt_i / sum_k phi_s(f_k) dt_k.
std::vector<double> weights_eq3(const std::vector<double>& sdf, double s,
                                const std::vector<double>& t, double t_near, double t_far);

/// Alpha-compositing weights: alpha_i = max((Phi(f_i)-Phi(f_{i+1}))/Phi(f_i), 0),
/// w_i = alpha_i prod_{j<i} (1-alpha_j). Sum(w) <= 1.
std::vector<double> weights_alpha(const std::vector<double>& sdf, double s,
                                  const std::vector<double>& t);

/// P_i(pi(x)) for a world point; zero when the point is behind the projector
/// or projects outside the pattern.
double pattern_term(const Pattern& pattern, const DeviceModel& projector,
                    const Eigen::Vector3d& x);

struct PixelRender {
  std::vector<double> intensities;  // one per pattern
  double weight_sum = 0;
};

/// I'_i = sum_k w_k (a + b P_i(pi(x_k))); samples behind the projector or
/// outside the pattern contribute the background term only.
PixelRender render_pixel(const ad::Mat& points_world, const std::vector<double>& weights,
                         const PatternSet& patterns, const DeviceModel& projector, double a,
                         double b);

/// Expected surface point sum(w x) / sum(w); empty when sum(w) <= 1e-6.
std::optional<Eigen::Vector3d> expected_surface(const ad::Mat& points,
                                                const std::vector<double>& weights);

/// I_hat_i = a + b P_i(pi(s)); background-only when s is behind the projector
/// or projects outside the pattern.
std::vector<double> surface_color(const Eigen::Vector3d& surface_world,
                                  const PatternSet& patterns, const DeviceModel& projector,
                                  double a, double b);

// -- tape builders (batched across rays; K samples per ray) -----------------

/// Weights from an MxK SDF matrix. dt is the per-ray bin-width matrix for
/// eq3 mode (ignored in alpha mode).
ad::Var emit_weights(ad::Tape& tape, WeightMode mode, ad::Var sdf_mk, ad::Var s,
                     const ad::Mat& dt);

struct SurfaceEmit {
  ad::Var x, y, z;        // Mx1 world coordinates of the expected surface
  ad::Var weight_sum;     // Mx1
};
/// Expected surface point per ray from normalized-space sample positions,
/// mapped back to world coordinates (isotropic box). In eq3 mode the weights
/// are used as-is (they sum to one); in alpha mode they are renormalized.
SurfaceEmit emit_expected_surface(ad::Tape& tape, ad::Var weights, const ad::Mat& xs,
                                  const ad::Mat& ys, const ad::Mat& zs, const SceneBox& box,
                                  WeightMode mode);

struct SurfaceColorEmit {
  std::vector<ad::Var> intensities;  // Mx1 per pattern
  ad::Mat in_frustum;                // Mx1 0/1 mask (computed from forward values)
};
/// Differentiable a + b P_i(pi(s)) through the projector projection and the
/// bilinear sampler.
SurfaceColorEmit emit_surface_color(ad::Tape& tape, const SurfaceEmit& surface,
                                    const PatternSet& patterns, const DeviceModel& projector,
                                    const ad::Mat& a, const ad::Mat& b);

}  // namespace slsdf
