#include "slsdf/trainer.hpp"

#include <chrono>
#include <ostream>

#include "slsdf/parallel.hpp"
#include "slsdf/rng.hpp"

namespace slsdf {

void TrainConfig::validate() const {
  if (batch_rays < 1) throw ConfigError("train: batch_rays must be >= 1");
  if (iterations < 0 || phase1_iterations < 0 || phase1_iterations > iterations)
    throw ConfigError("train: phase-1 iterations must be within the total");
  if (k_coarse < 2 || k_fine < 0) throw ConfigError("train: bad sample counts");
  if (!(z_near > 0 && z_near < z_far)) throw ConfigError("train: bad depth slab");
  if (loss.lambda_sc < 0 || loss.lambda_reg < 0) throw ConfigError("train: negative lambda");
  if (chunk_rays < 1) throw ConfigError("train: chunk_rays must be >= 1");
}

double loss_rc(const ad::Mat& rendered, const ad::Mat& captured) {
  if (rendered.rows() != captured.rows() || rendered.cols() != captured.cols())
    throw DomainError("loss_rc: shape mismatch");
  return (rendered - captured).cwiseAbs().mean();
}

double loss_sc(const ad::Mat& surface, const ad::Mat& captured) {
  return loss_rc(surface, captured);
}

double loss_reg(const ad::Mat& gradients) {
  if (gradients.cols() != 3) throw DomainError("loss_reg: expected a (samples x 3) matrix");
  const Eigen::ArrayXd norms = gradients.rowwise().norm().array();
  return ((norms - 1.0) * (norms - 1.0)).mean();
}

Trainer::Trainer(SdfNetwork net, SceneBox box, DeviceModel camera, DeviceModel projector,
                 CaptureSet captures, PatternSet patterns, TrainConfig cfg)
    : net_(std::move(net)),
      box_(box),
      camera_(std::move(camera)),
      projector_(std::move(projector)),
      captures_(std::move(captures)),
      patterns_(std::move(patterns)),
      cfg_(cfg),
      adam_(0, cfg.adam) {
  tune_allocator_for_large_buffers();
  cfg_.validate();
  box_.validate();
  if (captures_.images.size() != patterns_.patterns.size())
    throw ConfigError("trainer: capture/pattern counts differ");
  if (captures_.images.empty()) throw ConfigError("trainer: empty capture set");
  const ImageF& img = captures_.images.front();
  if (img.width != camera_.intrinsics.width || img.height != camera_.intrinsics.height)
    throw ConfigError("trainer: capture resolution does not match the camera");
  if (patterns_.width() != projector_.intrinsics.width ||
      patterns_.height() != projector_.intrinsics.height)
    throw ConfigError("trainer: pattern resolution does not match the projector");
  adam_ = Adam(net_.num_params(), cfg_.adam);
  rebuild_valid_pixels();
}

void Trainer::rebuild_valid_pixels() {
  valid_pixels_.clear();
  const ImageF& b = captures_.b_map;
  for (int i = 0; i < static_cast<int>(b.size()); ++i)
    if (b.data[static_cast<size_t>(i)] > cfg_.b_floor) valid_pixels_.push_back(i);
  if (valid_pixels_.empty())
    throw ConfigError("trainer: no pixels with fringe contrast above the floor");
}

void Trainer::add_pattern(Pattern pattern, ImageF image) {
  if (pattern.grid.width != patterns_.width() || pattern.grid.height != patterns_.height())
    throw ConfigError("add_pattern: pattern resolution mismatch");
  if (image.width != camera_.intrinsics.width || image.height != camera_.intrinsics.height)
    throw ConfigError("add_pattern: image resolution mismatch");
  patterns_.patterns.push_back(std::move(pattern));
  captures_.images.push_back(std::move(image));
  auto ab = estimate_ab(captures_.images);
  captures_.a_map = std::move(ab.first);
  captures_.b_map = std::move(ab.second);
  rebuild_valid_pixels();
}

namespace {

struct ChunkData {
  int rays = 0;
  ad::Mat enc, tang;              // (B x D), (3B x D)
  ad::Mat dt;                     // (m x K) world bin widths
  ad::Mat xs, ys, zs;             // (m x K) normalized sample coordinates
  std::vector<ad::Mat> colors;    // per pattern (m x K): a + b * P(pi(x))
  std::vector<ad::Mat> captured;  // per pattern (m x 1)
  ad::Mat a, b;                   // (m x 1)
  double weight_sum_plain = 0;    // sum over rays of plain sum(w), alpha mode
  int sc_rays = 0;                // rays with sum(w) > 1e-6 (plain estimate)
};

struct ChunkOut {
  double rc_sum = 0, sc_sum = 0, reg_sum = 0;
  int sc_rays = 0;
  Eigen::VectorXd grad;
};

}  // namespace

LossReport Trainer::step() {
  const auto t_start = std::chrono::steady_clock::now();
  const int m_total = cfg_.batch_rays;
  const int k_total = cfg_.k_coarse + cfg_.k_fine;
  const int n_pat = static_cast<int>(patterns_.patterns.size());
  const int chunks = (m_total + cfg_.chunk_rays - 1) / cfg_.chunk_rays;
  const bool phase2 = iteration_ >= cfg_.phase1_iterations;
  const double lam_rc = cfg_.loss.use_rendered ? 1.0 : 0.0;
  const double lam_sc = phase2 ? cfg_.loss.lambda_sc : 0.0;
  const double lam_reg = cfg_.loss.lambda_reg;
  const int width = camera_.intrinsics.width;

  // batch pixel draw (counter-keyed, independent of worker scheduling)
  std::vector<int> pixels(static_cast<size_t>(m_total));
  for (int j = 0; j < m_total; ++j) {
    const double u = rng_uniform(rng_key(cfg_.seed, 0xba7c4u, iteration_, j));
    size_t idx = static_cast<size_t>(u * static_cast<double>(valid_pixels_.size()));
    if (idx >= valid_pixels_.size()) idx = valid_pixels_.size() - 1;
    pixels[static_cast<size_t>(j)] = valid_pixels_[idx];
  }

  std::vector<ChunkData> data(static_cast<size_t>(chunks));
  std::vector<ChunkOut> out(static_cast<size_t>(chunks));

  // Phase 0: sampling and all tape constants (plain math, read-only net).
  parallel_for(chunks, cfg_.workers, [&](int c) {
    ChunkData& d = data[static_cast<size_t>(c)];
    const int ray0 = c * cfg_.chunk_rays;
    const int rays = std::min(cfg_.chunk_rays, m_total - ray0);
    d.rays = rays;
    const long b_rows = static_cast<long>(rays) * k_total;

    // coarse sampling, batched across the chunk
    ad::Mat coarse_pts(static_cast<long>(rays) * cfg_.k_coarse, 3);
    std::vector<Ray> world_rays(static_cast<size_t>(rays));
    std::vector<std::vector<double>> coarse_t(static_cast<size_t>(rays));
    for (int j = 0; j < rays; ++j) {
      const int pix = pixels[static_cast<size_t>(ray0 + j)];
      const Eigen::Vector2d pixel(pix % width, pix / width);
      Ray ray = pixel_to_ray_depth_slab(camera_, pixel, cfg_.z_near, cfg_.z_far);
      coarse_t[static_cast<size_t>(j)] = stratified_samples(
          ray.t_near, ray.t_far, cfg_.k_coarse, rng_key(cfg_.seed, 0x57a70u, iteration_, ray0 + j));
      for (int k = 0; k < cfg_.k_coarse; ++k)
        coarse_pts.row(static_cast<long>(j) * cfg_.k_coarse + k) =
            box_.normalize(ray.at(coarse_t[static_cast<size_t>(j)][static_cast<size_t>(k)]))
                .transpose();
      world_rays[static_cast<size_t>(j)] = ray;
    }
    Eigen::VectorXd coarse_f;
    if (cfg_.k_fine > 0) coarse_f = net_.forward_batch(coarse_pts);

    // fine sampling + merged sample set
    ad::Mat merged_pts(b_rows, 3);
    d.dt.resize(rays, k_total);
    d.xs.resize(rays, k_total);
    d.ys.resize(rays, k_total);
    d.zs.resize(rays, k_total);
    std::vector<ad::Mat> world_cols(3, ad::Mat(rays, k_total));
    for (int j = 0; j < rays; ++j) {
      const Ray& ray = world_rays[static_cast<size_t>(j)];
      std::vector<double> t = coarse_t[static_cast<size_t>(j)];
      if (cfg_.k_fine > 0) {
        std::vector<double> fv(static_cast<size_t>(cfg_.k_coarse));
        for (int k = 0; k < cfg_.k_coarse; ++k)
          fv[static_cast<size_t>(k)] = coarse_f(static_cast<long>(j) * cfg_.k_coarse + k);
        const std::vector<double> w =
            cfg_.weight_mode == WeightMode::Eq3
                ? weights_eq3(fv, net_.s(), t, ray.t_near, ray.t_far)
                : weights_alpha(fv, net_.s(), t);
        const std::vector<double> fine = sample_from_weights(
            w, ray.t_near, ray.t_far, cfg_.k_fine,
            rng_key(cfg_.seed, 0xf19e0u, iteration_, ray0 + j));
        t.insert(t.end(), fine.begin(), fine.end());
        std::sort(t.begin(), t.end());
      }
      const std::vector<double> dt = midpoint_bin_widths(t, ray.t_near, ray.t_far);
      for (int k = 0; k < k_total; ++k) {
        const Eigen::Vector3d xw = ray.at(t[static_cast<size_t>(k)]);
        const Eigen::Vector3d xn = box_.normalize(xw);
        merged_pts.row(static_cast<long>(j) * k_total + k) = xn.transpose();
        d.dt(j, k) = dt[static_cast<size_t>(k)];
        d.xs(j, k) = xn.x();
        d.ys(j, k) = xn.y();
        d.zs(j, k) = xn.z();
        world_cols[0](j, k) = xw.x();
        world_cols[1](j, k) = xw.y();
        world_cols[2](j, k) = xw.z();
      }
    }

    SdfNetwork::encode_with_tangents(merged_pts, net_.config().encoding, d.enc, d.tang);

    // pattern colors and captured intensities (constants in the graph)
    d.colors.assign(static_cast<size_t>(n_pat), ad::Mat(rays, k_total));
    d.captured.assign(static_cast<size_t>(n_pat), ad::Mat(rays, 1));
    d.a.resize(rays, 1);
    d.b.resize(rays, 1);
    for (int j = 0; j < rays; ++j) {
      const int pix = pixels[static_cast<size_t>(ray0 + j)];
      const int px = pix % width, py = pix / width;
      const double a = captures_.a_map.at(px, py);
      const double bb = captures_.b_map.at(px, py);
      d.a(j, 0) = a;
      d.b(j, 0) = bb;
      for (int i = 0; i < n_pat; ++i)
        d.captured[static_cast<size_t>(i)](j, 0) = captures_.images[static_cast<size_t>(i)].at(px, py);
      for (int k = 0; k < k_total; ++k) {
        const Eigen::Vector3d xw(world_cols[0](j, k), world_cols[1](j, k), world_cols[2](j, k));
        for (int i = 0; i < n_pat; ++i)
          d.colors[static_cast<size_t>(i)](j, k) =
              a + bb * pattern_term(patterns_.patterns[static_cast<size_t>(i)], projector_, xw);
      }
    }

    // plain surface-definedness census (only alpha mode can drop rays)
    if (cfg_.weight_mode == WeightMode::Alpha) {
      const Eigen::VectorXd f = net_.forward_batch(merged_pts);
      int count = 0;
      std::vector<double> fv(static_cast<size_t>(k_total)), tv(static_cast<size_t>(k_total), 0.0);
      for (int j = 0; j < rays; ++j) {
        for (int k = 0; k < k_total; ++k)
          fv[static_cast<size_t>(k)] = f(static_cast<long>(j) * k_total + k);
        double ws = 0;
        for (double wi : weights_alpha(fv, net_.s(), tv)) ws += wi;
        if (ws > 1e-6) ++count;
      }
      d.sc_rays = count;
    } else {
      d.sc_rays = rays;  // eq3 weights always sum to one
    }
  });

  int m_sc = 0;
  for (const ChunkData& d : data) m_sc += d.sc_rays;

  std::ostream* dump_target = debug_dump_;
  debug_dump_ = nullptr;

  // Phase 1: per-chunk tape build, forward, weighted backward.
  parallel_for(chunks, cfg_.workers, [&](int c) {
    const ChunkData& d = data[static_cast<size_t>(c)];
    ChunkOut& o = out[static_cast<size_t>(c)];
    ad::Tape tape;
    tape.reserve(160 + 12 * static_cast<size_t>(n_pat));
    const auto params = net_.emit_params(tape);
    const ad::Var enc = tape.constant(d.enc);
    const ad::Var tang = tape.constant(d.tang);
    auto [f_col, g_col] = net_.emit_forward_with_tangents(tape, params, enc, tang);
    const ad::Var s_var = net_.emit_s(tape, params);
    const ad::Var f_mk = tape.reshape_row_major(f_col, d.rays, k_total);
    const ad::Var w = emit_weights(tape, cfg_.weight_mode, f_mk, s_var, d.dt);

    // rendered color loss (sum form; means assembled by the reducer)
    ad::Var rc_sum{};
    for (int i = 0; i < n_pat; ++i) {
      const ad::Var rendered = tape.row_sum(tape.mul(w, tape.constant(d.colors[static_cast<size_t>(i)])));
      const ad::Var resid =
          tape.sum(tape.abs(tape.sub(rendered, tape.constant(d.captured[static_cast<size_t>(i)]))));
      rc_sum = rc_sum.valid() ? tape.add(rc_sum, resid) : resid;
    }

    // Eikonal residual over every sample of the chunk
    const long b_rows = static_cast<long>(d.rays) * k_total;
    const ad::Var gx = tape.slice_rows(g_col, 0, static_cast<int>(b_rows));
    const ad::Var gy = tape.slice_rows(g_col, static_cast<int>(b_rows), static_cast<int>(b_rows));
    const ad::Var gz =
        tape.slice_rows(g_col, 2 * static_cast<int>(b_rows), static_cast<int>(b_rows));
    const ad::Var norm = tape.sqrt(tape.add(
        tape.add(tape.mul(gx, gx), tape.mul(gy, gy)), tape.mul(gz, gz)));
    const ad::Var resid = tape.add_scalar(norm, -1.0);
    const ad::Var reg_sum = tape.sum(tape.mul(resid, resid));

    // surface color loss through the expected surface point
    const SurfaceEmit surf =
        emit_expected_surface(tape, w, d.xs, d.ys, d.zs, box_, cfg_.weight_mode);
    const SurfaceColorEmit scolor =
        emit_surface_color(tape, surf, patterns_, projector_, d.a, d.b);
    ad::Mat sc_mask(d.rays, 1);
    {
      const ad::Mat& ws = tape.value(surf.weight_sum);
      for (int j = 0; j < d.rays; ++j) sc_mask(j, 0) = ws(j, 0) > 1e-6 ? 1.0 : 0.0;
    }
    const ad::Var sc_mask_c = tape.constant(sc_mask);
    ad::Var sc_sum{};
    for (int i = 0; i < n_pat; ++i) {
      const ad::Var diff = tape.abs(tape.sub(scolor.intensities[static_cast<size_t>(i)],
                                             tape.constant(d.captured[static_cast<size_t>(i)])));
      const ad::Var masked = tape.sum(tape.mul(diff, sc_mask_c));
      sc_sum = sc_sum.valid() ? tape.add(sc_sum, masked) : masked;
    }

    o.rc_sum = tape.value(rc_sum)(0, 0);
    o.reg_sum = tape.value(reg_sum)(0, 0);
    o.sc_sum = tape.value(sc_sum)(0, 0);
    o.sc_rays = static_cast<int>(sc_mask.sum());

    if (dump_target && c == 0) tape.dump(*dump_target);

    std::vector<std::pair<ad::Var, double>> seeds;
    if (lam_rc > 0) seeds.emplace_back(rc_sum, lam_rc / (double(m_total) * n_pat));
    if (lam_reg > 0) seeds.emplace_back(reg_sum, lam_reg / (double(m_total) * k_total));
    if (lam_sc > 0 && m_sc > 0) seeds.emplace_back(sc_sum, lam_sc / (double(m_sc) * n_pat));
    if (!seeds.empty()) {
      tape.backward_weighted(seeds);
      o.grad = net_.collect_gradients(tape, params);
    } else {
      o.grad = Eigen::VectorXd::Zero(net_.num_params());
    }
  });

  // ordered reduction: results are invariant to worker count
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net_.num_params());
  double rc_total = 0, sc_total = 0, reg_total = 0;
  int sc_rays_final = 0;
  for (const ChunkOut& o : out) {
    grad += o.grad;
    rc_total += o.rc_sum;
    sc_total += o.sc_sum;
    reg_total += o.reg_sum;
    sc_rays_final += o.sc_rays;
  }

  LossReport rep;
  rep.iteration = iteration_;
  rep.pattern_count = n_pat;
  rep.l_rc = rc_total / (double(m_total) * n_pat);
  rep.l_reg = reg_total / (double(m_total) * k_total);
  rep.l_sc = sc_rays_final > 0 ? sc_total / (double(sc_rays_final) * n_pat) : 0.0;
  rep.total = lam_rc * rep.l_rc + lam_sc * rep.l_sc + lam_reg * rep.l_reg;
  rep.inv_s = 1.0 / net_.s();
  if (!std::isfinite(rep.total) || !grad.allFinite())
    throw NumericError("non-finite loss at iteration " + std::to_string(iteration_));

  Eigen::VectorXd params_flat = net_.get_params();
  Eigen::VectorXd lr_scale = Eigen::VectorXd::Ones(params_flat.size());
  lr_scale(params_flat.size() - 1) = cfg_.s_lr_scale;  // log s moves on the NeuS scale
  adam_.step(params_flat, grad, &lr_scale);
  net_.set_params(params_flat);
  last_grad_ = std::move(grad);

  ++iteration_;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          t_start)
                    .count();
  return rep;
}

void Trainer::write_csv_header(std::ostream& os) {
  os << "iteration,patterns,l_rc,l_sc,l_reg,total,inv_s,wall_ms\n";
}

void Trainer::append_csv(std::ostream& os, const LossReport& r) {
  os.precision(12);
  os << r.iteration << "," << r.pattern_count << "," << r.l_rc << "," << r.l_sc << "," << r.l_reg
     << "," << r.total << "," << r.inv_s << "," << r.wall_ms << "\n";
}

}  // namespace slsdf
