#pragma once

#include <Eigen/Dense>

#include "slsdf/common.hpp"

namespace slsdf {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(int n, AdamConfig cfg)
      : cfg_(cfg), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  /// One update. lr_scale, when given, multiplies the step per coordinate
  /// (used for reparameterized coordinates like the sharpness, which NeuS
  /// trains as s = exp(10 v): same moments, 10x the log-space step).
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
            const Eigen::VectorXd* lr_scale = nullptr) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw DomainError("adam: size mismatch");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    const Eigen::VectorXd denom =
        (v_ / c2).cwiseSqrt() + Eigen::VectorXd::Constant(m_.size(), cfg_.epsilon);
    Eigen::VectorXd step = cfg_.learning_rate * (m_ / c1).cwiseQuotient(denom);
    if (lr_scale) step = step.cwiseProduct(*lr_scale);
    params -= step;
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace slsdf
