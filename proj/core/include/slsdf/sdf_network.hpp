#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "slsdf/autodiff.hpp"
#include "slsdf/geometry.hpp"

namespace slsdf {

struct EncodingConfig {
  int num_frequencies = 6;  // L
  bool include_input = true;
  int dim() const { return (include_input ? 3 : 0) + 6 * num_frequencies; }
};

/// Axis-aligned working volume; normalize maps it onto [-1,1]^3 per axis.
struct SceneBox {
  Eigen::Vector3d min = Eigen::Vector3d(-1, -1, -1);
  Eigen::Vector3d max = Eigen::Vector3d(1, 1, 1);

  void validate() const;
  Eigen::Vector3d normalize(const Eigen::Vector3d& world) const;
  Eigen::Vector3d denormalize(const Eigen::Vector3d& normalized) const;
  Eigen::Vector3d half_extent() const { return 0.5 * (max - min); }
  Eigen::Vector3d center() const { return 0.5 * (max + min); }
  /// Uniform scale (meters per normalized unit); valid for cubical boxes,
  /// which is what make_working_box produces.
  double scale() const { return half_extent().maxCoeff(); }
};

/// Cube enclosing the camera frustum slab z in [z_near, z_far], padded.
/// Cubical on purpose: an isotropic map keeps unit-gradient SDFs
/// unit-gradient in normalized coordinates.
SceneBox make_working_box(const DeviceModel& camera, double z_near, double z_far,
                          double pad = 0.02);

struct NetConfig {
  int hidden_layers = 4;
  int width = 64;
  int skip_layer = 2;       // hidden layer whose input gets the encoding concatenated; <0 disables
  double softplus_beta = 100.0;
  EncodingConfig encoding;

  void validate() const;
};

/// The neural signed distance function f: R^3 -> R over normalized
/// coordinates. MLP with softplus activations, one skip concatenation and a
/// trainable sharpness s stored as log s.
class SdfNetwork {
 public:
  using Mat = ad::Mat;

  SdfNetwork() = default;

  /// Weights drawn so the initial SDF approximates a centered sphere of
  /// radius r0 (in normalized units), with a deterministic scale calibration
  /// pass; s starts at 1/0.3.
  static SdfNetwork geometric_init(const NetConfig& cfg, double radius, uint64_t seed);

  const NetConfig& config() const { return cfg_; }
  double s() const { return std::exp(log_s_); }
  double log_s() const { return log_s_; }

  static Mat encode(const Mat& points, const EncodingConfig& cfg);
  /// Encoding plus its spatial derivative: tangents has 3B rows, blocks of B
  /// rows holding d(enc)/dx, d(enc)/dy, d(enc)/dz.
  static void encode_with_tangents(const Mat& points, const EncodingConfig& cfg, Mat& enc,
                                   Mat& tangents);

  double forward(const Eigen::Vector3d& x) const;
  Eigen::VectorXd forward_batch(const Mat& points /*Bx3*/) const;
  /// SDF values plus spatial gradients (Bx3) via forward-mode tangents.
  void forward_with_gradient(const Mat& points, Eigen::VectorXd& values, Mat& gradients) const;

  // -- tape interface ------------------------------------------------------
  struct ParamVars {
    std::vector<ad::Var> linear_w;
    std::vector<ad::Var> linear_b;
    ad::Var log_s;
  };
  ParamVars emit_params(ad::Tape& tape) const;
  ad::Var emit_s(ad::Tape& tape, const ParamVars& params) const;  // exp(log_s)
  /// Batched forward over a constant encoded matrix; returns SDF column Bx1.
  ad::Var emit_forward(ad::Tape& tape, const ParamVars& params, ad::Var encoded) const;
  /// Forward plus forward-mode spatial tangents (input 3B x D, output 3B x 1).
  /// The tangent rows are themselves tape expressions, so one reverse pass
  /// differentiates the Eikonal penalty without nested reverse passes.
  std::pair<ad::Var, ad::Var> emit_forward_with_tangents(ad::Tape& tape, const ParamVars& params,
                                                         ad::Var encoded,
                                                         ad::Var encoded_tangents) const;
  /// Gradient of the tape params flattened in checkpoint order.
  Eigen::VectorXd collect_gradients(const ad::Tape& tape, const ParamVars& params) const;

  // -- flat parameter access (optimizer, finite differences, checkpoints) ---
  int num_params() const;
  Eigen::VectorXd get_params() const;
  void set_params(const Eigen::VectorXd& flat);

  size_t forward_macs() const;

  void save_checkpoint(const std::string& path, const SceneBox& box) const;
  static std::pair<SdfNetwork, SceneBox> load_checkpoint(const std::string& path);

 private:
  int layer_in_dim(int l) const;
  int layer_out_dim(int l) const;
  int num_linear() const { return cfg_.hidden_layers + 1; }
  Mat hidden_features(const Mat& points) const;  // activations feeding the output layer

  NetConfig cfg_;
  std::vector<Mat> weights_;                // (in x out) per linear layer
  std::vector<Eigen::RowVectorXd> biases_;  // (1 x out)
  double log_s_ = 0.0;
};

}  // namespace slsdf
