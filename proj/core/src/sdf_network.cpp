#include "slsdf/sdf_network.hpp"

#include <fstream>

#include "slsdf/rng.hpp"

namespace slsdf {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInitInvS = 0.3;  // 1/s at initialization, normalized units

using Mat = ad::Mat;

// vectorized stable activations, shared forms with the tape ops
Mat softplus_mat(const Mat& x, double beta) {
  // max(x,0) + log(1+exp(-|beta x|))/beta never overflows; log/exp take
  // Eigen's vectorized double paths (log1p and tanh do not)
  const auto bx = (beta * x.array()).eval();
  return (bx.max(0.0) + ((-bx.abs()).exp() + 1.0).log()).matrix() / beta;
}

Mat sigmoid_mat(const Mat& x) {
  // 1/(1+exp(-x)) is IEEE-stable: exp overflow saturates the result to 0
  return ((-x.array()).exp() + 1.0).inverse().matrix();
}
}  // namespace

void SceneBox::validate() const {
  if (!((max - min).array() > 0).all()) throw ConfigError("scene box must have positive extent");
}

Eigen::Vector3d SceneBox::normalize(const Eigen::Vector3d& world) const {
  return (2.0 * (world - min).array() / (max - min).array() - 1.0).matrix();
}

Eigen::Vector3d SceneBox::denormalize(const Eigen::Vector3d& n) const {
  return (min.array() + (n.array() + 1.0) * 0.5 * (max - min).array()).matrix();
}

SceneBox make_working_box(const DeviceModel& camera, double z_near, double z_far, double pad) {
  if (!(z_near > 0 && z_near < z_far)) throw ConfigError("working box: bad depth slab");
  const Intrinsics& in = camera.intrinsics;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  const double corners[4][2] = {{0, 0},
                                {double(in.width - 1), 0},
                                {0, double(in.height - 1)},
                                {double(in.width - 1), double(in.height - 1)}};
  for (const auto& c : corners) {
    Eigen::Vector3d dir_dev((c[0] - in.cx) / in.fx, (c[1] - in.cy) / in.fy, 1.0);
    const Eigen::Vector3d dir_world = camera.rotation.transpose() * dir_dev;
    for (double z : {z_near, z_far}) {
      const Eigen::Vector3d p = camera.center() + z * dir_world;
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo).maxCoeff() + pad;
  SceneBox box;
  box.min = center - Eigen::Vector3d::Constant(half);
  box.max = center + Eigen::Vector3d::Constant(half);
  return box;
}

void NetConfig::validate() const {
  if (hidden_layers < 1) throw ConfigError("net: need at least one hidden layer");
  if (width < 2) throw ConfigError("net: width too small");
  if (encoding.num_frequencies < 0) throw ConfigError("net: negative frequency count");
  if (skip_layer >= hidden_layers) throw ConfigError("net: skip layer out of range");
  if (skip_layer == 0) throw ConfigError("net: skip at layer 0 is the plain input");
  if (skip_layer > 0 && width <= encoding.dim())
    throw ConfigError("net: width must exceed encoding dim when a skip layer is used");
}

int SdfNetwork::layer_in_dim(int l) const {
  const int d = cfg_.encoding.dim();
  if (l == 0) return d;
  if (l == cfg_.hidden_layers) return cfg_.width;  // final layer
  return cfg_.width;                               // skip concat restores full width
}

int SdfNetwork::layer_out_dim(int l) const {
  const int d = cfg_.encoding.dim();
  if (l == cfg_.hidden_layers) return 1;
  if (cfg_.skip_layer > 0 && l == cfg_.skip_layer - 1) return cfg_.width - d;
  return cfg_.width;
}

ad::Mat SdfNetwork::encode(const Mat& points, const EncodingConfig& cfg) {
  Mat enc, tang;
  encode_with_tangents(points, cfg, enc, tang);
  return enc;
}

void SdfNetwork::encode_with_tangents(const Mat& points, const EncodingConfig& cfg, Mat& enc,
                                      Mat& tangents) {
  const long b = points.rows();
  const int d = cfg.dim();
  enc.setZero(b, d);
  tangents.setZero(3 * b, d);
  int col = 0;
  if (cfg.include_input) {
    enc.leftCols(3) = points;
    for (int axis = 0; axis < 3; ++axis)
      tangents.block(axis * b, axis, b, 1).setOnes();
    col = 3;
  }
  for (int k = 0; k < cfg.num_frequencies; ++k) {
    const double w = std::ldexp(kPi, k);  // 2^k * pi
    for (int axis = 0; axis < 3; ++axis) {
      const auto arg = (points.col(axis) * w).array();
      enc.col(col + axis) = arg.sin();
      tangents.block(axis * b, col + axis, b, 1) = (arg.cos() * w).matrix();
      enc.col(col + 3 + axis) = arg.cos();
      tangents.block(axis * b, col + 3 + axis, b, 1) = (-arg.sin() * w).matrix();
    }
    col += 6;
  }
}

ad::Mat SdfNetwork::hidden_features(const Mat& points) const {
  const Mat enc = encode(points, cfg_.encoding);
  const int d = cfg_.encoding.dim();
  Mat h = enc;
  for (int l = 0; l < cfg_.hidden_layers; ++l) {
    if (l == cfg_.skip_layer) {
      Mat cat(h.rows(), h.cols() + d);
      cat << h, enc;
      h = cat * kInvSqrt2;
    }
    Mat z = (h * weights_[l]).rowwise() + biases_[l];
    h = softplus_mat(z, cfg_.softplus_beta);
  }
  return h;
}

Eigen::VectorXd SdfNetwork::forward_batch(const Mat& points) const {
  const Mat h = hidden_features(points);
  return ((h * weights_[cfg_.hidden_layers]).rowwise() + biases_[cfg_.hidden_layers]).col(0);
}

double SdfNetwork::forward(const Eigen::Vector3d& x) const {
  Mat p(1, 3);
  p << x.x(), x.y(), x.z();
  return forward_batch(p)(0);
}

void SdfNetwork::forward_with_gradient(const Mat& points, Eigen::VectorXd& values,
                                       Mat& gradients) const {
  const long b = points.rows();
  Mat enc, tang;
  encode_with_tangents(points, cfg_.encoding, enc, tang);
  const int d = cfg_.encoding.dim();
  Mat h = enc, th = tang;
  for (int l = 0; l < cfg_.hidden_layers; ++l) {
    if (l == cfg_.skip_layer) {
      Mat cat(h.rows(), h.cols() + d);
      cat << h, enc;
      h = cat * kInvSqrt2;
      Mat tcat(th.rows(), th.cols() + d);
      tcat << th, tang;
      th = tcat * kInvSqrt2;
    }
    Mat z = (h * weights_[l]).rowwise() + biases_[l];
    Mat tz = th * weights_[l];
    Mat dact = sigmoid_mat(cfg_.softplus_beta * z);
    h = softplus_mat(z, cfg_.softplus_beta);
    for (int axis = 0; axis < 3; ++axis)
      tz.middleRows(axis * b, b).array() *= dact.array();
    th = std::move(tz);
  }
  values = ((h * weights_[cfg_.hidden_layers]).rowwise() + biases_[cfg_.hidden_layers]).col(0);
  const Mat tout = th * weights_[cfg_.hidden_layers];
  gradients.resize(b, 3);
  for (int axis = 0; axis < 3; ++axis) gradients.col(axis) = tout.middleRows(axis * b, b);
}

SdfNetwork::ParamVars SdfNetwork::emit_params(ad::Tape& tape) const {
  ParamVars p;
  for (int l = 0; l < num_linear(); ++l) {
    p.linear_w.push_back(tape.param(weights_[l]));
    p.linear_b.push_back(tape.param(biases_[l]));
  }
  p.log_s = tape.param(Mat::Constant(1, 1, log_s_));
  return p;
}

ad::Var SdfNetwork::emit_s(ad::Tape& tape, const ParamVars& params) const {
  return tape.exp(params.log_s);
}

ad::Var SdfNetwork::emit_forward(ad::Tape& tape, const ParamVars& params, ad::Var encoded) const {
  ad::Var h = encoded;
  for (int l = 0; l < cfg_.hidden_layers; ++l) {
    if (l == cfg_.skip_layer) h = tape.scale(tape.concat_cols(h, encoded), kInvSqrt2);
    ad::Var z = tape.add_row_vector(tape.matmul(h, params.linear_w[l]), params.linear_b[l]);
    h = tape.softplus(z, cfg_.softplus_beta);
  }
  return tape.add_row_vector(tape.matmul(h, params.linear_w[cfg_.hidden_layers]),
                             params.linear_b[cfg_.hidden_layers]);
}

std::pair<ad::Var, ad::Var> SdfNetwork::emit_forward_with_tangents(ad::Tape& tape,
                                                                   const ParamVars& params,
                                                                   ad::Var encoded,
                                                                   ad::Var encoded_tangents) const {
  if (encoded_tangents.rows != 3 * encoded.rows)
    throw DomainError("tangent rows must be 3x the encoded rows");
  ad::Var h = encoded;
  ad::Var th = encoded_tangents;
  for (int l = 0; l < cfg_.hidden_layers; ++l) {
    if (l == cfg_.skip_layer) {
      h = tape.scale(tape.concat_cols(h, encoded), kInvSqrt2);
      th = tape.scale(tape.concat_cols(th, encoded_tangents), kInvSqrt2);
    }
    ad::Var z = tape.add_row_vector(tape.matmul(h, params.linear_w[l]), params.linear_b[l]);
    ad::Var tz = tape.matmul(th, params.linear_w[l]);
    h = tape.softplus(z, cfg_.softplus_beta);
    // d softplus_beta / dz = sigmoid(beta z), applied to the three tangent blocks
    th = tape.mul_tiled_sigmoid(tz, z, cfg_.softplus_beta);
  }
  ad::Var f = tape.add_row_vector(tape.matmul(h, params.linear_w[cfg_.hidden_layers]),
                                  params.linear_b[cfg_.hidden_layers]);
  ad::Var g = tape.matmul(th, params.linear_w[cfg_.hidden_layers]);
  return {f, g};
}

Eigen::VectorXd SdfNetwork::collect_gradients(const ad::Tape& tape,
                                              const ParamVars& params) const {
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(num_params());
  long off = 0;
  auto copy_grad = [&](ad::Var v, long rows, long cols) {
    const Mat& g = tape.grad(v);
    if (g.size() != 0) {
      for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) flat(off + r * cols + c) = g(r, c);
    }
    off += rows * cols;
  };
  for (int l = 0; l < num_linear(); ++l) {
    copy_grad(params.linear_w[l], weights_[l].rows(), weights_[l].cols());
    copy_grad(params.linear_b[l], 1, biases_[l].cols());
  }
  copy_grad(params.log_s, 1, 1);
  return flat;
}

int SdfNetwork::num_params() const {
  int n = 0;
  for (int l = 0; l < num_linear(); ++l)
    n += static_cast<int>(weights_[l].size() + biases_[l].size());
  return n + 1;  // log s
}

Eigen::VectorXd SdfNetwork::get_params() const {
  Eigen::VectorXd flat(num_params());
  long off = 0;
  for (int l = 0; l < num_linear(); ++l) {
    const Mat& w = weights_[l];
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c) flat(off++) = w(r, c);
    for (long c = 0; c < biases_[l].cols(); ++c) flat(off++) = biases_[l](c);
  }
  flat(off++) = log_s_;
  return flat;
}

void SdfNetwork::set_params(const Eigen::VectorXd& flat) {
  if (flat.size() != num_params()) throw DomainError("parameter vector size mismatch");
  long off = 0;
  for (int l = 0; l < num_linear(); ++l) {
    Mat& w = weights_[l];
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c) w(r, c) = flat(off++);
    for (long c = 0; c < biases_[l].cols(); ++c) biases_[l](c) = flat(off++);
  }
  log_s_ = flat(off++);
}

size_t SdfNetwork::forward_macs() const {
  size_t macs = 0;
  for (int l = 0; l < num_linear(); ++l)
    macs += static_cast<size_t>(weights_[l].rows()) * weights_[l].cols();
  return macs;
}

SdfNetwork SdfNetwork::geometric_init(const NetConfig& cfg, double radius, uint64_t seed) {
  cfg.validate();
  if (cfg.skip_layer > 0 && !cfg.encoding.include_input)
    throw ConfigError("geometric init expects the raw point in the encoding");
  SdfNetwork net;
  net.cfg_ = cfg;
  const int d = cfg.encoding.dim();
  net.weights_.resize(net.num_linear());
  net.biases_.resize(net.num_linear());

  for (int l = 0; l < net.num_linear(); ++l) {
    const int in = net.layer_in_dim(l);
    const int out = net.layer_out_dim(l);
    Mat w = Mat::Zero(in, out);
    Eigen::RowVectorXd bvec = Eigen::RowVectorXd::Zero(out);
    auto draw = [&](int r, int c, double mu, double sigma) {
      w(r, c) = mu + sigma * rng_gaussian(rng_key(seed, 0x6e17u * (l + 1),
                                                  static_cast<uint64_t>(r),
                                                  static_cast<uint64_t>(c)));
    };
    if (l == net.num_linear() - 1) {
      // final layer: mean sqrt(pi/in), tiny spread, bias -r0
      const double mu = std::sqrt(kPi) / std::sqrt(double(in));
      for (int r = 0; r < in; ++r) draw(r, 0, mu, 1e-4);
      bvec(0) = -radius;
    } else if (l == 0 && cfg.encoding.include_input) {
      // raw xyz rows only; encoding rows start at zero
      const double sig = std::sqrt(2.0) / std::sqrt(double(out));
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < out; ++c) draw(r, c, 0.0, sig);
    } else if (cfg.skip_layer > 0 && l == cfg.skip_layer) {
      // concat layout: [hidden (width-d) | raw xyz (3) | rest of encoding (d-3)]
      const double sig = std::sqrt(2.0) / std::sqrt(double(out));
      const int active = in - (d - 3);
      for (int r = 0; r < active; ++r)
        for (int c = 0; c < out; ++c) draw(r, c, 0.0, sig);
    } else {
      const double sig = std::sqrt(2.0) / std::sqrt(double(out));
      for (int r = 0; r < in; ++r)
        for (int c = 0; c < out; ++c) draw(r, c, 0.0, sig);
    }
    net.weights_[l] = std::move(w);
    net.biases_[l] = std::move(bvec);
  }
  net.log_s_ = std::log(1.0 / kInitInvS);

  // Output-layer calibration: the random init has noticeable directional
  // variance at this width, so refit the final linear layer onto the sphere
  // distance |x| (bias stays -r0). Direction-uniform samples plus a few
  // Lawson reweighting rounds flatten the worst-direction error.
  // Deterministic and closed-form; the hidden basis keeps its SAL-style draw.
  const int ncal = 4096;
  Mat pts(ncal, 3);
  for (int i = 0; i < ncal; ++i) {
    Eigen::Vector3d dir(rng_gaussian(rng_key(seed, 0xca1u, i, 0)),
                        rng_gaussian(rng_key(seed, 0xca1u, i, 1)),
                        rng_gaussian(rng_key(seed, 0xca1u, i, 2)));
    dir.normalize();
    const double r = 0.05 + 1.70 * rng_uniform(rng_key(seed, 0xca2u, i));
    pts.row(i) = (r * dir).transpose();
  }
  const Mat h = net.hidden_features(pts);
  const Eigen::VectorXd target = pts.rowwise().norm();
  const int width = static_cast<int>(h.cols());
  Eigen::VectorXd lawson = Eigen::VectorXd::Ones(ncal);
  Eigen::VectorXd w;
  for (int round = 0; round < 4; ++round) {
    const Mat hw = lawson.asDiagonal() * h;
    Mat gram = h.transpose() * hw + 1e-6 * double(ncal) * Mat::Identity(width, width);
    w = gram.ldlt().solve(hw.transpose() * target);
    const Eigen::VectorXd res = (h * w - target).cwiseAbs();
    lawson = lawson.cwiseProduct(res.array().max(1e-4).matrix());
    lawson *= double(ncal) / lawson.sum();
  }
  net.weights_[net.num_linear() - 1] = w;
  return net;
}

void SdfNetwork::save_checkpoint(const std::string& path, const SceneBox& box) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "SLSDFNET 1\n";
  f << "hidden_layers " << cfg_.hidden_layers << "\n";
  f << "width " << cfg_.width << "\n";
  f << "skip_layer " << cfg_.skip_layer << "\n";
  f << "frequencies " << cfg_.encoding.num_frequencies << "\n";
  f << "include_input " << (cfg_.encoding.include_input ? 1 : 0) << "\n";
  f.precision(17);
  f << "softplus_beta " << cfg_.softplus_beta << "\n";
  f << "box_min " << box.min.x() << " " << box.min.y() << " " << box.min.z() << "\n";
  f << "box_max " << box.max.x() << " " << box.max.y() << " " << box.max.z() << "\n";
  const Eigen::VectorXd flat = get_params();
  f << "params " << flat.size() << "\n";
  f << "data\n";
  f.write(reinterpret_cast<const char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!f) throw ConfigError("short write: " + path);
}

std::pair<SdfNetwork, SceneBox> SdfNetwork::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string magic, version;
  f >> magic >> version;
  if (magic != "SLSDFNET" || version != "1") throw ConfigError("not a checkpoint: " + path);
  NetConfig cfg;
  SceneBox box;
  long nparams = -1;
  std::string key;
  int include = 1;
  while (f >> key) {
    if (key == "data") break;
    if (key == "hidden_layers") f >> cfg.hidden_layers;
    else if (key == "width") f >> cfg.width;
    else if (key == "skip_layer") f >> cfg.skip_layer;
    else if (key == "frequencies") f >> cfg.encoding.num_frequencies;
    else if (key == "include_input") f >> include;
    else if (key == "softplus_beta") f >> cfg.softplus_beta;
    else if (key == "box_min") f >> box.min.x() >> box.min.y() >> box.min.z();
    else if (key == "box_max") f >> box.max.x() >> box.max.y() >> box.max.z();
    else if (key == "params") f >> nparams;
    else throw ConfigError("unknown checkpoint key '" + key + "' in " + path);
  }
  cfg.encoding.include_input = include != 0;
  cfg.validate();
  box.validate();
  f.get();  // newline after "data"
  SdfNetwork net = geometric_init(cfg, 0.5, 0);  // shapes only, params overwritten below
  if (nparams != net.num_params()) throw ConfigError("checkpoint parameter count mismatch");
  Eigen::VectorXd flat(nparams);
  f.read(reinterpret_cast<char*>(flat.data()),
         static_cast<std::streamsize>(nparams * sizeof(double)));
  if (!f) throw ConfigError("truncated checkpoint: " + path);
  net.set_params(flat);
  return {std::move(net), box};
}

}  // namespace slsdf
