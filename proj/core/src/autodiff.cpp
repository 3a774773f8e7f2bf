#include "slsdf/autodiff.hpp"

#include <ostream>

#include "slsdf/pattern.hpp"

namespace slsdf {
namespace ad {

namespace {

// vectorized stable forms: sigmoid via tanh (SIMD path in Eigen), softplus
// via max(x,0) + log1p(exp(-|x|)) which never overflows
Mat sigmoid_mat(const Mat& x) {
  // 1/(1+exp(-x)) is IEEE-stable: exp overflow saturates the result to 0
  return ((-x.array()).exp() + 1.0).inverse().matrix();
}

Mat softplus_mat(const Mat& x, double beta) {
  // max(x,0) + log(1+exp(-|beta x|))/beta never overflows; log/exp take
  // Eigen's vectorized double paths (log1p and tanh do not)
  const auto bx = (beta * x.array()).eval();
  return (bx.max(0.0) + ((-bx.abs()).exp() + 1.0).log()).matrix() / beta;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Param: return "param";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::ScalarMul: return "scalar_mul";
    case Op::AddRowVec: return "add_row_vector";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSum: return "row_sum";
    case Op::BroadcastCol: return "broadcast_col";
    case Op::Abs: return "abs";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Reciprocal: return "reciprocal";
    case Op::Sqrt: return "sqrt";
    case Op::MinConst: return "min_const";
    case Op::MaxConst: return "max_const";
    case Op::SelectMask: return "select";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::TileRows: return "tile_rows";
    case Op::ReshapeRowMajor: return "reshape";
    case Op::CumSumRowsExclusive: return "cumsum_excl";
    case Op::MulTiledSigmoid: return "mul_tiled_sigmoid";
    case Op::PatternSample: return "pattern_sample";
  }
  return "?";
}

}  // namespace

Var Tape::push(Node n) {
  const int id = static_cast<int>(nodes_.size());
  Var v{id, static_cast<int>(n.value.rows()), static_cast<int>(n.value.cols())};
  nodes_.push_back(std::move(n));
  return v;
}

void Tape::check_same_shape(Var a, Var b, const char* what) const {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DomainError(std::string(what) + ": shape mismatch");
}

Var Tape::constant(Mat v) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::param(Mat v) {
  Node n;
  n.op = Op::Param;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = nodes_[a.id].value + nodes_[b.id].value;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.value = nodes_[a.id].value - nodes_[b.id].value;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.value = nodes_[a.id].value.cwiseProduct(nodes_[b.id].value);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  if (a.cols != b.rows) throw DomainError("matmul: inner dimensions differ");
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value.noalias() = nodes_[a.id].value * nodes_[b.id].value;
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.c0 = c;
  n.value = nodes_[a.id].value * c;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.a = a.id;
  n.c0 = c;
  n.value = nodes_[a.id].value.array() + c;
  return push(std::move(n));
}

Var Tape::scalar_mul(Var scalar, Var m) {
  if (scalar.rows != 1 || scalar.cols != 1) throw DomainError("scalar_mul: scalar must be 1x1");
  Node n;
  n.op = Op::ScalarMul;
  n.a = scalar.id;
  n.b = m.id;
  n.value = nodes_[m.id].value * nodes_[scalar.id].value(0, 0);
  return push(std::move(n));
}

Var Tape::add_row_vector(Var m, Var row) {
  if (row.rows != 1 || row.cols != m.cols)
    throw DomainError("add_row_vector: row must be 1 x cols(m)");
  Node n;
  n.op = Op::AddRowVec;
  n.a = m.id;
  n.b = row.id;
  n.value = nodes_[m.id].value.rowwise() + nodes_[row.id].value.row(0);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  n.value = Mat::Constant(1, 1, nodes_[a.id].value.sum());
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  Node n;
  n.op = Op::Mean;
  n.a = a.id;
  n.value = Mat::Constant(1, 1, nodes_[a.id].value.mean());
  return push(std::move(n));
}

Var Tape::row_sum(Var a) {
  Node n;
  n.op = Op::RowSum;
  n.a = a.id;
  n.value = nodes_[a.id].value.rowwise().sum();
  return push(std::move(n));
}

Var Tape::broadcast_col(Var a, int cols) {
  if (a.cols != 1) throw DomainError("broadcast_col: input must be Mx1");
  Node n;
  n.op = Op::BroadcastCol;
  n.a = a.id;
  n.i0 = cols;
  n.value = nodes_[a.id].value.col(0).replicate(1, cols);
  return push(std::move(n));
}

Var Tape::abs(Var a) {
  Node n;
  n.op = Op::Abs;
  n.a = a.id;
  n.value = nodes_[a.id].value.cwiseAbs();
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::Exp;
  n.a = a.id;
  n.value = nodes_[a.id].value.array().exp();
  return push(std::move(n));
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::Log;
  n.a = a.id;
  n.value = nodes_[a.id].value.array().log();
  return push(std::move(n));
}

Var Tape::sin(Var a) {
  Node n;
  n.op = Op::Sin;
  n.a = a.id;
  n.value = nodes_[a.id].value.array().sin();
  return push(std::move(n));
}

Var Tape::cos(Var a) {
  Node n;
  n.op = Op::Cos;
  n.a = a.id;
  n.value = nodes_[a.id].value.array().cos();
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.value = sigmoid_mat(nodes_[a.id].value);
  return push(std::move(n));
}

Var Tape::softplus(Var a, double beta) {
  if (beta <= 0) throw DomainError("softplus: beta must be positive");
  Node n;
  n.op = Op::Softplus;
  n.a = a.id;
  n.c0 = beta;
  n.value = softplus_mat(nodes_[a.id].value, beta);
  n.aux = sigmoid_mat(beta * nodes_[a.id].value);  // derivative, reused by backward
  return push(std::move(n));
}

Var Tape::reciprocal(Var a) {
  Node n;
  n.op = Op::Reciprocal;
  n.a = a.id;
  n.value = nodes_[a.id].value.cwiseInverse();
  return push(std::move(n));
}

Var Tape::sqrt(Var a) {
  Node n;
  n.op = Op::Sqrt;
  n.a = a.id;
  n.value = nodes_[a.id].value.cwiseSqrt();
  return push(std::move(n));
}

Var Tape::min_const(Var a, double c) {
  Node n;
  n.op = Op::MinConst;
  n.a = a.id;
  n.c0 = c;
  n.value = nodes_[a.id].value.cwiseMin(c);
  return push(std::move(n));
}

Var Tape::max_const(Var a, double c) {
  Node n;
  n.op = Op::MaxConst;
  n.a = a.id;
  n.c0 = c;
  n.value = nodes_[a.id].value.cwiseMax(c);
  return push(std::move(n));
}

Var Tape::select(const Mat& mask, Var a, Var b) {
  check_same_shape(a, b, "select");
  if (mask.rows() != a.rows || mask.cols() != a.cols)
    throw DomainError("select: mask shape mismatch");
  Node n;
  n.op = Op::SelectMask;
  n.a = a.id;
  n.b = b.id;
  n.aux = mask;
  n.value = mask.cwiseProduct(nodes_[a.id].value) +
            (Mat::Ones(mask.rows(), mask.cols()) - mask).cwiseProduct(nodes_[b.id].value);
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  if (a.rows != b.rows) throw DomainError("concat_cols: row counts differ");
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value.resize(a.rows, a.cols + b.cols);
  n.value.leftCols(a.cols) = nodes_[a.id].value;
  n.value.rightCols(b.cols) = nodes_[b.id].value;
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, int begin, int rows) {
  if (begin < 0 || rows < 0 || begin + rows > a.rows)
    throw DomainError("slice_rows: range out of bounds");
  Node n;
  n.op = Op::SliceRows;
  n.a = a.id;
  n.i0 = begin;
  n.i1 = rows;
  n.value = nodes_[a.id].value.middleRows(begin, rows);
  return push(std::move(n));
}

Var Tape::tile_rows(Var a, int times) {
  if (times < 1) throw DomainError("tile_rows: times must be >= 1");
  Node n;
  n.op = Op::TileRows;
  n.a = a.id;
  n.i0 = times;
  n.value = nodes_[a.id].value.replicate(times, 1);
  return push(std::move(n));
}

Var Tape::reshape_row_major(Var a, int rows, int cols) {
  if (static_cast<long>(rows) * cols != static_cast<long>(a.rows) * a.cols)
    throw DomainError("reshape: element count mismatch");
  Node n;
  n.op = Op::ReshapeRowMajor;
  n.a = a.id;
  n.i0 = rows;
  n.i1 = cols;
  const Mat& src = nodes_[a.id].value;
  n.value.resize(rows, cols);
  // row-major reinterpretation of a row-major read of src
  long idx = 0;
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c, ++idx) n.value(idx / cols, idx % cols) = src(r, c);
  return push(std::move(n));
}

Var Tape::cumsum_rows_exclusive(Var a) {
  Node n;
  n.op = Op::CumSumRowsExclusive;
  n.a = a.id;
  const Mat& src = nodes_[a.id].value;
  n.value.resize(src.rows(), src.cols());
  for (long r = 0; r < src.rows(); ++r) {
    double acc = 0;
    for (long c = 0; c < src.cols(); ++c) {
      n.value(r, c) = acc;
      acc += src(r, c);
    }
  }
  return push(std::move(n));
}

Var Tape::mul_tiled_sigmoid(Var a, Var z, double c) {
  if (z.cols != a.cols || a.rows % z.rows != 0)
    throw DomainError("mul_tiled_sigmoid: a must be a row-tiling of z's shape");
  Node n;
  n.op = Op::MulTiledSigmoid;
  n.a = a.id;
  n.b = z.id;
  n.c0 = c;
  n.i0 = a.rows / z.rows;
  n.aux = sigmoid_mat(c * nodes_[z.id].value);
  n.value.resizeLike(nodes_[a.id].value);
  for (int t = 0; t < n.i0; ++t)
    n.value.middleRows(static_cast<long>(t) * z.rows, z.rows) =
        nodes_[a.id].value.middleRows(static_cast<long>(t) * z.rows, z.rows).cwiseProduct(n.aux);
  return push(std::move(n));
}

Var Tape::pattern_sample(Var u, Var v, const ImageF* image) {
  if (u.cols != 1 || v.cols != 1 || u.rows != v.rows)
    throw DomainError("pattern_sample: u and v must be matching Mx1 vectors");
  if (image == nullptr) throw DomainError("pattern_sample: null image");
  Node n;
  n.op = Op::PatternSample;
  n.a = u.id;
  n.b = v.id;
  n.image = image;
  n.value.resize(u.rows, 1);
  n.aux.resize(u.rows, 2);  // cached d/du, d/dv
  for (int i = 0; i < u.rows; ++i) {
    const SampleResult s =
        sample_bilinear(*image, nodes_[u.id].value(i, 0), nodes_[v.id].value(i, 0));
    n.value(i, 0) = s.value;
    n.aux(i, 0) = s.du;
    n.aux(i, 1) = s.dv;
  }
  return push(std::move(n));
}

Mat& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  const std::pair<Var, double> seed[] = {{loss, 1.0}};
  backward_weighted(seed);
}

void Tape::backward_weighted(std::span<const std::pair<Var, double>> seeds) {
  for (Node& n : nodes_) n.grad.resize(0, 0);
  for (const auto& [v, w] : seeds) {
    if (v.rows != 1 || v.cols != 1) throw DomainError("backward: loss must be scalar");
    grad_buf(v.id)(0, 0) += w;
  }
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;  // unreachable from the seeds
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Const:
      case Op::Param:
        break;
      case Op::Add:
        grad_buf(n.a) += g;
        grad_buf(n.b) += g;
        break;
      case Op::Sub:
        grad_buf(n.a) += g;
        grad_buf(n.b) -= g;
        break;
      case Op::Mul:
        grad_buf(n.a) += g.cwiseProduct(nodes_[n.b].value);
        grad_buf(n.b) += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::MatMul:
        grad_buf(n.a).noalias() += g * nodes_[n.b].value.transpose();
        grad_buf(n.b).noalias() += nodes_[n.a].value.transpose() * g;
        break;
      case Op::Scale:
        grad_buf(n.a) += g * n.c0;
        break;
      case Op::AddScalar:
        grad_buf(n.a) += g;
        break;
      case Op::ScalarMul:
        grad_buf(n.a)(0, 0) += g.cwiseProduct(nodes_[n.b].value).sum();
        grad_buf(n.b) += g * nodes_[n.a].value(0, 0);
        break;
      case Op::AddRowVec:
        grad_buf(n.a) += g;
        grad_buf(n.b) += g.colwise().sum();
        break;
      case Op::Sum:
        grad_buf(n.a).array() += g(0, 0);
        break;
      case Op::Mean:
        grad_buf(n.a).array() += g(0, 0) / static_cast<double>(nodes_[n.a].value.size());
        break;
      case Op::RowSum:
        grad_buf(n.a).colwise() += g.col(0);
        break;
      case Op::BroadcastCol:
        grad_buf(n.a) += g.rowwise().sum();
        break;
      case Op::Abs:
        grad_buf(n.a) += g.cwiseProduct(nodes_[n.a].value.unaryExpr(
            [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }));
        break;
      case Op::Exp:
        grad_buf(n.a) += g.cwiseProduct(n.value);
        break;
      case Op::Log:
        grad_buf(n.a) += g.cwiseQuotient(nodes_[n.a].value);
        break;
      case Op::Sin:
        grad_buf(n.a) += g.cwiseProduct(nodes_[n.a].value.array().cos().matrix());
        break;
      case Op::Cos:
        grad_buf(n.a) -= g.cwiseProduct(nodes_[n.a].value.array().sin().matrix());
        break;
      case Op::Sigmoid:
        grad_buf(n.a) += g.cwiseProduct(
            n.value.cwiseProduct(Mat::Ones(n.value.rows(), n.value.cols()) - n.value));
        break;
      case Op::Softplus:
        grad_buf(n.a) += g.cwiseProduct(n.aux);
        break;
      case Op::Reciprocal:
        grad_buf(n.a) -= g.cwiseProduct(n.value.cwiseProduct(n.value));
        break;
      case Op::Sqrt:
        grad_buf(n.a) += g.cwiseQuotient(n.value.cwiseMax(1e-150) * 2.0);
        break;
      case Op::MinConst: {
        const double c = n.c0;
        grad_buf(n.a) += g.cwiseProduct(
            nodes_[n.a].value.unaryExpr([c](double x) { return x <= c ? 1.0 : 0.0; }));
        break;
      }
      case Op::MaxConst: {
        const double c = n.c0;
        grad_buf(n.a) += g.cwiseProduct(
            nodes_[n.a].value.unaryExpr([c](double x) { return x >= c ? 1.0 : 0.0; }));
        break;
      }
      case Op::SelectMask:
        grad_buf(n.a) += g.cwiseProduct(n.aux);
        grad_buf(n.b) += g.cwiseProduct(Mat::Ones(n.aux.rows(), n.aux.cols()) - n.aux);
        break;
      case Op::ConcatCols:
        grad_buf(n.a) += g.leftCols(nodes_[n.a].value.cols());
        grad_buf(n.b) += g.rightCols(nodes_[n.b].value.cols());
        break;
      case Op::SliceRows:
        grad_buf(n.a).middleRows(n.i0, n.i1) += g;
        break;
      case Op::TileRows: {
        Mat& ga = grad_buf(n.a);
        const long rows = nodes_[n.a].value.rows();
        for (int t = 0; t < n.i0; ++t) ga += g.middleRows(t * rows, rows);
        break;
      }
      case Op::ReshapeRowMajor: {
        Mat& ga = grad_buf(n.a);
        const int acols = static_cast<int>(ga.cols());
        long idx = 0;
        for (int r = 0; r < n.i0; ++r)
          for (int c = 0; c < n.i1; ++c, ++idx) ga(idx / acols, idx % acols) += g(r, c);
        break;
      }
      case Op::CumSumRowsExclusive: {
        // d/din(j,k) = sum_{k'>k} g(j,k'): reverse exclusive cumsum
        Mat& ga = grad_buf(n.a);
        for (long r = 0; r < g.rows(); ++r) {
          double acc = 0;
          for (long c = g.cols() - 1; c >= 0; --c) {
            ga(r, c) += acc;
            acc += g(r, c);
          }
        }
        break;
      }
      case Op::MulTiledSigmoid: {
        Mat& ga = grad_buf(n.a);
        Mat& gb = grad_buf(n.b);
        const long rows = nodes_[n.b].value.rows();
        const Mat dsig = n.c0 * n.aux.cwiseProduct(Mat::Ones(n.aux.rows(), n.aux.cols()) - n.aux);
        for (int t = 0; t < n.i0; ++t) {
          const auto gblock = g.middleRows(static_cast<long>(t) * rows, rows);
          ga.middleRows(static_cast<long>(t) * rows, rows) += gblock.cwiseProduct(n.aux);
          gb += gblock.cwiseProduct(nodes_[n.a].value.middleRows(static_cast<long>(t) * rows, rows))
                    .cwiseProduct(dsig);
        }
        break;
      }
      case Op::PatternSample:
        grad_buf(n.a) += g.cwiseProduct(n.aux.col(0));
        grad_buf(n.b) += g.cwiseProduct(n.aux.col(1));
        break;
    }
  }
}

void Tape::dump(std::ostream& os) const {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    os << i << "\t" << op_name(n.op) << "\t(" << n.value.rows() << "x" << n.value.cols() << ")";
    if (n.a >= 0) os << "\ta=" << n.a;
    if (n.b >= 0) os << "\tb=" << n.b;
    if (n.c0 != 0) os << "\tc0=" << n.c0;
    os << "\n";
  }
}

}  // namespace ad
}  // namespace slsdf
