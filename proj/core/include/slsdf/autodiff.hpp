#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "slsdf/common.hpp"

namespace slsdf {
namespace ad {

using Mat = Eigen::MatrixXd;

// Tape-based reverse-mode differentiation over dense matrices. Forward
// values are computed eagerly at construction; one backward() pass
// accumulates gradients in exact reverse construction order, so gradients
// are deterministic and independent of how many threads ran the forward
// math. A Tape is single-writer; parallelism happens across tapes.

enum class Op : uint8_t {
  Const, Param,
  Add, Sub, Mul, MatMul,
  Scale,          // value * c0
  AddScalar,      // value + c0
  ScalarMul,      // (1x1 var a) * matrix b
  AddRowVec,      // matrix a + row vector b broadcast down rows
  Sum, Mean,      // full reductions to 1x1
  RowSum,         // MxK -> Mx1
  BroadcastCol,   // Mx1 -> Mx(i0)
  Abs, Exp, Log, Sin, Cos, Sigmoid, Softplus /*beta=c0*/, Reciprocal, Sqrt,
  MinConst, MaxConst,        // elementwise vs c0
  SelectMask,                // mask (const mat) ? a : b
  ConcatCols,
  SliceRows,                 // rows [i0, i0+i1)
  TileRows,                  // repeat the block i0 times vertically
  ReshapeRowMajor,           // reinterpret in row-major order as i0 x i1
  CumSumRowsExclusive,       // out(j,k) = sum_{k'<k} in(j,k')
  MulTiledSigmoid,           // a (tB x w) .* tile(sigmoid(c0 * b), t); JVP fusion
  PatternSample,             // inputs u,v (Mx1); samples c-ptr image bilinearly
};

struct Var {
  int id = -1;
  int rows = 0, cols = 0;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Tape() = default;
  void reserve(size_t n) { nodes_.reserve(n); }
  size_t size() const { return nodes_.size(); }

  Var constant(Mat v);
  Var param(Mat v);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var matmul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var scalar_mul(Var scalar, Var m);  // scalar is 1x1
  Var add_row_vector(Var m, Var row);
  Var sum(Var a);
  Var mean(Var a);
  Var row_sum(Var a);
  Var broadcast_col(Var a, int cols);
  Var abs(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a, double beta);
  Var reciprocal(Var a);
  Var sqrt(Var a);
  Var min_const(Var a, double c);
  Var max_const(Var a, double c);
  Var select(const Mat& mask, Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var slice_rows(Var a, int begin, int rows);
  Var tile_rows(Var a, int times);
  Var reshape_row_major(Var a, int rows, int cols);
  Var cumsum_rows_exclusive(Var a);
  /// Fused tangent activation: a .* tile(sigmoid(c * z), rows(a)/rows(z)).
  /// One node instead of scale+sigmoid+tile+mul on the hot training path.
  Var mul_tiled_sigmoid(Var a, Var z, double c);
  /// Bilinear pattern lookup at (u, v) pairs; rows of u/v are independent
  /// samples. The image must outlive the tape.
  Var pattern_sample(Var u, Var v, const ImageF* image);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient accumulated by the last backward(); empty matrix if the node
  /// was unreachable from the seeds.
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  /// Reverse pass from a scalar loss (seed gradient 1).
  void backward(Var loss);
  /// Reverse pass from several scalar outputs at once, each seeded with its
  /// weight; equivalent to backward on sum(w_i * out_i).
  void backward_weighted(std::span<const std::pair<Var, double>> seeds);

  void dump(std::ostream& os) const;  // plain-text op list, for debugging

 private:
  struct Node {
    Op op;
    int a = -1, b = -1;
    double c0 = 0;
    int i0 = 0, i1 = 0;
    Mat value;
    Mat grad;   // lazily allocated by backward
    Mat aux;    // op-specific cache (e.g. sampler gradients, select mask)
    const ImageF* image = nullptr;
  };

  Var push(Node n);
  Mat& grad_buf(int id);
  void check_same_shape(Var a, Var b, const char* what) const;

  std::vector<Node> nodes_;
};

}  // namespace ad
}  // namespace slsdf
