#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace recodec::ad {

using Matrix = Eigen::MatrixXd;

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense double matrices. Nodes are appended in
// execution order; backward() walks them once in reverse. Rebuilt per
// training step (define-by-run).
//
// Every forward result is checked for finiteness and failures name the
// offending op. backward() may run once per tape and requires a 1x1 loss.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var constant_scalar(double v);

  const Matrix& value(Var v) const;
  // Gradient of the last backward()'s loss w.r.t. this node. Zero-filled
  // for nodes the loss does not reach.
  const Matrix& grad(Var v) const;

  // Arithmetic.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);          // elementwise
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var b);  // x*w with row-broadcast bias (1 x cols)
  Var scale_by(Var a, Var s);       // broadcast multiply by a 1x1 node
  Var reciprocal(Var a);

  // Pointwise nonlinearities.
  Var tanh(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var abs(Var a);

  // Reductions and shape ops.
  Var sum(Var a);                      // 1x1
  Var mean(Var a);                     // 1x1
  Var mean_axis(Var a, int axis);      // 0: over rows -> 1xC; 1: over cols -> Rx1
  Var mse(Var a, Var b);               // 1x1, mean squared difference
  Var l2_norm_rows(Var a);             // Rx1; zero rows get zero gradient
  Var concat_rows(Var a, Var b);
  Var gather_rows(Var m, const Eigen::VectorXi& rows);
  // Gathers entries of a column vector by a flat index matrix (framing).
  Var gather(Var x, const Eigen::MatrixXi& idx);
  // Hann-windowed overlap-add of a frames-by-frame matrix back to a
  // column vector of n_samples, window-sum normalized.
  Var overlap_add(Var frames, int hop, int n_samples);

  // Gradient control. stop_gradient is a forward identity contributing no
  // gradient; straight_through forwards `quantized` bit-exactly and routes
  // the incoming gradient to `continuous` unchanged.
  Var stop_gradient(Var a);
  Var straight_through(Var continuous, Var quantized);

  // Accumulates gradients for every node reachable from `loss`.
  void backward(Var loss);

  void reset();
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    kLeaf, kAdd, kSub, kMul, kScale, kAddConst, kMatmul, kAffine, kScaleBy,
    kReciprocal, kTanh, kLog, kSqrt, kSquare, kAbs, kSum, kMean, kMeanAxis,
    kMse, kL2NormRows, kConcatRows, kGatherRows, kGather, kOverlapAdd,
    kStopGradient, kStraightThrough,
  };

  struct Node {
    Op op = Op::kLeaf;
    Matrix value;
    Matrix grad;
    int a = -1;
    int b = -1;
    double c = 0.0;     // scalar payload
    int i0 = 0;         // integer payload (axis, hop, ...)
    int i1 = 0;
    Eigen::MatrixXi idx;  // gather payloads
    bool requires_grad = false;
  };

  Var push(Node node);
  const Node& at(Var v) const;
  void backprop(int id);
  static const char* op_name(Op op);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace recodec::ad
