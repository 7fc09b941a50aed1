#include "recodec/autodiff.hpp"

#include "recodec/dsp.hpp"

#include <cmath>
#include <stdexcept>

namespace recodec::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddConst: return "add_const";
    case Op::kMatmul: return "matmul";
    case Op::kAffine: return "affine";
    case Op::kScaleBy: return "scale_by";
    case Op::kReciprocal: return "reciprocal";
    case Op::kTanh: return "tanh";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kSquare: return "square";
    case Op::kAbs: return "abs";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kMeanAxis: return "mean_axis";
    case Op::kMse: return "mse";
    case Op::kL2NormRows: return "l2_norm_rows";
    case Op::kConcatRows: return "concat_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kGather: return "gather";
    case Op::kOverlapAdd: return "overlap_add";
    case Op::kStopGradient: return "stop_gradient";
    case Op::kStraightThrough: return "straight_through";
  }
  return "?";
}

Var Tape::push(Node node) {
  if (!node.value.allFinite())
    throw std::runtime_error(std::string("non-finite result in op ") +
                             op_name(node.op));
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::at(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("invalid tape handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::constant_scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

const Matrix& Tape::value(Var v) const { return at(v).value; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = at(v);
  if (n.grad.size() == 0)
    throw std::logic_error("grad requested before backward()");
  return n.grad;
}

Var Tape::add(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = at(a).value + at(b).value;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = at(a).value - at(b).value;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = at(a).value.cwiseProduct(at(b).value);
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.c = c;
  n.requires_grad = at(a).requires_grad;
  n.value = c * at(a).value;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.a = a.id;
  n.c = c;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.array() + c;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  if (at(a).value.cols() != at(b).value.rows())
    throw std::invalid_argument("matmul: inner dimensions differ");
  Node n;
  n.op = Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = at(a).value * at(b).value;
  return push(std::move(n));
}

Var Tape::affine(Var x, Var w, Var b) {
  if (at(x).value.cols() != at(w).value.rows())
    throw std::invalid_argument("affine: inner dimensions differ");
  if (at(b).value.rows() != 1 || at(b).value.cols() != at(w).value.cols())
    throw std::invalid_argument("affine: bias must be 1 x output");
  Node n;
  n.op = Op::kAffine;
  n.a = x.id;
  n.b = w.id;
  n.i0 = b.id;
  n.requires_grad =
      at(x).requires_grad || at(w).requires_grad || at(b).requires_grad;
  n.value = (at(x).value * at(w).value).rowwise() + at(b).value.row(0);
  return push(std::move(n));
}

Var Tape::scale_by(Var a, Var s) {
  if (at(s).value.size() != 1)
    throw std::invalid_argument("scale_by: scale must be 1x1");
  Node n;
  n.op = Op::kScaleBy;
  n.a = a.id;
  n.b = s.id;
  n.requires_grad = at(a).requires_grad || at(s).requires_grad;
  n.value = at(s).value(0, 0) * at(a).value;
  return push(std::move(n));
}

Var Tape::reciprocal(Var a) {
  Node n;
  n.op = Op::kReciprocal;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.cwiseInverse();
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.array().tanh();
  return push(std::move(n));
}

Var Tape::log(Var a) {
  Node n;
  n.op = Op::kLog;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.array().log();
  return push(std::move(n));
}

Var Tape::sqrt(Var a) {
  Node n;
  n.op = Op::kSqrt;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.array().sqrt();
  return push(std::move(n));
}

Var Tape::square(Var a) {
  Node n;
  n.op = Op::kSquare;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.array().square();
  return push(std::move(n));
}

Var Tape::abs(Var a) {
  Node n;
  n.op = Op::kAbs;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.cwiseAbs();
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = Matrix::Constant(1, 1, at(a).value.sum());
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  Node n;
  n.op = Op::kMean;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = Matrix::Constant(1, 1, at(a).value.mean());
  return push(std::move(n));
}

Var Tape::mean_axis(Var a, int axis) {
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("mean_axis: axis must be 0 or 1");
  Node n;
  n.op = Op::kMeanAxis;
  n.a = a.id;
  n.i0 = axis;
  n.requires_grad = at(a).requires_grad;
  if (axis == 0)
    n.value = at(a).value.colwise().mean();
  else
    n.value = at(a).value.rowwise().mean();
  return push(std::move(n));
}

Var Tape::mse(Var a, Var b) {
  require_same_shape(at(a).value, at(b).value, "mse");
  Node n;
  n.op = Op::kMse;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = Matrix::Constant(1, 1, (at(a).value - at(b).value).squaredNorm() /
                                       static_cast<double>(at(a).value.size()));
  return push(std::move(n));
}

Var Tape::l2_norm_rows(Var a) {
  Node n;
  n.op = Op::kL2NormRows;
  n.a = a.id;
  n.requires_grad = at(a).requires_grad;
  n.value = at(a).value.rowwise().norm();
  return push(std::move(n));
}

Var Tape::concat_rows(Var a, Var b) {
  if (at(a).value.cols() != at(b).value.cols())
    throw std::invalid_argument("concat_rows: column counts differ");
  Node n;
  n.op = Op::kConcatRows;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value.resize(at(a).value.rows() + at(b).value.rows(), at(a).value.cols());
  n.value.topRows(at(a).value.rows()) = at(a).value;
  n.value.bottomRows(at(b).value.rows()) = at(b).value;
  return push(std::move(n));
}

Var Tape::gather_rows(Var m, const Eigen::VectorXi& rows) {
  const Matrix& src = at(m).value;
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    if (rows[i] < 0 || rows[i] >= src.rows())
      throw std::invalid_argument("gather_rows: row index out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.a = m.id;
  n.requires_grad = at(m).requires_grad;
  n.idx = rows;
  n.value.resize(rows.size(), src.cols());
  for (Eigen::Index i = 0; i < rows.size(); ++i) n.value.row(i) = src.row(rows[i]);
  return push(std::move(n));
}

Var Tape::gather(Var x, const Eigen::MatrixXi& idx) {
  const Matrix& src = at(x).value;
  if (src.cols() != 1)
    throw std::invalid_argument("gather: source must be a column vector");
  Node n;
  n.op = Op::kGather;
  n.a = x.id;
  n.requires_grad = at(x).requires_grad;
  n.idx = idx;
  n.value.resize(idx.rows(), idx.cols());
  for (Eigen::Index r = 0; r < idx.rows(); ++r) {
    for (Eigen::Index c = 0; c < idx.cols(); ++c) {
      const int i = idx(r, c);
      if (i < 0 || i >= src.rows())
        throw std::invalid_argument("gather: index out of range");
      n.value(r, c) = src(i, 0);
    }
  }
  return push(std::move(n));
}

Var Tape::overlap_add(Var frames, int hop, int n_samples) {
  const Matrix& f = at(frames).value;
  Node n;
  n.op = Op::kOverlapAdd;
  n.a = frames.id;
  n.i0 = hop;
  n.i1 = n_samples;
  n.requires_grad = at(frames).requires_grad;
  n.value = recodec::overlap_add(f, hop, n_samples);
  return push(std::move(n));
}

Var Tape::stop_gradient(Var a) {
  Node n;
  n.op = Op::kStopGradient;
  n.a = a.id;
  n.requires_grad = false;
  n.value = at(a).value;
  return push(std::move(n));
}

Var Tape::straight_through(Var continuous, Var quantized) {
  require_same_shape(at(continuous).value, at(quantized).value, "straight_through");
  Node n;
  n.op = Op::kStraightThrough;
  n.a = continuous.id;
  n.b = quantized.id;
  n.requires_grad = at(continuous).requires_grad;
  n.value = at(quantized).value;
  return push(std::move(n));
}

void Tape::backward(Var loss) {
  if (backward_done_)
    throw std::logic_error("backward already ran on this tape; reset() first");
  const Node& top = at(loss);
  if (top.value.rows() != 1 || top.value.cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar");
  backward_done_ = true;
  for (Node& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[static_cast<size_t>(loss.id)].grad(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id)
    if (nodes_[static_cast<size_t>(id)].requires_grad) backprop(id);
}

void Tape::backprop(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Matrix& g = n.grad;
  auto ga = [&]() -> Matrix& { return nodes_[static_cast<size_t>(n.a)].grad; };
  auto gb = [&]() -> Matrix& { return nodes_[static_cast<size_t>(n.b)].grad; };
  auto va = [&]() -> const Matrix& { return nodes_[static_cast<size_t>(n.a)].value; };
  auto vb = [&]() -> const Matrix& { return nodes_[static_cast<size_t>(n.b)].value; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd:
      ga() += g;
      gb() += g;
      break;
    case Op::kSub:
      ga() += g;
      gb() -= g;
      break;
    case Op::kMul:
      ga() += g.cwiseProduct(vb());
      gb() += g.cwiseProduct(va());
      break;
    case Op::kScale:
      ga() += n.c * g;
      break;
    case Op::kAddConst:
      ga() += g;
      break;
    case Op::kMatmul:
      ga() += g * vb().transpose();
      gb() += va().transpose() * g;
      break;
    case Op::kAffine: {
      Node& bias = nodes_[static_cast<size_t>(n.i0)];
      ga() += g * vb().transpose();
      gb() += va().transpose() * g;
      bias.grad += g.colwise().sum();
      break;
    }
    case Op::kScaleBy:
      ga() += vb()(0, 0) * g;
      gb()(0, 0) += g.cwiseProduct(va()).sum();
      break;
    case Op::kReciprocal:
      ga() -= g.cwiseProduct(n.value.cwiseProduct(n.value));
      break;
    case Op::kTanh:
      ga() += g.cwiseProduct(Matrix(1.0 - n.value.array().square()));
      break;
    case Op::kLog:
      ga() += g.cwiseQuotient(va());
      break;
    case Op::kSqrt:
      ga() += 0.5 * g.cwiseQuotient(n.value);
      break;
    case Op::kSquare:
      ga() += 2.0 * g.cwiseProduct(va());
      break;
    case Op::kAbs:
      ga() += g.cwiseProduct(Matrix(va().array().sign()));
      break;
    case Op::kSum:
      ga().array() += g(0, 0);
      break;
    case Op::kMean:
      ga().array() += g(0, 0) / static_cast<double>(va().size());
      break;
    case Op::kMeanAxis:
      if (n.i0 == 0)
        ga() += g.replicate(va().rows(), 1) / static_cast<double>(va().rows());
      else
        ga() += g.replicate(1, va().cols()) / static_cast<double>(va().cols());
      break;
    case Op::kMse: {
      const Matrix diff = va() - vb();
      const double s = 2.0 * g(0, 0) / static_cast<double>(diff.size());
      ga() += s * diff;
      gb() -= s * diff;
      break;
    }
    case Op::kL2NormRows:
      for (Eigen::Index r = 0; r < va().rows(); ++r) {
        const double norm = n.value(r, 0);
        if (norm > 0.0) ga().row(r) += (g(r, 0) / norm) * va().row(r);
      }
      break;
    case Op::kConcatRows:
      ga() += g.topRows(va().rows());
      gb() += g.bottomRows(vb().rows());
      break;
    case Op::kGatherRows:
      for (Eigen::Index i = 0; i < n.idx.size(); ++i)
        ga().row(n.idx(i)) += g.row(i);
      break;
    case Op::kGather:
      for (Eigen::Index r = 0; r < n.idx.rows(); ++r)
        for (Eigen::Index c = 0; c < n.idx.cols(); ++c)
          ga()(n.idx(r, c), 0) += g(r, c);
      break;
    case Op::kOverlapAdd: {
      const int frame = static_cast<int>(va().cols());
      const int hop = n.i0;
      const int n_samples = n.i1;
      const Eigen::VectorXd w = hann_window(frame);
      const Eigen::VectorXd wsum = ola_window_sum(frame, hop, n_samples);
      const int pad = (frame - hop) / 2;
      Matrix& gf = ga();
      for (Eigen::Index t = 0; t < va().rows(); ++t) {
        const long long start = static_cast<long long>(t) * hop - pad;
        for (int k = 0; k < frame; ++k) {
          const long long p = start + k;
          if (p >= 0 && p < n_samples && wsum[static_cast<int>(p)] > 1e-12)
            gf(t, k) += w[k] / wsum[static_cast<int>(p)] * g(static_cast<int>(p), 0);
        }
      }
      break;
    }
    case Op::kStopGradient:
      break;
    case Op::kStraightThrough:
      ga() += g;
      break;
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace recodec::ad
