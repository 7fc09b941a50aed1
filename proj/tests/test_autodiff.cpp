#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck.hpp"
#include "op_cases.hpp"
#include "recodec/autodiff.hpp"
#include "recodec/rng.hpp"

#include <cmath>

using namespace recodec;
using ad::Matrix;
using ad::Tape;
using ad::Var;

TEST_CASE("tanh(0) is 0 with derivative 1") {
  Tape t;
  Var x = t.leaf(Matrix::Zero(1, 1));
  Var y = t.tanh(x);
  CHECK(t.value(y)(0, 0) == 0.0);
  t.backward(t.sum(y));
  CHECK(t.grad(x)(0, 0) == 1.0);
}

TEST_CASE("mse of a node with itself is 0 with zero gradient") {
  Rng rng(1);
  Tape t;
  Var a = t.leaf(gradcheck::random_matrix(3, 4, rng));
  Var loss = t.mse(a, a);
  CHECK(t.value(loss)(0, 0) == 0.0);
  t.backward(loss);
  CHECK(t.grad(a).isZero(0.0));
}

TEST_CASE("every differentiable op matches central finite differences") {
  Rng rng(2026);
  for (const auto& oc : opcases::all_op_cases()) {
    CAPTURE(oc.name);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, oc.run(rng));
    CHECK_MESSAGE(worst < 1e-4, oc.name << " worst rel err " << worst);
  }
}

TEST_CASE("random composite graph matches finite differences") {
  Rng rng(7);
  for (int inst = 0; inst < 10; ++inst) {
    gradcheck::Builder build = [](Tape& t, const std::vector<Matrix>& v) {
      Var x = t.leaf(v[0]);                       // 4x3
      Var w = t.leaf(v[1]);                       // 3x2
      Var b = t.leaf(v[2]);                       // 1x2
      Var h = t.tanh(t.affine(x, w, b));          // 4x2
      Var n = t.l2_norm_rows(h);                  // 4x1
      Var s = t.sqrt(t.add_const(t.mean(t.square(h)), 0.5));
      Var y = t.scale_by(n, t.reciprocal(s));
      Var loss = t.add(t.mse(y, t.constant(Matrix::Ones(4, 1))),
                       t.scale(t.sum(t.abs(t.add_const(h, 3.0))), 0.01));
      return gradcheck::Built{loss, {x, w, b}};
    };
    const double err = gradcheck::max_rel_error(
        build, {gradcheck::random_matrix(4, 3, rng),
                gradcheck::random_matrix(3, 2, rng),
                gradcheck::random_matrix(1, 2, rng)});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("stop_gradient is a forward identity with a dead backward branch") {
  Rng rng(3);
  const Matrix xv = gradcheck::random_matrix(3, 3, rng);

  Tape t;
  Var x = t.leaf(xv);
  Var sg = t.stop_gradient(x);
  CHECK(t.value(sg) == xv);
  t.backward(t.sum(sg));
  CHECK(t.grad(x).isZero(0.0));

  // Only the live branch of x + sg(x) carries gradient...
  Tape t2;
  Var x2 = t2.leaf(xv);
  Var both = t2.add(x2, t2.stop_gradient(x2));
  t2.backward(t2.sum(both));
  CHECK(t2.grad(x2) == Matrix::Ones(3, 3));

  // ...which finite differences confirm on the frozen surrogate, where the
  // detached branch is the constant it evaluates to.
  gradcheck::Builder frozen = [xv](Tape& tt, const std::vector<Matrix>& v) {
    Var xx = tt.leaf(v[0]);
    Var loss = tt.sum(tt.add(xx, tt.constant(xv)));
    return gradcheck::Built{loss, {xx}};
  };
  CHECK(gradcheck::max_rel_error(frozen, {xv}) < 1e-10);
}

TEST_CASE("straight_through forwards the quantized value bit-exactly") {
  Rng rng(4);
  const Matrix c = gradcheck::random_matrix(2, 5, rng);
  Matrix q = gradcheck::random_matrix(2, 5, rng, 1000.0);  // very different scale
  Tape t;
  Var cv = t.leaf(c);
  Var qv = t.leaf(q);
  Var st = t.straight_through(cv, qv);
  CHECK(t.value(st) == q);

  t.backward(t.sum(st));
  CHECK(t.grad(cv) == Matrix::Ones(2, 5));  // identity estimator
  CHECK(t.grad(qv).isZero(0.0));

  Tape t2;
  Var a = t2.leaf(Matrix::Zero(2, 2));
  Var b = t2.leaf(Matrix::Zero(3, 2));
  CHECK_THROWS_AS(t2.straight_through(a, b), std::invalid_argument);
}

TEST_CASE("gradients reach weights upstream of a quantization") {
  Rng rng(5);
  Tape t;
  Var x = t.constant(gradcheck::random_matrix(4, 3, rng));
  Var w = t.leaf(gradcheck::random_matrix(3, 2, rng));
  Var cont = t.matmul(x, w);
  // Stand-in for codebook lookup: values unrelated to cont.
  Var quant = t.constant(gradcheck::random_matrix(4, 2, rng));
  Var loss = t.mse(t.straight_through(cont, quant),
                   t.constant(gradcheck::random_matrix(4, 2, rng)));
  t.backward(loss);
  CHECK(t.grad(w).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("backward of a linear map has the expected closed form") {
  // loss = sum(W x): dloss/dW = x^T broadcast over rows.
  Rng rng(6);
  const Matrix wv = gradcheck::random_matrix(3, 4, rng);
  const Matrix xv = gradcheck::random_matrix(4, 1, rng);
  Tape t;
  Var w = t.leaf(wv);
  Var x = t.constant(xv);
  t.backward(t.sum(t.matmul(w, x)));
  Matrix want(3, 4);
  for (int r = 0; r < 3; ++r) want.row(r) = xv.transpose();
  CHECK((t.grad(w) - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward contract: scalar loss only, runs once per tape") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);  // non-scalar

  Tape t2;
  Var b = t2.leaf(Matrix::Ones(2, 2));
  Var loss = t2.sum(b);
  t2.backward(loss);
  CHECK_THROWS_AS(t2.backward(loss), std::logic_error);
  t2.reset();
  CHECK(t2.size() == 0);
}

TEST_CASE("gradient accumulation is linear in the loss") {
  Rng rng(8);
  const Matrix av = gradcheck::random_matrix(3, 3, rng);
  const Matrix bv = gradcheck::random_matrix(3, 3, rng);
  const double ca = 0.7, cb = -2.5;

  auto run = [&](double wa, double wb) {
    Tape t;
    Var a = t.leaf(av);
    Var l1 = t.mse(t.tanh(a), t.constant(bv));
    Var l2 = t.sum(t.square(a));
    t.backward(t.add(t.scale(l1, wa), t.scale(l2, wb)));
    return Matrix(t.grad(a));
  };

  const Matrix g1 = run(1.0, 0.0);
  const Matrix g2 = run(0.0, 1.0);
  const Matrix gmix = run(ca, cb);
  CHECK((gmix - (ca * g1 + cb * g2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical graphs give bitwise-identical gradients") {
  Rng rng1(99), rng2(99);
  auto build = [](Rng& rng) {
    Tape t;
    Var a = t.leaf(gradcheck::random_matrix(4, 4, rng));
    Var b = t.leaf(gradcheck::random_matrix(4, 4, rng));
    Var loss = t.mse(t.tanh(t.matmul(a, b)), t.constant(Matrix::Ones(4, 4)));
    t.backward(loss);
    return std::pair<Matrix, Matrix>(t.grad(a), t.grad(b));
  };
  const auto [ga1, gb1] = build(rng1);
  const auto [ga2, gb2] = build(rng2);
  CHECK(ga1 == ga2);
  CHECK(gb1 == gb2);
}

TEST_CASE("non-finite results are reported with the op name") {
  Tape t;
  Var neg = t.leaf(Matrix::Constant(1, 1, -1.0));
  CHECK_THROWS_WITH_AS(t.log(neg), doctest::Contains("log"), std::runtime_error);

  Tape t2;
  Var zero = t2.leaf(Matrix::Zero(1, 1));
  CHECK_THROWS_WITH_AS(t2.reciprocal(zero), doctest::Contains("reciprocal"),
                       std::runtime_error);

  Tape t3;
  Var big = t3.leaf(Matrix::Constant(1, 1, 1e308));
  CHECK_THROWS_WITH_AS(t3.square(big), doctest::Contains("square"),
                       std::runtime_error);
}

TEST_CASE("shape mismatches are argument errors") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 3));
  Var b = t.leaf(Matrix::Ones(3, 3));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.mse(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(t.mean_axis(a, 2), std::invalid_argument);
}

TEST_CASE("grad before backward is a contract violation") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.grad(a), std::logic_error);
}
