#include <doctest.h>

#include <cmath>
#include <functional>

#include "spoter/errors.hpp"
#include "spoter/ops.hpp"
#include "spoter/rng.hpp"
#include "spoter/selftest.hpp"
#include "spoter/sgd.hpp"

using namespace spoter;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Central finite differences of a scalar-valued function of one matrix.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x,
                        double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double saved = x(r, c);
      x(r, c) = saved + h;
      const double up = f(x);
      x(r, c) = saved - h;
      const double down = f(x);
      x(r, c) = saved;
      g(r, c) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

double max_rel_err(const Matrix& analytic, const Matrix& numeric) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
    for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
      const double denom =
          std::max({std::abs(analytic(r, c)), std::abs(numeric(r, c)), 1e-3});
      worst = std::max(worst, std::abs(analytic(r, c) - numeric(r, c)) / denom);
    }
  }
  return worst;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

}  // namespace

TEST_CASE("matmul against identity and a hand-expanded product") {
  Tape tape;
  const Tensor a = tape.constant(mat({{1, 2}, {3, 4}}));
  const Tensor eye = tape.constant(Matrix::Identity(2, 2));
  CHECK(matmul(a, eye).value() == a.value());

  const Tensor b = tape.constant(mat({{5}, {6}}));
  const Matrix expected = mat({{17}, {39}});  // 1*5+2*6, 3*5+4*6
  CHECK(matmul(a, b).value() == expected);

  CHECK_THROWS_AS(matmul(a, tape.constant(Matrix::Zero(3, 2))), ShapeError);
}

TEST_CASE("matmul gradient of sum(A*B) matches finite differences") {
  Rng rng(42);
  const Matrix a0 = random_matrix(rng, 3, 4);
  const Matrix b0 = random_matrix(rng, 4, 2);

  Tape tape;
  const Tensor a = tape.leaf(a0, true);
  const Tensor b = tape.leaf(b0, true);
  tape.backward(sum(matmul(a, b)));

  const Matrix num_a = numeric_gradient(
      [&](const Matrix& m) {
        Tape t;
        return sum(matmul(t.constant(m), t.constant(b0))).value()(0, 0);
      },
      a0);
  const Matrix num_b = numeric_gradient(
      [&](const Matrix& m) {
        Tape t;
        return sum(matmul(t.constant(a0), t.constant(m))).value()(0, 0);
      },
      b0);
  CHECK(max_rel_err(a.grad(), num_a) < 1e-6);
  CHECK(max_rel_err(b.grad(), num_b) < 1e-6);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tape tape;
  const Tensor y = softmax(tape.constant(mat({{0, 0, 0}})));
  CHECK(y.value()(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(y.value()(0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(y.value()(0, 2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax handles extreme magnitudes without overflow") {
  Tape tape;
  const Tensor y = softmax(tape.constant(mat({{1000.0, 0.0, -1000.0}})));
  CHECK(y.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(y.value()(0, 1) < 1e-300);
  CHECK(y.value()(0, 2) < 1e-300);
  CHECK(y.value().allFinite());
}

TEST_CASE("softmax values and row sums") {
  Tape tape;
  const Tensor y = softmax(tape.constant(mat({{1, 2, 3}})));
  // exp-normalized values computed independently
  CHECK(y.value()(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-14));
  CHECK(y.value()(0, 1) == doctest::Approx(0.24472847105479764).epsilon(1e-14));
  CHECK(y.value()(0, 2) == doctest::Approx(0.6652409557748218).epsilon(1e-14));

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    const Tensor s = softmax(t.constant(random_matrix(rng, 4, 6, -700.0, 700.0)));
    for (Eigen::Index r = 0; r < 4; ++r) {
      CHECK(std::abs(s.value().row(r).sum() - 1.0) <= 1e-12);
      CHECK(s.value().row(r).minCoeff() >= 0.0);
      CHECK(s.value().row(r).maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("softmax Jacobian matches finite differences on a random 5-vector") {
  Rng rng(11);
  const Matrix x0 = random_matrix(rng, 1, 5, -2.0, 2.0);
  const Matrix w = random_matrix(rng, 1, 5);

  Tape tape;
  const Tensor x = tape.leaf(x0, true);
  tape.backward(sum(mul(softmax(x), tape.constant(w))));

  const Matrix numeric = numeric_gradient(
      [&](const Matrix& m) {
        Tape t;
        return sum(mul(softmax(t.constant(m)), t.constant(w))).value()(0, 0);
      },
      x0);
  CHECK(max_rel_err(x.grad(), numeric) < 1e-6);
}

TEST_CASE("cross entropy closed forms") {
  Tape tape;
  const Tensor uniform = tape.constant(mat({{0.7, 0.7, 0.7, 0.7}}));
  CHECK(cross_entropy(uniform, 2).value()(0, 0) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-15));  // ln 4

  const Tensor sharp = tape.constant(mat({{10.0, 0.0, 0.0}}));
  CHECK(cross_entropy(sharp, 0).value()(0, 0) ==
        doctest::Approx(9.079573746725622e-05).epsilon(1e-12));  // ln(1 + 2 e^-10)

  CHECK_THROWS_AS(cross_entropy(sharp, 3), ShapeError);
  CHECK_THROWS_AS(cross_entropy(sharp, -1), ShapeError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  Rng rng(23);
  const Matrix x0 = random_matrix(rng, 1, 6, -3.0, 3.0);
  Tape tape;
  const Tensor x = tape.leaf(x0, true);
  tape.backward(cross_entropy(x, 2));

  const Matrix numeric = numeric_gradient(
      [&](const Matrix& m) {
        Tape t;
        return cross_entropy(t.constant(m), 2).value()(0, 0);
      },
      x0);
  CHECK(max_rel_err(x.grad(), numeric) < 1e-6);
}

TEST_CASE("layer_norm of a constant row collapses to the bias") {
  Tape tape;
  const Tensor y = layer_norm(tape.constant(mat({{3.5, 3.5, 3.5}})),
                              tape.constant(mat({{2.0, 2.0, 2.0}})),
                              tape.constant(mat({{1.0, -1.0, 0.5}})));
  CHECK(y.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.value()(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y.value()(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("layer_norm matches an independently computed small case") {
  Tape tape;
  const Tensor y = layer_norm(tape.constant(mat({{1, 2, 3}})),
                              tape.constant(mat({{2, 2, 2}})),
                              tape.constant(mat({{1, 1, 1}})));
  CHECK(y.value()(0, 0) == doctest::Approx(-1.4494713718167804).epsilon(1e-14));
  CHECK(y.value()(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(y.value()(0, 2) == doctest::Approx(3.4494713718167804).epsilon(1e-14));
}

TEST_CASE("relu clamps negatives") {
  Tape tape;
  const Tensor y = relu(tape.constant(mat({{-1, 2}})));
  CHECK(y.value() == mat({{0, 2}}));
}

TEST_CASE("linear computes x*w + b and its gradient") {
  Tape tape;
  const Tensor y = linear(tape.constant(mat({{1, 2}})), tape.constant(mat({{1, 3}, {2, 4}})),
                          tape.constant(mat({{0.5, -1}})));
  CHECK(y.value() == mat({{5.5, 10}}));

  Rng rng(31);
  const Matrix x0 = random_matrix(rng, 3, 4);
  const Matrix w0 = random_matrix(rng, 4, 2);
  const Matrix b0 = random_matrix(rng, 1, 2);
  Tape t2;
  const Tensor x = t2.leaf(x0, true);
  const Tensor w = t2.leaf(w0, true);
  const Tensor b = t2.leaf(b0, true);
  t2.backward(sum(linear(x, w, b)));

  auto loss_with = [&](const Matrix& xm, const Matrix& wm, const Matrix& bm) {
    Tape t;
    return sum(linear(t.constant(xm), t.constant(wm), t.constant(bm))).value()(0, 0);
  };
  CHECK(max_rel_err(w.grad(), numeric_gradient(
                                  [&](const Matrix& m) { return loss_with(x0, m, b0); }, w0)) <
        1e-6);
  CHECK(max_rel_err(b.grad(), numeric_gradient(
                                  [&](const Matrix& m) { return loss_with(x0, w0, m); }, b0)) <
        1e-6);
  CHECK(max_rel_err(x.grad(), numeric_gradient(
                                  [&](const Matrix& m) { return loss_with(m, w0, b0); }, x0)) <
        1e-6);
}

TEST_CASE("backward of sum(x .* x) doubles the input") {
  Tape tape;
  const Tensor x = tape.leaf(mat({{1, 2}}), true);
  tape.backward(sum(mul(x, x)));
  CHECK(x.grad() == mat({{2, 4}}));
}

TEST_CASE("backward rejects non-scalar losses and spent tapes") {
  Tape tape;
  const Tensor x = tape.leaf(mat({{1, 2}}), true);
  const Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);

  const Tensor loss = sum(y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ShapeError);
}

TEST_CASE("independent tapes produce identical gradients") {
  auto run = [] {
    Tape tape;
    const Tensor x = tape.leaf(mat({{0.3, -0.8, 1.2}}), true);
    tape.backward(cross_entropy(relu(x), 1));
    return Matrix(x.grad());
  };
  CHECK(run() == run());
}

TEST_CASE("backward through a sum of sub-graphs is additive") {
  Rng rng(17);
  const Matrix x0 = random_matrix(rng, 2, 3);

  Tape joint;
  const Tensor xj = joint.leaf(x0, true);
  joint.backward(add(sum(mul(xj, xj)), sum(relu(xj))));
  const Matrix combined = xj.grad();

  Tape t1;
  const Tensor x1 = t1.leaf(x0, true);
  t1.backward(sum(mul(x1, x1)));
  Tape t2;
  const Tensor x2 = t2.leaf(x0, true);
  t2.backward(sum(relu(x2)));

  CHECK((combined - (x1.grad() + x2.grad())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transpose, scale, concat and slice behave and invert") {
  Tape tape;
  const Matrix m0 = mat({{1, 2, 3}, {4, 5, 6}});
  const Tensor m = tape.constant(m0);
  CHECK(transpose(m).value() == Matrix(m0.transpose()));
  CHECK(scale(m, -2.0).value() == Matrix(-2.0 * m0));

  const Tensor left = slice_cols(m, 0, 1);
  const Tensor right = slice_cols(m, 1, 2);
  CHECK(concat_cols({left, right}).value() == m0);

  const Tensor top = slice_rows(m, 0, 1);
  const Tensor bottom = slice_rows(m, 1, 1);
  CHECK(concat_rows({top, bottom}).value() == m0);

  CHECK_THROWS_AS(slice_cols(m, 2, 5), ShapeError);
  CHECK_THROWS_AS(concat_cols({m, tape.constant(Matrix::Zero(3, 1))}), ShapeError);
}

TEST_CASE("non-finite op results are rejected") {
  Tape tape;
  const Tensor big = tape.constant(mat({{1e308}}));
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("dropout identity at rate zero and rescaling otherwise") {
  Rng rng(3);
  const Matrix x0 = random_matrix(rng, 8, 8, 0.5, 1.5);
  Tape tape;
  const Tensor x = tape.constant(x0);
  Rng d0(1);
  CHECK(dropout(x, 0.0, d0).value() == x0);

  Rng d1(1);
  const Matrix y = dropout(x, 0.5, d1).value();
  int zeros = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.reshaped()(i);
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(2.0 * x0.reshaped()(i)));
    }
  }
  CHECK(zeros > 8);
  CHECK(zeros < 56);
}

TEST_CASE("sgd arithmetic") {
  Matrix p = mat({{1.0}});
  Matrix v;
  sgd_step(p, mat({{2.0}}), 0.0, 0.0, 0.0, v);
  CHECK(p(0, 0) == 1.0);  // lr = 0 leaves parameters alone

  sgd_step(p, mat({{2.0}}), 0.001, 0.0, 0.0, v);
  CHECK(p(0, 0) == doctest::Approx(0.998).epsilon(1e-15));
}

TEST_CASE("sgd momentum follows the hand-unrolled recurrence") {
  // p0 = 1, lr = 0.1, momentum = 0.9: v1 = 2 -> p1 = 0.8; v2 = 0.8 -> p2 = 0.72
  Matrix p = mat({{1.0}});
  Matrix v;
  sgd_step(p, mat({{2.0}}), 0.1, 0.9, 0.0, v);
  CHECK(p(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(v(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  sgd_step(p, mat({{-1.0}}), 0.1, 0.9, 0.0, v);
  CHECK(p(0, 0) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(v(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sgd applies weight decay and validates shapes") {
  Matrix p = mat({{1.0}});
  Matrix v;
  sgd_step(p, mat({{0.0}}), 0.1, 0.0, 0.1, v);
  CHECK(p(0, 0) == doctest::Approx(0.99).epsilon(1e-15));

  Matrix wrong = mat({{1.0, 2.0}});
  CHECK_THROWS_AS(sgd_step(p, wrong, 0.1, 0.0, 0.0, v), ShapeError);
}

TEST_CASE("the shipped gradient suite passes at stock thresholds") {
  const auto checks = run_gradient_checks();
  CHECK(checks.size() >= 16);
  for (const auto& c : checks) {
    INFO(c.op, " max rel err ", c.max_rel_err);
    CHECK(c.pass);
  }
}
