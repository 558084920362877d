#include "doctest.h"
#include "oracles.hpp"

#include "stagg/autodiff.hpp"
#include "stagg/error.hpp"

#include <random>

using namespace stagg;
using ad::Matrix;
using ad::Tape;
using ad::Tensor;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

// Checks d f / d x on a fresh tape against central differences.
void check_gradient(const std::function<Tensor(Tape&, const Tensor&)>& build, const Matrix& x) {
  Tape tape;
  const Tensor leaf = tape.variable(x);
  const Tensor out = build(tape, leaf);
  const Matrix analytic = tape.backward(out)[leaf];
  const Matrix numeric = oracle::central_difference(
      [&](const Matrix& v) {
        Tape t;
        return build(t, t.variable(v)).item();
      },
      x);
  CHECK(oracle::gradient_mismatch(analytic, numeric) <= 0.0);
}

}  // namespace

TEST_CASE("matmul forward values") {
  Tape tape;
  Matrix M(2, 2);
  M << 5, -1, 2, 7;
  CHECK(matmul(tape.constant(Matrix::Identity(2, 2)), tape.constant(M)).value().isApprox(M));
  Matrix a(2, 2), b(2, 1), expected(2, 1);
  a << 1, 2, 3, 4;
  b << 1, 1;
  expected << 3, 7;
  CHECK(matmul(tape.constant(a), tape.constant(b)).value() == expected);
  CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(Matrix::Ones(3, 1))), DimensionError);
}

TEST_CASE("matmul gradient of sum(A B) with respect to A is ones * B^T") {
  std::mt19937_64 rng(3);
  const Matrix B = random_matrix(4, 2, rng);
  Tape tape;
  const Tensor A = tape.variable(random_matrix(3, 4, rng));
  const Tensor loss = sum(matmul(A, tape.constant(B)));
  const Matrix g = tape.backward(loss)[A];
  CHECK(g.isApprox(Matrix::Ones(3, 2) * B.transpose()));
}

TEST_CASE("elementwise identities") {
  Tape tape;
  std::mt19937_64 rng(5);
  const Matrix M = random_matrix(3, 3, rng);
  CHECK(add(tape.constant(Matrix::Zero(3, 3)), tape.constant(M)).value() == M);

  Matrix x(1, 21);
  for (int i = 0; i <= 20; ++i) x(0, i) = -10.0 + i;
  const Matrix back = log(exp(tape.constant(x))).value();
  CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-12);

  const Tensor three = tape.variable(Matrix::Constant(1, 1, 3.0));
  CHECK(tape.backward(square(three))[three](0, 0) == doctest::Approx(6.0));
}

TEST_CASE("log rejects non-positive input") {
  Tape tape;
  Matrix m(1, 2);
  m << 1.0, 0.0;
  CHECK_THROWS_AS(log(tape.constant(m)), DomainError);
}

TEST_CASE("binary ops check shapes") {
  Tape tape;
  const Tensor a = tape.constant(Matrix::Ones(2, 2));
  const Tensor b = tape.constant(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(ad::elementwise(ad::ElementwiseOp::mul, a), UsageError);
}

TEST_CASE("activations") {
  Tape tape;
  Matrix v(1, 2);
  v << -1, 2;
  Matrix r(1, 2);
  r << 0, 2;
  CHECK(relu(tape.constant(v)).value() == r);

  const Matrix s = softmax_rows(tape.constant(Matrix::Zero(1, 4))).value();
  for (int i = 0; i < 4; ++i) CHECK(s(0, i) == doctest::Approx(0.25));

  const Tensor zero = tape.variable(Matrix::Zero(1, 1));
  CHECK(tape.backward(ad::tanh(zero))[zero](0, 0) == doctest::Approx(1.0));
}

TEST_CASE("softmax rows are stochastic and finite for extreme logits") {
  std::mt19937_64 rng(11);
  Tape tape;
  Matrix logits = random_matrix(20, 6, rng, -800.0, 800.0);
  const Matrix s = softmax_rows(tape.constant(logits)).value();
  CHECK(s.allFinite());
  for (Eigen::Index r = 0; r < s.rows(); ++r) CHECK(std::abs(s.row(r).sum() - 1.0) <= 1e-12);

  const Matrix mild = softmax_rows(tape.constant(random_matrix(20, 6, rng, -5.0, 5.0))).value();
  CHECK((mild.array() > 0.0).all());
  CHECK((mild.array() < 1.0).all());
}

TEST_CASE("reductions") {
  Tape tape;
  CHECK(trace(tape.constant(Matrix::Identity(3, 3))).item() == 3.0);
  Matrix v(1, 2);
  v << 3, 4;
  CHECK(frobenius_norm(tape.constant(v)).item() == doctest::Approx(5.0));
  CHECK_THROWS_AS(trace(tape.constant(Matrix::Ones(2, 3))), DimensionError);

  const Tensor W = tape.variable(Matrix::Constant(2, 3, 0.7));
  CHECK(tape.backward(sum(W))[W] == Matrix::Ones(2, 3));

  const Tensor Z = tape.variable(Matrix::Zero(2, 2));
  CHECK(tape.backward(frobenius_norm(Z))[Z] == Matrix::Zero(2, 2));
}

TEST_CASE("backward requires a scalar and zero-fills unused leaves") {
  Tape tape;
  const Tensor a = tape.variable(Matrix::Ones(2, 2));
  const Tensor unused = tape.variable(Matrix::Ones(3, 1));
  CHECK_THROWS_AS(tape.backward(a), UsageError);
  const ad::Gradients g = tape.backward(sum(square(a)));
  CHECK(g[unused] == Matrix::Zero(3, 1));
  CHECK(g[a] == Matrix::Constant(2, 2, 2.0));
}

TEST_CASE("backward is deterministic across fresh tapes") {
  std::mt19937_64 rng(17);
  const Matrix x = random_matrix(4, 3, rng);
  auto run = [&] {
    Tape t;
    const Tensor v = t.variable(x);
    const Tensor out = sum(mul(ad::tanh(matmul(v, transpose(v))), exp(scale(matmul(v, transpose(v)), 0.1))));
    return t.backward(out)[v];
  };
  CHECK(run() == run());
}

TEST_CASE("every op matches central finite differences on random inputs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const Matrix B = random_matrix(4, 3, rng);
    const Matrix C = random_matrix(3, 4, rng);
    const Matrix x = random_matrix(3, 4, rng);
    const Matrix pos = random_matrix(3, 4, rng, 0.5, 2.0);
    const Matrix sq = random_matrix(4, 4, rng);

    check_gradient([&](Tape& t, const Tensor& v) { return sum(matmul(v, t.constant(B))); }, x);
    check_gradient([&](Tape& t, const Tensor& v) { return sum(square(matmul(t.constant(B), v))); }, x);
    check_gradient([&](Tape& t, const Tensor& v) { return sum(mul(add(v, t.constant(C)), sub(v, t.constant(C)))); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return sum(log(v)); }, pos);
    check_gradient([&](Tape&, const Tensor& v) { return sum(exp(v)); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return sum(mul(relu(v), v)); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return sum(square(ad::tanh(v))); }, x);
    check_gradient([&](Tape& t, const Tensor& v) { return sum(mul(softmax_rows(v), t.constant(C))); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return trace(mul(v, v)); }, sq);
    check_gradient([&](Tape&, const Tensor& v) { return frobenius_norm(v); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return sum(divide(v, frobenius_norm(v))); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return sum(square(block(transpose(v), 1, 1, 2, 2))); }, x);
    check_gradient([&](Tape&, const Tensor& v) { return sum(log(shift(scale(square(v), 2.0), 1.0))); }, x);
  }
}
