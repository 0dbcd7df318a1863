#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "mrrce/numerics.hpp"

using namespace mrrce;
using test_helpers::max_abs_diff;
using test_helpers::random_spd;

TEST_CASE("sym_eigen identity") {
  const EigenFactorization f = sym_eigen(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(f.values[i] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_abs_diff(f.vectors * f.vectors.transpose(), Matrix::Identity(3, 3)) < 1e-10);
}

TEST_CASE("sym_eigen diagonal sorts nonincreasing") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 4.0;
  const EigenFactorization f = sym_eigen(m);
  CHECK(f.values[0] == doctest::Approx(4.0));
  CHECK(f.values[1] == doctest::Approx(1.0));
  CHECK(std::abs(f.vectors(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(f.vectors(0, 1)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eigen 2x2 hand-computed") {
  // [[2,1],[1,2]]: characteristic polynomial gives 3 and 1 with eigenvectors
  // (1,1)/sqrt(2) and (1,-1)/sqrt(2).
  Matrix m(2, 2);
  m << 2, 1, 1, 2;
  const EigenFactorization f = sym_eigen(m);
  CHECK(f.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  const double s = 1.0 / std::sqrt(2.0);
  for (int c = 0; c < 2; ++c) {
    Vector want(2);
    want << s, (c == 0 ? s : -s);
    const double sign = f.vectors(0, c) >= 0 ? 1.0 : -1.0;
    CHECK(max_abs_diff(sign * f.vectors.col(c), want) < 1e-10);
  }
}

TEST_CASE("sym_eigen rejects non-symmetric input") {
  Matrix m(2, 2);
  m << 1, 2, 0, 1;
  CHECK_THROWS_AS(sym_eigen(m), std::invalid_argument);
}

TEST_CASE("sym_eigen reconstruction and orthogonality up to dimension 500") {
  Rng rng(11);
  for (Index n : {2, 5, 50, 200, 500}) {
    const Matrix m = random_spd(rng, n);
    const EigenFactorization f = sym_eigen(m);
    CHECK(max_abs_diff(f.vectors.transpose() * f.vectors, Matrix::Identity(n, n)) < 1e-10);
    const Matrix rec = f.vectors * f.values.asDiagonal() * f.vectors.transpose();
    CHECK((rec - m).norm() <= 1e-8 * m.norm());
    for (Index i = 1; i < n; ++i) CHECK(f.values[i] <= f.values[i - 1]);
  }
}

TEST_CASE("sym_eigen clamps tiny negative eigenvalues of Gram matrices") {
  Rng rng(3);
  const Matrix z = rng.normal_matrix(20, 4);
  const EigenFactorization f = sym_eigen((z * z.transpose()).eval());
  CHECK(f.values.minCoeff() >= 0.0);
}

TEST_CASE("spd_solve basics") {
  Rng rng(5);
  const Matrix b = rng.normal_matrix(4, 2);
  CHECK(max_abs_diff(spd_solve(Matrix::Identity(4, 4), b), b) < 1e-12);
  CHECK(max_abs_diff(spd_solve((2.0 * Matrix::Identity(4, 4)).eval(), Matrix::Ones(4, 1)),
                     (0.5 * Matrix::Ones(4, 1)).eval()) < 1e-12);

  const Matrix a = random_spd(rng, 5);
  const Matrix rhs = rng.normal_matrix(5, 3);
  const Matrix x = spd_solve(a, rhs);
  CHECK((a * x - rhs).norm() <= 1e-8 * rhs.norm());
}

TEST_CASE("spd_solve rejects indefinite input") {
  Matrix a(2, 2);
  a << 1, 0, 0, -1;
  CHECK_THROWS_AS(spd_solve(a, Matrix::Ones(2, 1)), SolverError);
}

TEST_CASE("kron block structure") {
  Rng rng(7);
  const Matrix m = rng.normal_matrix(2, 3);
  const Matrix k = kron(Matrix::Identity(2, 2), m);
  CHECK(max_abs_diff(k.block(0, 0, 2, 3), m) == 0.0);
  CHECK(max_abs_diff(k.block(2, 3, 2, 3), m) == 0.0);
  CHECK(k.block(0, 3, 2, 3).norm() == 0.0);

  CHECK(max_abs_diff(kron(Matrix::Constant(1, 1, 2.0), m), (2.0 * m).eval()) == 0.0);

  Matrix e11 = Matrix::Zero(2, 2);
  e11(0, 0) = 1.0;
  const Matrix k2 = kron(e11, Matrix::Identity(2, 2));
  CHECK(max_abs_diff(k2.block(0, 0, 2, 2), Matrix::Identity(2, 2)) == 0.0);
  CHECK(k2.bottomRows(2).norm() == 0.0);
  CHECK(k2.rightCols(2).norm() == 0.0);
}

TEST_CASE("kron mixed-product identity") {
  Rng rng(13);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix a = rng.normal_matrix(3, 2), c = rng.normal_matrix(2, 4);
    const Matrix b = rng.normal_matrix(2, 3), d = rng.normal_matrix(3, 2);
    const Matrix lhs = kron(a, b) * kron(c, d);
    const Matrix rhs = kron((a * c).eval(), (b * d).eval());
    CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
  }
}

TEST_CASE("vec and unvec") {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const Matrix v = vec(m);
  CHECK(v(0, 0) == 1);
  CHECK(v(1, 0) == 3);
  CHECK(v(2, 0) == 2);
  CHECK(v(3, 0) == 4);
  CHECK(max_abs_diff(unvec(v, 2, 2), m) == 0.0);

  const Matrix col = Matrix::Ones(3, 1);
  CHECK(max_abs_diff(vec(col), col) == 0.0);
  CHECK_THROWS_AS(unvec(v, 3, 2), std::invalid_argument);
}

TEST_CASE("vec identity vec(A X B^T) = kron(B, A) vec(X)") {
  Rng rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix a = rng.normal_matrix(3, 2), x = rng.normal_matrix(2, 4),
                 b = rng.normal_matrix(5, 4);
    const Matrix lhs = vec((a * x * b.transpose()).eval());
    const Matrix rhs = kron(b, a) * vec(x);
    CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
  }
}

TEST_CASE("rng reproducibility and splitting") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng parent(42);
  Rng c0 = parent.child(0), c1 = parent.child(1);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i)
    if (c0.next_u64() != c1.next_u64()) all_equal = false;
  CHECK_FALSE(all_equal);

  // child derivation ignores how much the parent has been consumed
  Rng p1(7), p2(7);
  p2.next_u64();
  Rng d1 = p1.child(3), d2 = p2.child(3);
  CHECK(d1.next_u64() == d2.next_u64());
}

TEST_CASE("sample_matrix_normal isotropic moments") {
  Rng rng(101);
  const Index n = 100000;
  const Matrix draw = sample_matrix_normal(rng, n, SpdMatrix::identity(3));
  const Matrix cov = draw.transpose() * draw / static_cast<double>(n);
  CHECK(max_abs_diff(cov, Matrix::Identity(3, 3)) < 0.03);
}

TEST_CASE("sample_matrix_normal scalar variance") {
  Rng rng(102);
  const double sigma2 = 2.5;
  const Matrix draw =
      sample_matrix_normal(rng, 100000, SpdMatrix((sigma2 * Matrix::Identity(1, 1)).eval()));
  const double var = draw.squaredNorm() / static_cast<double>(draw.rows());
  CHECK(var == doctest::Approx(sigma2).epsilon(0.03));
}

TEST_CASE("sample_matrix_normal equicorrelated pairs") {
  Rng rng(103);
  Matrix c(2, 2);
  c << 1.0, 0.8, 0.8, 1.0;
  const Index n = 100000;
  const Matrix draw = sample_matrix_normal(rng, n, SpdMatrix(c));
  const Matrix cov = draw.transpose() * draw / static_cast<double>(n);
  const double corr = cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1));
  CHECK(corr == doctest::Approx(0.8).epsilon(0.025));
}

TEST_CASE("sample_matrix_normal is deterministic given the stream") {
  Rng a(9), b(9);
  const Matrix d1 = sample_matrix_normal(a, 8, SpdMatrix::identity(2));
  const Matrix d2 = sample_matrix_normal(b, 8, SpdMatrix::identity(2));
  CHECK(max_abs_diff(d1, d2) == 0.0);
}

TEST_CASE("SpdMatrix validates its invariants") {
  Matrix asym(2, 2);
  asym << 1, 0.5, 0.2, 1;
  CHECK_THROWS_AS(SpdMatrix{asym}, std::invalid_argument);
  Matrix indef(2, 2);
  indef << 1, 2, 2, 1;
  CHECK_THROWS_AS(SpdMatrix{indef}, std::invalid_argument);
  CHECK_NOTHROW(SpdMatrix::identity(3));
}
