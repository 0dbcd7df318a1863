#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "mrrce/model.hpp"

using namespace mrrce;
using test_helpers::max_abs_diff;
using test_helpers::random_spd;

TEST_CASE("equicorr_eigenvalues closed form") {
  const Vector ones = equicorr_eigenvalues(4, 0.0);
  CHECK(max_abs_diff(ones, Vector::Ones(4)) == 0.0);

  const Vector d = equicorr_eigenvalues(3, 0.5);
  CHECK(d[0] == doctest::Approx(2.0));
  CHECK(d[1] == doctest::Approx(0.5));
  CHECK(d[2] == doctest::Approx(0.5));

  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const Index q = 2 + static_cast<Index>(rng.next_u64() % 9);
    const double rho = 0.99 * rng.uniform();
    CHECK(equicorr_eigenvalues(q, rho).sum() == doctest::Approx(static_cast<double>(q)));
  }
  CHECK_THROWS_AS(equicorr_eigenvalues(3, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(equicorr_eigenvalues(3, -0.1), std::invalid_argument);
}

TEST_CASE("equicorr_eigenbasis diagonalizes every C_rho") {
  CHECK(equicorr_eigenbasis(1)(0, 0) == doctest::Approx(1.0));

  const Matrix u2 = equicorr_eigenbasis(2);
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(u2(0, 0) == doctest::Approx(s));
  CHECK(u2(1, 0) == doctest::Approx(s));
  CHECK(u2(0, 1) == doctest::Approx(s));
  CHECK(u2(1, 1) == doctest::Approx(-s));
  const Matrix d2 = u2.transpose() * EquicorrStructure(2, 0.5).matrix() * u2;
  CHECK(d2(0, 0) == doctest::Approx(1.5));
  CHECK(d2(1, 1) == doctest::Approx(0.5));

  const Matrix u5 = equicorr_eigenbasis(5);
  const Matrix d5 = u5.transpose() * EquicorrStructure(5, 0.8).matrix() * u5;
  const Vector want5 = equicorr_eigenvalues(5, 0.8);
  CHECK(want5[0] == doctest::Approx(4.2));
  CHECK(max_abs_diff(d5, want5.asDiagonal().toDenseMatrix()) < 1e-12);

  for (Index q = 2; q <= 10; ++q) {
    const Matrix u = equicorr_eigenbasis(q);
    CHECK(max_abs_diff(u.transpose() * u, Matrix::Identity(q, q)) < 1e-12);
    for (double rho : {0.0, 0.2, 0.4, 0.6, 0.8}) {
      const Matrix d = u.transpose() * EquicorrStructure(q, rho).matrix() * u;
      CHECK(max_abs_diff(d, equicorr_eigenvalues(q, rho).asDiagonal().toDenseMatrix()) < 1e-12);
    }
  }
}

TEST_CASE("determinant of C_rho matches the eigenvalue product") {
  for (Index q : {2, 3, 5, 8}) {
    for (double rho : {0.0, 0.3, 0.7, 0.95}) {
      const double det = EquicorrStructure(q, rho).matrix().determinant();
      const double closed = (1.0 + (q - 1) * rho) * std::pow(1.0 - rho, double(q - 1));
      const double prod = equicorr_eigenvalues(q, rho).prod();
      CHECK(det == doctest::Approx(closed).epsilon(1e-10));
      CHECK(prod == doctest::Approx(closed).epsilon(1e-12));
    }
  }
}

TEST_CASE("center_columns") {
  Rng rng(2);
  Matrix z = rng.normal_matrix(10, 3), y = rng.normal_matrix(10, 2);
  const Dataset d = center_columns(z, y);
  CHECK(d.Z.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(d.Y.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);

  // already-centered input is unchanged
  const Dataset d2 = center_columns(d.Z, d.Y);
  CHECK(max_abs_diff(d2.Z, d.Z) < 1e-12);
  CHECK(d2.z_means.cwiseAbs().maxCoeff() < 1e-12);

  // constant column becomes zero with its mean retained
  Matrix zc = Matrix::Ones(3, 1) * 5.0;
  Matrix yc(3, 1);
  yc << 1, 2, 3;
  const Dataset d3 = center_columns(zc, yc);
  CHECK(d3.Z.cwiseAbs().maxCoeff() == 0.0);
  CHECK(d3.z_means[0] == doctest::Approx(5.0));
  CHECK(d3.Y(0, 0) == doctest::Approx(-1.0));
  CHECK(d3.Y(1, 0) == doctest::Approx(0.0));
  CHECK(d3.Y(2, 0) == doctest::Approx(1.0));
  CHECK(d3.y_means[0] == doctest::Approx(2.0));

  CHECK_THROWS_AS(center_columns(Matrix::Ones(1, 2), Matrix::Ones(1, 1)), std::invalid_argument);
}

TEST_CASE("to_transformed invariants") {
  Rng rng(3);

  SUBCASE("identity predictors") {
    const Index n = 4;
    Matrix z = Matrix::Identity(n, n);
    Matrix y = rng.normal_matrix(n, 2);
    Dataset d;
    d.Z = z;
    d.Y = y;
    d.centered = true;  // constructed directly; contract is exercised on the flag
    const TransformedProblem tp = to_transformed(d);
    CHECK(max_abs_diff(Matrix(tp.S), Matrix(Vector::Ones(n))) < 1e-10);
    CHECK(tp.Y_t.norm() == doctest::Approx(y.norm()).epsilon(1e-10));
  }

  SUBCASE("q = 1 leaves responses unrotated on the right") {
    Matrix z = rng.normal_matrix(5, 2), y = rng.normal_matrix(5, 1);
    const Dataset d = center_columns(z, y);
    const TransformedProblem tp = to_transformed(d);
    CHECK(tp.U(0, 0) == doctest::Approx(1.0));
    CHECK(max_abs_diff(tp.Y_t, tp.L.transpose() * d.Y) < 1e-12);
  }

  SUBCASE("gram reconstruction") {
    Matrix z = rng.normal_matrix(6, 3), y = rng.normal_matrix(6, 2);
    const Dataset d = center_columns(z, y);
    const TransformedProblem tp = to_transformed(d);
    const Matrix zzt = d.Z * d.Z.transpose();
    CHECK((tp.L * tp.S.asDiagonal() * tp.L.transpose() - zzt).norm() <= 1e-8 * zzt.norm());
    CHECK(tp.Y_t.norm() == doctest::Approx(d.Y.norm()).epsilon(1e-10));
    CHECK(tp.Z_t.norm() == doctest::Approx(d.Z.norm()).epsilon(1e-10));
  }

  SUBCASE("requires centered data") {
    Dataset d;
    d.Z = rng.normal_matrix(4, 2);
    d.Y = rng.normal_matrix(4, 2);
    d.centered = false;
    CHECK_THROWS_AS(to_transformed(d), std::invalid_argument);
  }
}

TEST_CASE("back transforms round trip") {
  Rng rng(4);
  const Matrix u = equicorr_eigenbasis(5);
  const Matrix gamma = rng.normal_matrix(3, 5);
  CHECK(max_abs_diff(back_transform_gamma((gamma * u).eval(), u), gamma) < 1e-12);
  CHECK(max_abs_diff(back_transform_gamma(gamma, Matrix::Identity(5, 5)), gamma) == 0.0);

  const SpdMatrix omega_t(random_spd(rng, 4));
  const Matrix u4 = equicorr_eigenbasis(4);
  const SpdMatrix omega = back_transform_precision(omega_t, u4);
  CHECK(max_abs_diff(u4.transpose() * omega.mat() * u4, omega_t.mat()) < 1e-10);
  const Vector ev_t = sym_eigen(omega_t).values;
  const Vector ev = sym_eigen(omega).values;
  CHECK(max_abs_diff(ev, ev_t) < 1e-9);
  CHECK(max_abs_diff(back_transform_precision(SpdMatrix::identity(4), u4).mat(),
                     Matrix::Identity(4, 4)) < 1e-12);
}

TEST_CASE("rotated coefficients have the diagonal prior covariance") {
  // Monte Carlo: columns of Gamma U should decorrelate with variances
  // sigma^2 d_j(rho).
  Rng rng(5);
  const Index p = 100000, q = 3;
  const double rho = 0.6, sigma2 = 1.7;
  const Matrix c = (sigma2 * EquicorrStructure(q, rho).matrix()).eval();
  const Matrix gamma = sample_matrix_normal(rng, p, SpdMatrix(c));
  const Matrix gt = gamma * equicorr_eigenbasis(q);
  const Matrix cov = gt.transpose() * gt / static_cast<double>(p);
  const Matrix want = (sigma2 * equicorr_eigenvalues(q, rho)).asDiagonal();
  CHECK(max_abs_diff(cov, want) < 0.03 * sigma2 * (1.0 + (q - 1) * rho));
}

TEST_CASE("ParameterSet validation") {
  CHECK_THROWS_AS(ParameterSet(SpdMatrix::identity(2), 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ParameterSet(SpdMatrix::identity(2), 1.0, 1.0), std::invalid_argument);
  CHECK_NOTHROW(ParameterSet(SpdMatrix::identity(2), 1.0, kRhoMax));
}
