#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "mrrce/simgen.hpp"

using namespace mrrce;
using test_helpers::max_abs_diff;

TEST_CASE("gen_predictors covariance structure") {
  CHECK(ar1_covariance(5, 0.7)(0, 2) == doctest::Approx(0.49));
  CHECK(ar1_covariance(5, 0.0)(0, 1) == 0.0);

  Rng rng(61);
  const Matrix z0 = gen_predictors(rng, 100000, 3, 0.0);
  const Matrix cov0 = z0.transpose() * z0 / 100000.0;
  CHECK(max_abs_diff(cov0, Matrix::Identity(3, 3)) < 0.03);

  const Matrix z = gen_predictors(rng, 100000, 4, 0.7);
  const Matrix cov = z.transpose() * z / 100000.0;
  CHECK(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)) == doctest::Approx(0.7).epsilon(0.03));

  CHECK_THROWS_AS(gen_predictors(rng, 10, 2, 1.0), std::invalid_argument);
}

TEST_CASE("gen_coefficients masks and moments") {
  Rng rng(62);

  // full element mask
  CHECK(gen_coefficients(rng, 20, 4, 1.0, 0.3, 1.0, 0.0).cwiseAbs().maxCoeff() == 0.0);

  // dense i.i.d. case: empirical variance near sigma^2
  const double sigma = 1.4;
  const Matrix g = gen_coefficients(rng, 50000, 2, sigma, 0.0, 0.0, 0.0);
  const double var = g.squaredNorm() / static_cast<double>(g.size());
  CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.03));

  // group sparsity: fraction of zero rows
  const Matrix gg = gen_coefficients(rng, 10000, 3, 1.0, 0.0, 0.0, 0.5);
  int zero_rows = 0;
  for (Index i = 0; i < gg.rows(); ++i)
    if (gg.row(i).cwiseAbs().maxCoeff() == 0.0) ++zero_rows;
  CHECK(zero_rows / 10000.0 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("gen_error_cov structures") {
  const Matrix u = equicorr_eigenbasis(5);

  SUBCASE("identity") {
    const SpdMatrix s = gen_error_cov({ErrorKind::Identity, 0.0}, 5, u);
    CHECK(max_abs_diff(s.mat(), Matrix::Identity(5, 5)) < 1e-12);
  }

  SUBCASE("ar1 entries and banded inverse") {
    const SpdMatrix s = gen_error_cov({ErrorKind::Ar1, 0.75}, 5, u);
    const Matrix st = u.transpose() * s.mat() * u;
    CHECK(st(0, 2) == doctest::Approx(0.5625).epsilon(1e-12));  // 0.75^2
    const Matrix prec = st.inverse();
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j)
        if (std::abs(double(i - j)) >= 2) CHECK(std::abs(prec(i, j)) <= 1e-8);
  }

  SUBCASE("fgn formula") {
    const SpdMatrix s = gen_error_cov({ErrorKind::Fgn, 0.95}, 5, u);
    const Matrix st = u.transpose() * s.mat() * u;
    for (Index i = 0; i < 5; ++i) CHECK(st(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    const double want = 0.5 * (std::pow(2.0, 1.9) - 2.0);
    CHECK(st(0, 1) == doctest::Approx(want).epsilon(1e-12));
    // the AR-like limit check: H = 0.5 gives white noise
    const SpdMatrix white = gen_error_cov({ErrorKind::Fgn, 0.5}, 4, equicorr_eigenbasis(4));
    CHECK(max_abs_diff(white.mat(), Matrix::Identity(4, 4)) < 1e-12);
  }

  SUBCASE("equicorrelation") {
    const SpdMatrix s = gen_error_cov({ErrorKind::Equicorr, 0.9}, 5, u);
    const Matrix st = u.transpose() * s.mat() * u;
    CHECK(st(0, 1) == doctest::Approx(0.9));
    CHECK(st(0, 0) == doctest::Approx(1.0));
  }

  SUBCASE("round trip and positive definiteness for every structure") {
    for (const ErrorStructure es : {ErrorStructure{ErrorKind::Identity, 0.0},
                                    ErrorStructure{ErrorKind::Ar1, 0.75},
                                    ErrorStructure{ErrorKind::Fgn, 0.95},
                                    ErrorStructure{ErrorKind::Equicorr, 0.9}}) {
      const SpdMatrix s = gen_error_cov(es, 5, u);
      Matrix st(5, 5);
      switch (es.kind) {
        case ErrorKind::Identity: st = Matrix::Identity(5, 5); break;
        case ErrorKind::Ar1:
          for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 5; ++j) st(i, j) = std::pow(0.75, std::abs(double(i - j)));
          break;
        case ErrorKind::Fgn:
          for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 5; ++j) {
              const double k = std::abs(double(i - j));
              st(i, j) = 0.5 * (std::pow(k + 1, 1.9) - 2 * std::pow(k, 1.9) +
                                std::pow(std::abs(k - 1), 1.9));
            }
          break;
        case ErrorKind::Equicorr:
          st = Matrix::Constant(5, 5, 0.9);
          st.diagonal().setOnes();
          break;
      }
      CHECK(max_abs_diff(u.transpose() * s.mat() * u, st) < 1e-10);
      CHECK(sym_eigen(s.mat()).values.minCoeff() > 0.0);
    }
  }
}

TEST_CASE("simulate composition") {
  SUBCASE("zero coefficient scale leaves only noise") {
    SimConfig sc;
    sc.n = 20;
    sc.p = 4;
    sc.q = 3;
    sc.sigma = 0.0;
    sc.seed = 5;
    const SimInstance inst = simulate(sc);
    CHECK(inst.gamma_true.cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(inst.data.Y, inst.errors) == 0.0);
  }

  SUBCASE("determinism and exact reconstruction") {
    SimConfig sc;
    sc.n = 25;
    sc.p = 6;
    sc.q = 4;
    sc.rho = 0.6;
    sc.s = 0.2;
    sc.s_g = 0.1;
    sc.error_structure = {ErrorKind::Ar1, 0.75};
    sc.seed = 123;
    const SimInstance a = simulate(sc);
    const SimInstance b = simulate(sc);
    CHECK(max_abs_diff(a.data.Z, b.data.Z) == 0.0);
    CHECK(max_abs_diff(a.data.Y, b.data.Y) == 0.0);
    CHECK(max_abs_diff(a.gamma_true, b.gamma_true) == 0.0);
    CHECK(max_abs_diff(a.data.Y, (a.data.Z * a.gamma_true + a.errors).eval()) == 0.0);
  }

  SUBCASE("replication-scale dimensions") {
    SimConfig sc;
    sc.n = 50;
    sc.p = 20;
    sc.q = 5;
    sc.rho_z = 0.7;
    sc.seed = 1;
    const SimInstance inst = simulate(sc);
    CHECK(inst.data.Z.rows() == 50);
    CHECK(inst.data.Z.cols() == 20);
    CHECK(inst.data.Y.cols() == 5);
    CHECK(inst.gamma_true.rows() == 20);
    CHECK(inst.gamma_true.cols() == 5);
  }

  SUBCASE("empirical error covariance matches the requested structure") {
    SimConfig sc;
    sc.n = 100000;
    sc.p = 2;
    sc.q = 3;
    sc.sigma = 0.0;  // Y = E
    sc.error_structure = {ErrorKind::Equicorr, 0.5};
    sc.seed = 9;
    const SimInstance inst = simulate(sc);
    const Matrix cov = inst.data.Y.transpose() * inst.data.Y / 100000.0;
    CHECK(max_abs_diff(cov, inst.error_cov) < 0.03 * inst.error_cov.cwiseAbs().maxCoeff() * 3);
  }
}
