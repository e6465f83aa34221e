#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "tct/matrixcore.hpp"
#include "tct/rng.hpp"

using tct::Mat;
using tct::Vec;

namespace {
Mat random_mat(tct::Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}
}  // namespace

TEST_CASE("selector picks the requested block and zeroes the rest") {
  const Mat l3 = tct::selector(3, 2, 7);
  CHECK(l3.rows() == 2);
  CHECK(l3.cols() == 14);
  CHECK(l3.block(0, 4, 2, 2).isIdentity(0.0));
  CHECK(l3.cwiseAbs().sum() == doctest::Approx(2.0));

  const Mat l0 = tct::selector(0, 2, 7);
  CHECK(l0.isZero(0.0));

  // Acting on a stacked vector returns the block itself.
  tct::Rng rng(11);
  Vec xi = random_mat(rng, 14, 1);
  CHECK((l3 * xi - xi.segment(4, 2)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(tct::selector(8, 2, 7), tct::DimensionMismatch);
  CHECK_THROWS_AS(tct::selector(-1, 2, 7), tct::DimensionMismatch);
  CHECK_THROWS_AS(tct::selector(1, 0, 7), tct::DimensionMismatch);

  tct::Selector s{5, 3, 7};
  CHECK(s.mat().block(0, 12, 3, 3).isIdentity(0.0));
}

TEST_CASE("symmetric wrapper canonicalizes and rejects asymmetry") {
  Mat m(2, 2);
  m << 1.0, 2.0, 2.0 + 1e-13, 3.0;
  tct::SymMat sm(m);
  CHECK(sm.dim() == 2);
  CHECK(sm.mat()(0, 1) == sm.mat()(1, 0));
  CHECK(sm.mat()(0, 1) == doctest::Approx(2.0 + 0.5e-13).epsilon(1e-15));

  Mat bad(2, 2);
  bad << 1.0, 2.0, 2.1, 3.0;
  CHECK_THROWS_AS(tct::SymMat{bad}, tct::DimensionMismatch);

  Mat rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(tct::SymMat{rect}, tct::DimensionMismatch);

  Mat nan2 = Mat::Zero(2, 2);
  nan2(0, 0) = std::nan("");
  CHECK_THROWS_AS(tct::SymMat{nan2}, tct::NumericalBreakdown);
  CHECK_FALSE(tct::all_finite(nan2));
  CHECK(tct::all_finite(Mat::Identity(3, 3)));
}

TEST_CASE("block assembly places blocks and fills zeros") {
  Mat a = Mat::Constant(2, 2, 1.0);
  Mat b = Mat::Constant(2, 3, 2.0);
  Mat c = Mat::Constant(1, 3, 3.0);
  const Mat out = tct::block_assemble({{a, b}, {std::nullopt, c}}, {2, 1}, {2, 3});
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 5);
  CHECK(out.topLeftCorner(2, 2).isConstant(1.0));
  CHECK(out.topRightCorner(2, 3).isConstant(2.0));
  CHECK(out.bottomLeftCorner(1, 2).isZero(0.0));
  CHECK(out.bottomRightCorner(1, 3).isConstant(3.0));

  CHECK_THROWS_AS(tct::block_assemble({{a}}, {2, 1}, {2}),
                  tct::DimensionMismatch);
  CHECK_THROWS_AS(tct::block_assemble({{a, b}, {c, c}}, {2, 1}, {2, 3}),
                  tct::DimensionMismatch);

  const Mat s = tct::sym_2x2(Mat::Identity(2, 2), Mat::Constant(2, 1, 5.0),
                             Mat::Constant(1, 1, 7.0));
  CHECK((s - s.transpose()).isZero(0.0));
  CHECK(s(0, 2) == 5.0);
  CHECK(s(2, 0) == 5.0);
  CHECK(s(2, 2) == 7.0);
}

TEST_CASE("symmetric eigensolve is ascending, orthonormal, and matches the "
          "characteristic polynomial") {
  tct::Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    Mat g = random_mat(rng, 6, 6, -2.0, 2.0);
    tct::SymMat sm(Mat(0.5 * (g + g.transpose())));
    const tct::SymEig eig = tct::sym_eig(sm);

    CHECK(std::is_sorted(eig.values.data(), eig.values.data() + 6));
    CHECK((eig.vectors.transpose() * eig.vectors - Mat::Identity(6, 6))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    const Mat recon =
        eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
    CHECK((recon - sm.mat()).cwiseAbs().maxCoeff() < 1e-12);

    // Independent cross-check: eigenvalues are the real roots of
    // det(xI - M) computed by a different algorithm entirely.
    std::vector<double> roots =
        oracles::poly_real_roots(oracles::charpoly_coeffs(sm.mat()));
    REQUIRE(roots.size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(eig.values(i) == doctest::Approx(roots[static_cast<std::size_t>(i)])
                                 .epsilon(1e-8));
    }
  }
}

TEST_CASE("psd test accepts the cone boundary and rejects indefinite input") {
  CHECK(tct::is_psd(tct::SymMat(Mat::Identity(4, 4))));
  CHECK_FALSE(tct::is_psd(tct::SymMat(Mat(-Mat::Identity(4, 4)))));

  // Rank-deficient PSD: vv^T.
  Vec v(3);
  v << 1.0, -2.0, 0.5;
  CHECK(tct::is_psd(tct::SymMat(Mat(v * v.transpose()))));

  Mat ind = Mat::Zero(2, 2);
  ind(0, 0) = 1.0;
  ind(1, 1) = -1e-3;
  CHECK_FALSE(tct::is_psd(tct::SymMat(ind)));
  // Tolerance scales with the largest eigenvalue.
  CHECK(tct::is_psd(tct::SymMat(ind), 1e-2));

  CHECK(tct::lambda_min(tct::SymMat(ind)) == doctest::Approx(-1e-3));
  CHECK(tct::lambda_max(tct::SymMat(ind)) == doctest::Approx(1.0));
}

TEST_CASE("spectral norm equals the largest singular value") {
  Mat d = Mat::Zero(3, 2);
  d(0, 0) = 3.0;
  d(1, 1) = -4.0;
  CHECK(tct::spectral_norm(d) == doctest::Approx(4.0));
  CHECK(tct::spectral_norm(Mat::Zero(2, 2)) == 0.0);
}

TEST_CASE("matrix exponential matches the Taylor-series oracle") {
  CHECK((tct::expm(Mat::Zero(3, 3)) - Mat::Identity(3, 3)).isZero(1e-15));

  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 1.0;
  diag(1, 1) = -2.0;
  const Mat ed = tct::expm(diag);
  CHECK(ed(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
  CHECK(ed(1, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(ed(0, 1) == 0.0);

  // Continuous-time drift of the friction plant, scaled by its two sampling
  // periods used throughout the reproduction scenarios.
  for (double T : {0.01, 0.1}) {
    Mat ac(2, 2);
    ac << 0.0, 1.0, 0.0, -0.1;
    const Mat got = tct::expm(Mat(ac * T));
    const Mat want = oracles::taylor_expm(ac * T);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }

  tct::Rng rng(7);
  for (int trial = 0; trial < 4; ++trial) {
    Mat m = random_mat(rng, 4, 4, -0.8, 0.8);
    const Mat got = tct::expm(m);
    const Mat want = oracles::taylor_expm(m);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-11);
    // exp(M) * exp(-M) = I.
    CHECK((got * tct::expm(Mat(-m)) - Mat::Identity(4, 4))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }

  CHECK_THROWS_AS(tct::expm(Mat::Zero(2, 3)), tct::DimensionMismatch);
}

TEST_CASE("zero-order hold matches the closed-form friction plant") {
  Mat ac(2, 2);
  ac << 0.0, 1.0, 0.0, -0.1;
  Mat bc(2, 1);
  bc << 0.0, 0.1;

  for (double T : {0.01, 0.1, 1.0}) {
    const auto [a, b] = tct::zoh_discretize(ac, bc, T);
    const auto [ao, bo] = oracles::friction_plant_zoh(0.1, 0.1, T);
    CHECK((a - ao).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((b - bo).cwiseAbs().maxCoeff() < 1e-13);
  }

  // Literal digits for the T = 0.1 discretization used by the data scenarios.
  const auto [a1, b1] = tct::zoh_discretize(ac, bc, 0.1);
  CHECK(a1(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a1(0, 1) == doctest::Approx(0.0995016625).epsilon(1e-8));
  CHECK(a1(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a1(1, 1) == doctest::Approx(0.9900498337).epsilon(1e-8));
  CHECK(b1(0, 0) == doctest::Approx(0.0004983375).epsilon(1e-6));
  CHECK(b1(1, 0) == doctest::Approx(0.0099501663).epsilon(1e-8));

  CHECK_THROWS_AS(tct::zoh_discretize(ac, bc, 0.0), tct::BadProblem);
  CHECK_THROWS_AS(tct::zoh_discretize(ac, bc, -1.0), tct::BadProblem);
  CHECK_THROWS_AS(tct::zoh_discretize(Mat::Zero(2, 3), bc, 0.1),
                  tct::DimensionMismatch);
  CHECK_THROWS_AS(tct::zoh_discretize(ac, Mat::Zero(3, 1), 0.1),
                  tct::DimensionMismatch);
}

TEST_CASE("oracle self-checks") {
  // Roots of (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6.
  std::vector<double> roots = oracles::poly_real_roots({1.0, -6.0, 11.0, -6.0});
  REQUIRE(roots.size() == 3);
  CHECK(roots[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(roots[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(roots[2] == doctest::Approx(3.0).epsilon(1e-10));

  // x^2 + 1 has no real roots.
  CHECK(oracles::poly_real_roots({1.0, 0.0, 1.0}).empty());

  // Discrete Lyapunov residual.
  Mat a(2, 2);
  a << 0.5, 0.1, -0.2, 0.3;
  const Mat q = Mat::Identity(2, 2);
  const Mat p = oracles::dlyap_solve(a, q);
  CHECK((a.transpose() * p * a - p + q).cwiseAbs().maxCoeff() < 1e-11);
  CHECK((p - p.transpose()).isZero(1e-12));
  CHECK(tct::is_psd(tct::SymMat(p)));

  Mat rot(2, 2);
  rot << 0.0, -2.0, 2.0, 0.0;
  CHECK(oracles::spectral_radius(rot) == doctest::Approx(2.0).epsilon(1e-12));

  CHECK((oracles::taylor_expm(Mat::Zero(3, 3)) - Mat::Identity(3, 3))
            .isZero(0.0));
}

TEST_CASE("rng replays bit-exactly and draws land in range") {
  tct::Rng a(12345);
  tct::Rng b(12345);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  tct::Rng c(99);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = c.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }

  // Split streams are deterministic and distinct from the parent.
  tct::Rng p1(7);
  tct::Rng p2(7);
  tct::Rng c1 = p1.split();
  tct::Rng c2 = p2.split();
  CHECK(c1.next_u64() == c2.next_u64());
  CHECK(c1.next_u64() != p1.next_u64());
}
