#include <doctest.h>

#include "helpers.hpp"
#include "icsim/errors.hpp"
#include "icsim/linalg.hpp"

using namespace icsim;
using testkit::max_abs;

namespace {

CMatrix random_hermitian(GaussianSource& g, int n) {
  const CMatrix a = g.complex_normal(n, n);
  return a + a.adjoint();
}

}  // namespace

TEST_CASE("hermitian eigen: ascending, orthonormal, phase fixed") {
  GaussianSource g(1);
  for (int t = 0; t < 20; ++t) {
    const CMatrix a = random_hermitian(g, 5);
    const auto e = linalg::hermitian_eigen(a);
    for (int i = 1; i < 5; ++i) CHECK(e.values(i) >= e.values(i - 1));
    CHECK(max_abs(e.vectors.adjoint() * e.vectors - CMatrix::Identity(5, 5)) < 1e-10);
    CHECK(max_abs(a * e.vectors - e.vectors * e.values.cast<cplx>().asDiagonal()) < 1e-9);
    for (int c = 0; c < 5; ++c) {
      Eigen::Index at = 0;
      e.vectors.col(c).cwiseAbs().maxCoeff(&at);
      CHECK(std::abs(e.vectors(at, c).imag()) < 1e-14);
      CHECK(e.vectors(at, c).real() > 0.0);
    }
  }
}

TEST_CASE("hermitian eigen is deterministic on repeated eigenvalues") {
  const CMatrix id = CMatrix::Identity(4, 4);
  const auto a = linalg::hermitian_eigen(id);
  const auto b = linalg::hermitian_eigen(id);
  CHECK(a.vectors == b.vectors);
  CHECK(max_abs(a.vectors.adjoint() * a.vectors - id) < 1e-12);
}

TEST_CASE("generalized eigen solves the pencil") {
  GaussianSource g(2);
  const CMatrix a = random_hermitian(g, 4);
  const CMatrix x = g.complex_normal(4, 4);
  const CMatrix b = x * x.adjoint() + CMatrix::Identity(4, 4);
  const auto e = linalg::generalized_eigen_descending(a, b);
  for (int i = 1; i < e.values.size(); ++i) CHECK(e.values(i) <= e.values(i - 1));
  for (int c = 0; c < e.vectors.cols(); ++c) {
    const CVector v = e.vectors.col(c);
    CHECK(v.norm() == doctest::Approx(1.0));
    CHECK((a * v - e.values(c) * (b * v)).norm() < 1e-9);
  }
  CHECK_THROWS_AS(linalg::generalized_eigen_descending(a, -b), NumericalError);
}

TEST_CASE("gram-schmidt keeps column order and replaces dependent columns") {
  GaussianSource g(3);
  const CMatrix a = g.complex_normal(4, 3);
  const CMatrix q = linalg::gram_schmidt(a);
  CHECK(max_abs(q.adjoint() * q - CMatrix::Identity(3, 3)) < 1e-12);
  // First column is the normalized first input.
  CHECK((q.col(0) - a.col(0).normalized()).norm() < 1e-12);

  CMatrix dep(3, 2);
  dep.col(0) = CVector::Unit(3, 0);
  dep.col(1) = 2.0 * CVector::Unit(3, 0);
  const CMatrix r = linalg::gram_schmidt(dep);
  CHECK(max_abs(r.adjoint() * r - CMatrix::Identity(2, 2)) < 1e-12);
}

TEST_CASE("small helpers") {
  CMatrix a(2, 2);
  a << 1.0, cplx(2, 1), cplx(2, -1), 3.0;
  CHECK(linalg::hermitian_defect(a) == 0.0);
  a(0, 1) += 0.5;
  CHECK(linalg::hermitian_defect(a) == doctest::Approx(0.5));

  CVector v(2);
  v << cplx(0, 1), cplx(0, -3);
  const CVector f = linalg::fix_phase(v);
  CHECK(f(1) == cplx(3, 0));
  CHECK(f(0) == cplx(-1, 0));

  Eigen::VectorXd norms;
  const CMatrix n = linalg::normalize_columns(CMatrix::Constant(2, 1, 3.0), &norms);
  CHECK(norms(0) == doctest::Approx(3.0 * std::sqrt(2.0)));
  CHECK(n.col(0).norm() == doctest::Approx(1.0));

  CMatrix h = CMatrix::Identity(2, 2) * 2.0;
  CVector u = CVector::Unit(2, 1);
  CHECK(linalg::quad_form(u, h) == doctest::Approx(2.0));
}
