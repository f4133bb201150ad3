#include "icsim/linalg.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "icsim/errors.hpp"

namespace icsim::linalg {

namespace {

std::string dump(const CMatrix& a) {
  std::ostringstream os;
  os.precision(17);
  os << a;
  return os.str();
}

bool lex_less(const CVector& a, const CVector& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
    if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
  }
  return false;
}

// Reorders runs of near-equal eigenvalues by their (phase-fixed) vectors.
void break_ties(HermitianEigen& eig, double scale) {
  const Eigen::Index n = eig.values.size();
  const double tol = 1e-12 * std::max(1.0, scale);
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index stop = start + 1;
    while (stop < n && eig.values(stop) - eig.values(stop - 1) < tol) ++stop;
    if (stop - start > 1) {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(stop - start));
      std::iota(order.begin(), order.end(), start);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return lex_less(eig.vectors.col(a), eig.vectors.col(b));
      });
      const CMatrix block = eig.vectors.middleCols(start, stop - start);
      const Eigen::VectorXd vals = eig.values.segment(start, stop - start);
      for (std::size_t i = 0; i < order.size(); ++i) {
        eig.vectors.col(start + static_cast<Eigen::Index>(i)) = block.col(order[i] - start);
        eig.values(start + static_cast<Eigen::Index>(i)) = vals(order[i] - start);
      }
    }
    start = stop;
  }
}

}  // namespace

CVector fix_phase(const CVector& v) {
  Eigen::Index best = 0;
  double best_mag = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Prefer the earliest entry among those of (nearly) maximal magnitude.
    const double m = std::abs(v(i));
    if (m > best_mag * (1.0 + 1e-12)) {
      best_mag = m;
      best = i;
    }
  }
  if (best_mag <= 0.0) return v;
  const cplx rot = std::conj(v(best)) / best_mag;
  return v * rot;
}

HermitianEigen hermitian_eigen(const CMatrix& a) {
  if (a.rows() != a.cols()) throw ConfigError("hermitian_eigen: matrix is not square");
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(a);
  if (solver.info() != Eigen::Success)
    throw NumericalError("Hermitian eigen-solver failed on instance:\n" + dump(a));
  HermitianEigen eig{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index c = 0; c < eig.vectors.cols(); ++c)
    eig.vectors.col(c) = fix_phase(eig.vectors.col(c));
  const double scale = eig.values.size() ? eig.values.cwiseAbs().maxCoeff() : 0.0;
  break_ties(eig, scale);
  return eig;
}

HermitianEigen generalized_eigen_descending(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw ConfigError("generalized_eigen: pencil shapes differ");
  Eigen::LLT<CMatrix> llt(b);
  if (llt.info() != Eigen::Success)
    throw NumericalError("generalized_eigen: B is not positive definite:\n" + dump(b));
  const CMatrix l = llt.matrixL();
  // C = L^{-1} A L^{-H}
  CMatrix c = l.triangularView<Eigen::Lower>().solve(a);
  c = l.triangularView<Eigen::Lower>().solve(CMatrix(c.adjoint())).adjoint();
  c = (c + c.adjoint()).eval() * 0.5;
  HermitianEigen inner = hermitian_eigen(c);
  const Eigen::Index n = a.rows();
  HermitianEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = n - 1 - i;
    out.values(i) = inner.values(src);
    CVector x = l.adjoint().triangularView<Eigen::Upper>().solve(inner.vectors.col(src));
    out.vectors.col(i) = fix_phase(x / x.norm());
  }
  return out;
}

CMatrix gram_schmidt(const CMatrix& a) {
  CMatrix q = a;
  const Eigen::Index n = a.rows();
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    CVector v = q.col(c);
    const double original = v.norm();
    for (Eigen::Index p = 0; p < c; ++p) v -= q.col(p).dot(v) * q.col(p);
    double norm = v.norm();
    if (norm <= 1e-12 * std::max(1.0, original)) {
      // Dependent column: take the basis vector least covered so far.
      double best_res = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        CVector e = CVector::Zero(n);
        e(i) = 1.0;
        for (Eigen::Index p = 0; p < c; ++p) e -= q.col(p).dot(e) * q.col(p);
        if (e.norm() > best_res + 1e-12) {
          best_res = e.norm();
          v = e;
        }
      }
      norm = v.norm();
    }
    q.col(c) = v / norm;
  }
  return q;
}

CMatrix normalize_columns(const CMatrix& a, Eigen::VectorXd* norms) {
  CMatrix out = a;
  if (norms) norms->resize(a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double n = a.col(c).norm();
    if (norms) (*norms)(c) = n;
    if (n > 0.0) out.col(c) /= n;
  }
  return out;
}

double hermitian_defect(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace icsim::linalg
