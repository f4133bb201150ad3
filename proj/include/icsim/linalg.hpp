#pragma once

#include <Eigen/Dense>

#include "types.hpp"

namespace icsim::linalg {

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
struct HermitianEigen {
  Eigen::VectorXd values;
  CMatrix vectors;
};

/// Deterministic Hermitian eigen-decomposition. Each eigenvector is rotated
/// so its largest-magnitude entry is real positive; eigenvalues closer than
/// 1e-12 (relative to the spectral scale) are ordered by lexicographic
/// comparison of their vectors' entries. Throws NumericalError on failure.
HermitianEigen hermitian_eigen(const CMatrix& a);

/// Top generalized eigenvectors of the Hermitian pencil (a, b), b positive
/// definite, eigenvalues descending. Columns are unit norm.
HermitianEigen generalized_eigen_descending(const CMatrix& a, const CMatrix& b);

/// Modified Gram-Schmidt in column order. A column that becomes numerically
/// dependent is replaced by the canonical basis vector with the largest
/// component orthogonal to the preceding columns.
CMatrix gram_schmidt(const CMatrix& a);

CMatrix normalize_columns(const CMatrix& a, Eigen::VectorXd* norms = nullptr);

/// Real part of v^H A v.
inline double quad_form(const Eigen::Ref<const CVector>& v, const CMatrix& a) {
  return v.dot(a * v).real();
}

/// Largest deviation from Hermitian symmetry, max |A - A^H|.
double hermitian_defect(const CMatrix& a);

/// Rotate the vector so that its largest-magnitude entry is real positive.
CVector fix_phase(const CVector& v);

}  // namespace icsim::linalg
