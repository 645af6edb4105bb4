#pragma once

// Dense Hermitian helpers and the orthonormal basis of Hermitian matrices
// used to represent entry covariances as real symmetric operators.

#include "specuniv/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace specuniv {

inline bool is_real(const CMatrix& m, double tol = 0.0) {
  return m.imag().cwiseAbs().maxCoeff() <= tol;
}

inline double hermitian_defect(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

/// Ascending eigenvalues of a Hermitian matrix. Real input takes the real
/// symmetric path, which is several times faster.
inline RVector eigvalsh(const CMatrix& m) {
  if (m.rows() == 0) return RVector();
  if (is_real(m)) {
    Eigen::SelfAdjointEigenSolver<RMatrix> es(m.real(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigvalsh: eigensolver failed");
    return es.eigenvalues();
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigvalsh: eigensolver failed");
  return es.eigenvalues();
}

struct EigenPair {
  double value = 0.0;
  CVector vector;
};

/// Largest eigenpair of a Hermitian matrix.
inline EigenPair top_eigenpair(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error("top_eigenpair: eigensolver failed");
  const auto n = m.rows() - 1;
  return {es.eigenvalues()(n), es.eigenvectors().col(n)};
}

inline double lambda_max(const CMatrix& m) { return eigvalsh(m).maxCoeff(); }

/// Operator norm of a Hermitian matrix.
inline double herm_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  const RVector ev = eigvalsh(m);
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// Operator norm of a general (possibly rectangular) matrix.
inline double spectral_norm(const CMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(m);
  return svd.singularValues()(0);
}

/// Tr |M|^q for Hermitian M.
inline double trace_abs_power(const CMatrix& m, double q) {
  double acc = 0.0;
  for (double e : eigvalsh(m)) acc += std::pow(std::abs(e), q);
  return acc;
}

/// Sparse variant: only the principal block on the touched indices matters.
inline double trace_abs_power(const SparseHerm& s, double q) {
  const auto idx = s.support_indices();
  if (idx.empty()) return 0.0;
  return trace_abs_power(s.compressed(idx), q);
}

inline double herm_norm(const SparseHerm& s) {
  const auto idx = s.support_indices();
  if (idx.empty()) return 0.0;
  return herm_norm(s.compressed(idx));
}

/// B^{1/2} and related functions of a Hermitian matrix through its spectrum.
template <class Fn>
CMatrix hermitian_function(const CMatrix& m, Fn&& fn) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
  const CMatrix& v = es.eigenvectors();
  RVector f = es.eigenvalues().unaryExpr(fn);
  return v * f.cast<cplx>().asDiagonal() * v.adjoint();
}

// ---------------------------------------------------------------------------
// Orthonormal basis {H_a} of the real space of d x d Hermitian matrices with
// inner product Tr(AB). Ordering: diagonal units E_ii, then for each i<j the
// symmetric pair (E_ij + E_ji)/sqrt2 followed by the antisymmetric pair
// i(E_ij - E_ji)/sqrt2.

inline int herm_basis_size(int d) { return d * d; }

/// Coordinates xi_a = Tr(H_a M) of a Hermitian matrix.
inline RVector herm_coordinates(const CMatrix& m) {
  const int d = static_cast<int>(m.rows());
  RVector xi(d * d);
  int a = 0;
  for (int i = 0; i < d; ++i) xi(a++) = m(i, i).real();
  const double r2 = std::sqrt(2.0);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      // Tr(H M) with H = (E_ij+E_ji)/sqrt2 gives (M_ji + M_ij)/sqrt2 = sqrt2 Re M_ij
      xi(a++) = r2 * m(i, j).real();
      // H = i(E_ij - E_ji)/sqrt2: Tr(H M) = i(M_ji - M_ij)/sqrt2 = sqrt2 Im M_ij
      xi(a++) = r2 * m(i, j).imag();
    }
  return xi;
}

inline RVector herm_coordinates(const SparseHerm& s) { return herm_coordinates(s.dense()); }

/// Inverse of herm_coordinates.
inline CMatrix herm_from_coordinates(const RVector& xi, int d) {
  CMatrix m = CMatrix::Zero(d, d);
  int a = 0;
  for (int i = 0; i < d; ++i) m(i, i) = xi(a++);
  const double s = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double re = xi(a++) * s;
      const double im = xi(a++) * s;
      m(i, j) = cplx(re, im);
      m(j, i) = cplx(re, -im);
    }
  return m;
}

/// Complex entry covariance Cov_{ij,kl} = sum_j (B_j)_{ij} conj((B_j)_{kl})
/// for a Gaussian series with Hermitian factors. Test oracle for v(X).
inline CMatrix entry_covariance(const std::vector<SparseHerm>& factors, int d) {
  CMatrix cov = CMatrix::Zero(d * d, d * d);
  for (const auto& f : factors) {
    CVector vec = CVector::Zero(d * d);
    for (const auto& e : f.entries) vec(e.row * d + e.col) += e.value;
    cov += vec * vec.adjoint();
  }
  return cov;
}

}  // namespace specuniv
