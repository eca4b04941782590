#pragma once

// Dense linear-algebra vocabulary shared by every module, plus the Hermitian
// eigen-helpers used for Taylor points, rank diagnostics and beam recovery.

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nisac {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

/// Thrown for contract violations (bad dimensions, zero matrices where a beam is required, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

inline bool is_hermitian(const CMatrix& h, double tol) {
  if (h.rows() != h.cols()) return false;
  return (h - h.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, h.cwiseAbs().maxCoeff());
}

/// Rotates `v` so its largest-magnitude entry is real and positive. Ties resolve
/// to the lowest index, which keeps recovered vectors reproducible.
inline CVector normalize_phase(CVector v) {
  if (v.size() == 0) return v;
  Eigen::Index best = 0;
  double best_mag = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double m = std::abs(v[i]);
    if (m > best_mag * (1.0 + 1e-12)) {
      best_mag = m;
      best = i;
    }
  }
  if (best_mag <= 0.0) return v;
  const Complex phase = std::conj(v[best]) / best_mag;
  return v * phase;
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted descending
/// and every eigenvector phase-normalized.
struct HermitianEigen {
  Vector values;     // descending
  CMatrix vectors;   // column i pairs with values[i]
};

inline HermitianEigen hermitian_eigen(const CMatrix& h) {
  if (h.rows() != h.cols()) throw Error("hermitian_eigen: matrix is not square");
  const CMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(sym);
  if (es.info() != Eigen::Success) throw Error("hermitian_eigen: eigen-solve failed");
  const Eigen::Index n = h.rows();
  HermitianEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = es.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = normalize_phase(es.eigenvectors().col(n - 1 - i));
  }
  return out;
}

/// Principal eigenpair (largest eigenvalue, phase-normalized unit eigenvector).
struct Eigenpair {
  double value = 0.0;
  CVector vector;
};

inline Eigenpair principal_eigenpair(const CMatrix& h) {
  const HermitianEigen eig = hermitian_eigen(h);
  return {eig.values[0], eig.vectors.col(0)};
}

/// Spectral norm of a Hermitian PSD matrix (its largest eigenvalue, floored at zero).
inline double spectral_norm_psd(const CMatrix& h) {
  if (h.size() == 0) return 0.0;
  return std::max(0.0, hermitian_eigen(h).values[0]);
}

/// Nuclear norm of a Hermitian PSD matrix, i.e. its trace.
inline double nuclear_norm_psd(const CMatrix& h) { return h.trace().real(); }

inline double min_eigenvalue(const CMatrix& h) {
  if (h.size() == 0) return 0.0;
  const HermitianEigen eig = hermitian_eigen(h);
  return eig.values[eig.values.size() - 1];
}

/// Hermitian quadratic form v^H A v, returned as a real number.
inline double quad_form(const CMatrix& a, const CVector& v) { return (v.adjoint() * a * v)(0, 0).real(); }

}  // namespace nisac
