#pragma once

// First-order majorizer of -||W||_2 around a PSD expansion point, and the
// nuclear-minus-spectral rank penalty it is used to convexify.

#include <vector>

#include "nisac/linalg.hpp"

namespace nisac {

/// Expansion point of one matrix variable.
struct TaylorEntry {
  CMatrix point;
  CVector u_max;       // unit principal eigenvector, phase-normalized
  double lambda_max = 0.0;

  static TaylorEntry at(const CMatrix& w) {
    const Eigenpair e = principal_eigenpair(w);
    return {w, e.vector, std::max(0.0, e.value)};
  }
};

struct TaylorPoint {
  std::vector<TaylorEntry> comm;     // one per W_k
  std::vector<TaylorEntry> sensing;  // one per W_{r,i}
};

/// T(W) = -||W0||_2 - tr(u u^H (W - W0)), stored as Re tr(coeff W) + constant.
struct TaylorBound {
  CMatrix coeff;
  double constant = 0.0;

  double value(const CMatrix& w) const { return (coeff * w).trace().real() + constant; }
};

/// Affine upper bound of -||W||_2 that is tight at the expansion point.
inline TaylorBound taylor_upper_bound(const TaylorEntry& e) {
  TaylorBound b;
  b.coeff = -e.u_max * e.u_max.adjoint();
  b.constant = -e.lambda_max + quad_form(e.point, e.u_max);
  return b;
}

inline double taylor_upper_bound(const CMatrix& w, const TaylorEntry& e) { return taylor_upper_bound(e).value(w); }

/// ||W||_* - ||W||_2 for a PSD matrix; zero exactly when rank(W) <= 1.
inline double rank_penalty(const CMatrix& w) {
  if (w.size() == 0) return 0.0;
  const HermitianEigen eig = hermitian_eigen(w);
  // Sum of the non-principal eigenvalues, clipped at zero so solver round-off
  // on PSD inputs cannot make the penalty negative.
  double acc = 0.0;
  for (Eigen::Index i = 1; i < eig.values.size(); ++i) acc += std::max(0.0, eig.values[i]);
  return acc;
}

}  // namespace nisac
