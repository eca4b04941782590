#pragma once

// Primal-dual interior-point method for real cone quadratic programs
//
//   minimize    (1/2) x'Px + q'x + c0
//   subject to  G x + s = h,  A x = b,  s in K,
//
// where K is a product of a nonnegative orthant and real symmetric PSD cones.
// Search directions use Nesterov-Todd scaling with a Mehrotra
// predictor-corrector; the reduced KKT system is dense and factored by
// Cholesky, which suits the few hundred variables of the beamforming programs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nisac/linalg.hpp"

namespace nisac::conic::detail {

/// One stored entry of a symmetric coefficient matrix. Both (i,j) and (j,i)
/// are listed for off-diagonal positions.
struct SymEntry {
  int row;
  int col;
  double value;
};

/// A symmetric PSD cone block: (G x)_block = sum_a x_a F_a, slack h - G x.
struct PsdBlock {
  int dim = 0;
  std::vector<std::pair<int, std::vector<SymEntry>>> coeffs;  // (variable, F_a)
  Matrix h;
};

struct ConeQp {
  int n = 0;
  Matrix P;
  Vector q;
  double c0 = 0.0;
  Matrix Gl;  // orthant rows
  Vector hl;
  std::vector<PsdBlock> psd;
  Matrix A;
  Vector b;
};

enum class QpStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

struct QpOptions {
  int max_iters = 100;
  double abstol = 1e-8;
  double reltol = 1e-8;
  double feastol = 1e-8;
  bool verbose = false;
};

struct ConeVec {
  Vector l;
  std::vector<Matrix> s;
};

struct QpResult {
  QpStatus status = QpStatus::NumericalFailure;
  Vector x;
  Vector y;
  ConeVec s;
  ConeVec z;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

// ---------------------------------------------------------------------------
// Cone algebra. Inner product on a PSD block is the trace inner product.

inline double dot(const ConeVec& a, const ConeVec& b) {
  double r = a.l.dot(b.l);
  for (std::size_t k = 0; k < a.s.size(); ++k) r += a.s[k].cwiseProduct(b.s[k]).sum();
  return r;
}

inline double norm(const ConeVec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const ConeVec& x, ConeVec& y) {
  y.l += alpha * x.l;
  for (std::size_t k = 0; k < y.s.size(); ++k) y.s[k] += alpha * x.s[k];
}

inline ConeVec scaled(const ConeVec& a, double alpha) {
  ConeVec r = a;
  r.l *= alpha;
  for (auto& m : r.s) m *= alpha;
  return r;
}

/// min { t : x + t e in K }.
inline double max_step(const ConeVec& x) {
  double t = -std::numeric_limits<double>::infinity();
  if (x.l.size() > 0) t = std::max(t, -x.l.minCoeff());
  for (const auto& m : x.s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    t = std::max(t, -es.eigenvalues()[0]);
  }
  return t;
}

inline void add_identity(ConeVec& x, double alpha) {
  x.l.array() += alpha;
  for (auto& m : x.s) m.diagonal().array() += alpha;
}

/// Nesterov-Todd scaling W with W z = W^{-T} s = lambda.
struct Scaling {
  Vector d;                 // orthant: W = diag(d)
  std::vector<Matrix> r;    // PSD: W(u) = r' u r
  std::vector<Matrix> rti;  // r^{-T}
  std::vector<Matrix> omega;  // (W'W)^{-1}(u) = omega u omega
  Vector lam_l;
  std::vector<Vector> lam_s;  // lambda is diagonal on each PSD block

  static Scaling identity(const ConeQp& p) {
    Scaling w;
    w.d = Vector::Ones(p.Gl.rows());
    w.lam_l = w.d;
    for (const auto& b : p.psd) {
      w.r.push_back(Matrix::Identity(b.dim, b.dim));
      w.rti.push_back(Matrix::Identity(b.dim, b.dim));
      w.omega.push_back(Matrix::Identity(b.dim, b.dim));
      w.lam_s.push_back(Vector::Ones(b.dim));
    }
    return w;
  }

  static std::optional<Scaling> compute(const ConeVec& s, const ConeVec& z) {
    Scaling w;
    if ((s.l.array() <= 0.0).any() || (z.l.array() <= 0.0).any()) return std::nullopt;
    w.d = (s.l.array() / z.l.array()).sqrt();
    w.lam_l = (s.l.array() * z.l.array()).sqrt();
    for (std::size_t k = 0; k < s.s.size(); ++k) {
      Eigen::LLT<Matrix> ls(s.s[k]);
      Eigen::LLT<Matrix> lz(z.s[k]);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return std::nullopt;
      const Matrix Ls = ls.matrixL();
      const Matrix Lz = lz.matrixL();
      Eigen::JacobiSVD<Matrix> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vector lam = svd.singularValues();
      if (lam.minCoeff() <= 0.0) return std::nullopt;
      const Vector isq = lam.array().rsqrt();
      w.r.push_back(Ls * svd.matrixV() * isq.asDiagonal());
      w.rti.push_back(Lz * svd.matrixU() * isq.asDiagonal());
      w.omega.push_back(w.rti.back() * w.rti.back().transpose());
      w.lam_s.push_back(lam);
    }
    return w;
  }

  /// Moves the scaling to the pair whose scaled images are lambda + ds and
  /// lambda + dz. Working in scaled coordinates keeps the factorizations well
  /// conditioned as s and z approach the boundary.
  bool update(const ConeVec& ds, const ConeVec& dz) {
    const Vector sl = lam_l + ds.l;
    const Vector zl = lam_l + dz.l;
    if ((sl.array() <= 0.0).any() || (zl.array() <= 0.0).any()) return false;
    d = d.cwiseProduct((sl.array() / zl.array()).sqrt().matrix());
    lam_l = (sl.array() * zl.array()).sqrt();
    for (std::size_t k = 0; k < lam_s.size(); ++k) {
      Matrix st = ds.s[k];
      Matrix zt = dz.s[k];
      st.diagonal() += lam_s[k];
      zt.diagonal() += lam_s[k];
      Eigen::LLT<Matrix> ls(0.5 * (st + st.transpose()));
      Eigen::LLT<Matrix> lz(0.5 * (zt + zt.transpose()));
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
      const Matrix L1 = ls.matrixL();
      const Matrix L2 = lz.matrixL();
      Eigen::JacobiSVD<Matrix> svd(L2.transpose() * L1, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vector lam = svd.singularValues();
      if (!(lam.minCoeff() > 0.0)) return false;
      const Vector isq = lam.array().rsqrt();
      r[k] = r[k] * (L1 * svd.matrixV() * isq.asDiagonal());
      rti[k] = rti[k] * (L2 * svd.matrixU() * isq.asDiagonal());
      omega[k] = rti[k] * rti[k].transpose();
      lam_s[k] = lam;
    }
    return true;
  }

  // u -> W^{-1} u
  ConeVec apply_inverse(const ConeVec& u) const {
    ConeVec o;
    o.l = u.l.cwiseQuotient(d);
    for (std::size_t k = 0; k < u.s.size(); ++k) o.s.push_back(rti[k] * u.s[k] * rti[k].transpose());
    return o;
  }

  // u -> W u
  ConeVec apply(const ConeVec& u) const {
    ConeVec o;
    o.l = d.cwiseProduct(u.l);
    for (std::size_t k = 0; k < u.s.size(); ++k) o.s.push_back(r[k].transpose() * u.s[k] * r[k]);
    return o;
  }
  // u -> W' u
  ConeVec apply_transpose(const ConeVec& u) const {
    ConeVec o;
    o.l = d.cwiseProduct(u.l);
    for (std::size_t k = 0; k < u.s.size(); ++k) o.s.push_back(r[k] * u.s[k] * r[k].transpose());
    return o;
  }
  // u -> (W'W)^{-1} u
  ConeVec apply_inverse_gram(const ConeVec& u) const {
    ConeVec o;
    o.l = u.l.cwiseQuotient(d.cwiseProduct(d));
    for (std::size_t k = 0; k < u.s.size(); ++k) o.s.push_back(omega[k] * u.s[k] * omega[k]);
    return o;
  }

  ConeVec lambda() const {
    ConeVec o;
    o.l = lam_l;
    for (const auto& v : lam_s) o.s.push_back(v.asDiagonal());
    return o;
  }

  // lambda o u (Jordan product; symmetrized on PSD blocks)
  ConeVec lambda_product(const ConeVec& u) const {
    ConeVec o;
    o.l = lam_l.cwiseProduct(u.l);
    for (std::size_t k = 0; k < u.s.size(); ++k) {
      Matrix m = u.s[k];
      const auto& v = lam_s[k];
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) *= 0.5 * (v[i] + v[j]);
      o.s.push_back(std::move(m));
    }
    return o;
  }
  // u with lambda o u = v
  ConeVec lambda_divide(const ConeVec& v) const {
    ConeVec o;
    o.l = v.l.cwiseQuotient(lam_l);
    for (std::size_t k = 0; k < v.s.size(); ++k) {
      Matrix m = v.s[k];
      const auto& lam = lam_s[k];
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) *= 2.0 / (lam[i] + lam[j]);
      o.s.push_back(std::move(m));
    }
    return o;
  }

  /// Largest alpha with lambda + alpha * ds in K (infinity if unbounded).
  double step_to_boundary(const ConeVec& ds) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ds.l.size(); ++i)
      if (ds.l[i] < 0.0) alpha = std::min(alpha, -lam_l[i] / ds.l[i]);
    for (std::size_t k = 0; k < ds.s.size(); ++k) {
      const Vector isq = lam_s[k].array().rsqrt();
      const Matrix m = isq.asDiagonal() * ds.s[k] * isq.asDiagonal();
      Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
      const double mn = es.eigenvalues()[0];
      if (mn < 0.0) alpha = std::min(alpha, -1.0 / mn);
    }
    return alpha;
  }
};

// Jordan product of two arbitrary cone vectors (used for the Mehrotra term).
inline ConeVec jordan(const ConeVec& a, const ConeVec& b) {
  ConeVec o;
  o.l = a.l.cwiseProduct(b.l);
  for (std::size_t k = 0; k < a.s.size(); ++k) o.s.push_back(0.5 * (a.s[k] * b.s[k] + b.s[k] * a.s[k]));
  return o;
}

// ---------------------------------------------------------------------------
// Linear maps G and G'.

inline ConeVec apply_g(const ConeQp& p, const Vector& x) {
  ConeVec o;
  o.l = p.Gl * x;
  for (const auto& blk : p.psd) {
    Matrix m = Matrix::Zero(blk.dim, blk.dim);
    for (const auto& [var, entries] : blk.coeffs) {
      const double xv = x[var];
      if (xv == 0.0) continue;
      for (const auto& e : entries) m(e.row, e.col) += xv * e.value;
    }
    o.s.push_back(std::move(m));
  }
  return o;
}

inline Vector apply_gt(const ConeQp& p, const ConeVec& z) {
  Vector o = p.Gl.transpose() * z.l;
  for (std::size_t k = 0; k < p.psd.size(); ++k) {
    const auto& zk = z.s[k];
    for (const auto& [var, entries] : p.psd[k].coeffs) {
      double acc = 0.0;
      for (const auto& e : entries) acc += e.value * zk(e.row, e.col);
      o[var] += acc;
    }
  }
  return o;
}

inline ConeVec cone_h(const ConeQp& p) {
  ConeVec h;
  h.l = p.hl;
  for (const auto& b : p.psd) h.s.push_back(b.h);
  return h;
}

inline ConeVec cone_zero(const ConeQp& p) {
  ConeVec z;
  z.l = Vector::Zero(p.Gl.rows());
  for (const auto& b : p.psd) z.s.push_back(Matrix::Zero(b.dim, b.dim));
  return z;
}

inline int cone_degree(const ConeQp& p) {
  int m = static_cast<int>(p.Gl.rows());
  for (const auto& b : p.psd) m += b.dim;
  return m;
}

// ---------------------------------------------------------------------------
// Reduced KKT system
//   P ux + A' uy + G' uz = bx,   A ux = by,   G ux - W'W uz = bz.

class KktSolver {
 public:
  bool factor(const ConeQp& p, const Scaling& w) {
    p_ = &p;
    w_ = &w;
    Matrix H = p.P;
    if (p.Gl.rows() > 0) {
      const Vector dinv2 = w.d.cwiseProduct(w.d).cwiseInverse();
      H.noalias() += p.Gl.transpose() * dinv2.asDiagonal() * p.Gl;
    }
    for (std::size_t k = 0; k < p.psd.size(); ++k) add_psd_hessian(p.psd[k], w.omega[k], H);
    // Free variables that appear nowhere would make H singular; a tiny
    // diagonal shift keeps the factorization defined without moving solutions
    // that are determined by the data.
    // Retried with a larger shift when the first factorization breaks down.
    // The shift is relative to each diagonal entry: near the optimum the
    // diagonal spans many decades and a uniform shift swamps the small end.
    const Vector diag = H.diagonal().cwiseAbs().cwiseMax(1.0);
    bool factored = false;
    for (double shift : {1e-15, 1e-13, 1e-11}) {
      Matrix hs = H;
      hs.diagonal() += shift * diag;
      llt_.compute(hs);
      if (llt_.info() == Eigen::Success) {
        factored = true;
        break;
      }
    }
    if (!factored) return false;
    if (p.A.rows() > 0) {
      const Matrix hinv_at = llt_.solve(p.A.transpose());
      schur_.compute(p.A * hinv_at);
      if (schur_.info() != Eigen::Success) return false;
    }
    return true;
  }

  void solve(const Vector& bx, const Vector& by, const ConeVec& bz, Vector& ux, Vector& uy, ConeVec& uz) const {
    solve_once(bx, by, bz, ux, uy, uz);
    // Iterative refinement on the unreduced system while it keeps helping.
    const auto& p = *p_;
    const double scale = std::max({1.0, bx.norm(), by.size() ? by.norm() : 0.0, norm(bz)});
    double last = std::numeric_limits<double>::infinity();
    for (int round = 0; round < 10; ++round) {
      Vector rx = bx - p.P * ux - apply_gt(p, uz);
      Vector ry = by;
      if (p.A.rows() > 0) {
        rx -= p.A.transpose() * uy;
        ry -= p.A * ux;
      }
      ConeVec rz = bz;
      axpy(-1.0, apply_g(p, ux), rz);
      axpy(1.0, w_->apply_transpose(w_->apply(uz)), rz);
      const double r = std::sqrt(rx.squaredNorm() + ry.squaredNorm() + dot(rz, rz));
      if (!(r < 0.5 * last) || r <= 1e-15 * scale) break;
      last = r;
      Vector cx, cy;
      ConeVec cz;
      solve_once(rx, ry, rz, cx, cy, cz);
      ux += cx;
      if (p.A.rows() > 0) uy += cy;
      axpy(1.0, cz, uz);
    }
  }

 private:
  static void add_psd_hessian(const PsdBlock& blk, const Matrix& omega, Matrix& H) {
    // H[a,b] += tr(F_a omega F_b omega)
    const int nvars = static_cast<int>(blk.coeffs.size());
    Matrix m(blk.dim, blk.dim);
    for (int ia = 0; ia < nvars; ++ia) {
      const auto& [va, fa] = blk.coeffs[static_cast<std::size_t>(ia)];
      m.setZero();
      for (const auto& e : fa) m.noalias() += e.value * omega.col(e.row) * omega.row(e.col);
      for (int ib = 0; ib < nvars; ++ib) {
        const auto& [vb, fb] = blk.coeffs[static_cast<std::size_t>(ib)];
        double acc = 0.0;
        for (const auto& e : fb) acc += e.value * m(e.row, e.col);
        H(va, vb) += acc;
      }
    }
  }

  void solve_once(const Vector& bx, const Vector& by, const ConeVec& bz, Vector& ux, Vector& uy,
                  ConeVec& uz) const {
    const auto& p = *p_;
    const Vector rhs = bx + apply_gt(p, w_->apply_inverse_gram(bz));
    if (p.A.rows() > 0) {
      const Vector hr = llt_.solve(rhs);
      uy = schur_.solve(p.A * hr - by);
      ux = llt_.solve(rhs - p.A.transpose() * uy);
    } else {
      uy = Vector::Zero(0);
      ux = llt_.solve(rhs);
    }
    ConeVec t = apply_g(p, ux);
    axpy(-1.0, bz, t);
    uz = w_->apply_inverse_gram(t);
  }

  const ConeQp* p_ = nullptr;
  const Scaling* w_ = nullptr;
  Eigen::LLT<Matrix> llt_;
  Eigen::LLT<Matrix> schur_;
};

// ---------------------------------------------------------------------------

namespace impl {

inline QpResult solve_core(const ConeQp& p, const QpOptions& opt);

/// Phase-I problem: minimize t subject to G x + s = h + t e, t >= -1.
inline ConeQp phase_one(const ConeQp& p) {
  ConeQp f;
  const int n = p.n;
  f.n = n + 1;
  f.P = Matrix::Zero(f.n, f.n);
  f.P.diagonal().head(n).setConstant(1e-9);
  f.q = Vector::Zero(f.n);
  f.q[n] = 1.0;
  const Eigen::Index ml = p.Gl.rows();
  f.Gl = Matrix::Zero(ml + 1, f.n);
  f.Gl.topLeftCorner(ml, n) = p.Gl;
  f.Gl.block(0, n, ml, 1).setConstant(-1.0);
  f.Gl(ml, n) = -1.0;
  f.hl.resize(ml + 1);
  f.hl.head(ml) = p.hl;
  f.hl[ml] = 1.0;
  f.psd = p.psd;
  for (auto& blk : f.psd) {
    std::vector<SymEntry> eye;
    for (int i = 0; i < blk.dim; ++i) eye.push_back({i, i, -1.0});
    blk.coeffs.emplace_back(n, std::move(eye));
  }
  if (p.A.rows() > 0) {
    f.A = Matrix::Zero(p.A.rows(), f.n);
    f.A.leftCols(n) = p.A;
    f.b = p.b;
  } else {
    f.A.resize(0, f.n);
    f.b.resize(0);
  }
  return f;
}

/// Classifies a problem the main iteration failed on: Infeasible when the
/// phase-I optimum is clearly positive, NumericalFailure otherwise.
inline QpStatus classify_failure(const ConeQp& p, const QpOptions& opt) {
  QpOptions o = opt;
  o.abstol = o.reltol = o.feastol = 1e-9;
  const QpResult r = solve_core(phase_one(p), o);
  if (r.x.size() == p.n + 1 && r.status == QpStatus::Optimal && r.x[p.n] > 1e-6) return QpStatus::Infeasible;
  return QpStatus::NumericalFailure;
}

inline QpResult solve_core(const ConeQp& p, const QpOptions& opt) {
  QpResult res;
  const int m = cone_degree(p);
  const bool has_eq = p.A.rows() > 0;
  const ConeVec h = cone_h(p);

  const double resx0 = std::max(1.0, p.q.norm());
  const double resy0 = std::max(1.0, has_eq ? p.b.norm() : 0.0);
  const double resz0 = std::max(1.0, norm(h));

  Vector x, y;
  ConeVec s, z;
  {
    const Scaling w0 = Scaling::identity(p);
    KktSolver kkt;
    if (!kkt.factor(p, w0)) {
      res.status = QpStatus::NumericalFailure;
      return res;
    }
    kkt.solve(-p.q, has_eq ? p.b : Vector(Vector::Zero(0)), h, x, y, z);
    s = scaled(z, -1.0);
    if (m == 0) {
      // Unconstrained in the cone sense: the single Newton step is exact.
      res.status = QpStatus::Optimal;
      res.x = x;
      res.y = y;
      res.primal_objective = res.dual_objective = 0.5 * x.dot(p.P * x) + p.q.dot(x) + p.c0;
      return res;
    }
    const double ts = max_step(s);
    if (ts >= -1e-8 * std::max(norm(s), 1.0)) add_identity(s, 1.0 + ts);
    const double tz = max_step(z);
    if (tz >= -1e-8 * std::max(norm(z), 1.0)) add_identity(z, 1.0 + tz);
  }


  auto w0 = Scaling::compute(s, z);
  if (!w0) {
    res.status = QpStatus::NumericalFailure;
    return res;
  }
  Scaling w = std::move(*w0);

  // Best iterate meeting tolerances relaxed by this factor; returned when the
  // iteration stalls on round-off just short of full accuracy.
  constexpr double relaxed = 100.0;
  std::optional<QpResult> fallback;
  double fallback_merit = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= opt.max_iters; ++iter) {
    const Vector Px = p.P * x;
    Vector rx = Px + p.q + apply_gt(p, z);
    Vector ry = Vector::Zero(0);
    if (has_eq) {
      rx += p.A.transpose() * y;
      ry = p.A * x - p.b;
    }
    ConeVec rz = apply_g(p, x);
    axpy(1.0, s, rz);
    axpy(-1.0, h, rz);

    const double gap = dot(s, z);
    const double pcost = 0.5 * x.dot(Px) + p.q.dot(x) + p.c0;
    const double dcost = pcost + (has_eq ? y.dot(ry) : 0.0) + dot(z, rz) - gap;
    double relgap = std::numeric_limits<double>::infinity();
    if (dcost > 0.0) relgap = gap / dcost;
    if (pcost < 0.0) relgap = gap / -pcost;
    if (pcost > 0.0 && dcost <= 0.0) relgap = gap / pcost;
    if (dcost < 0.0 && pcost >= 0.0) relgap = gap / -dcost;
    const double pres = std::max(has_eq ? ry.norm() / resy0 : 0.0, norm(rz) / resz0);
    const double dres = rx.norm() / resx0;

    res.x = x;
    res.y = y;
    res.s = s;
    res.z = z;
    res.primal_objective = pcost;
    res.dual_objective = dcost;
    res.gap = gap;
    res.relative_gap = relgap;
    res.primal_residual = pres;
    res.dual_residual = dres;
    res.iterations = iter;

    if (opt.verbose)
      std::fprintf(stderr, "%3d % .9e % .9e  gap %.2e pres %.2e dres %.2e\n", iter, pcost, dcost, gap, pres, dres);

    if (pres <= opt.feastol && dres <= opt.feastol && (gap <= opt.abstol || relgap <= opt.reltol)) {
      res.status = QpStatus::Optimal;
      return res;
    }
    if (pres <= relaxed * opt.feastol && dres <= relaxed * opt.feastol &&
        (gap <= relaxed * opt.abstol || relgap <= relaxed * opt.reltol)) {
      const double merit = std::max({pres, dres, std::min(gap, relgap)});
      if (merit < fallback_merit) {
        fallback_merit = merit;
        fallback = res;
        fallback->status = QpStatus::Optimal;
      }
    }

    // Farkas certificate: z >= 0 with G'z + A'y = 0 and h'z + b'y < 0.
    {
      const double hz = dot(h, z) + (has_eq ? p.b.dot(y) : 0.0);
      if (hz < 0.0 && iter > 2) {
        Vector gz = apply_gt(p, z);
        if (has_eq) gz += p.A.transpose() * y;
        if (gz.norm() / (-hz) <= opt.feastol * resx0 / resz0 && norm(z) / (-hz) < 1e12) {
          res.status = QpStatus::Infeasible;
          return res;
        }
      }
    }
    if (iter == opt.max_iters) break;

    KktSolver kkt;
    if (!kkt.factor(p, w)) break;

    const ConeVec lam = w.lambda();
    const ConeVec lam_sq = w.lambda_product(lam);
    const double mu = gap / m;

    ConeVec dsa, dza;
    double sigma = 0.0;
    Vector dx, dy;
    ConeVec dz, ds_scaled, dz_scaled;
    bool ok = true;
    for (int pass = 0; pass < 2 && ok; ++pass) {
      ConeVec rhs_c = scaled(lam_sq, -1.0);
      if (pass == 1) {
        axpy(-1.0, jordan(dsa, dza), rhs_c);
        add_identity(rhs_c, sigma * mu);
      }
      const ConeVec v = w.lambda_divide(rhs_c);
      ConeVec bz = scaled(rz, -1.0);
      axpy(-1.0, w.apply_transpose(v), bz);
      kkt.solve(-rx, has_eq ? Vector(-ry) : Vector(Vector::Zero(0)), bz, dx, dy, dz);
      if (!dx.allFinite()) {
        ok = false;
        break;
      }
      dz_scaled = w.apply(dz);
      ds_scaled = v;
      axpy(-1.0, dz_scaled, ds_scaled);
      const double amax = std::min(w.step_to_boundary(ds_scaled), w.step_to_boundary(dz_scaled));
      if (pass == 0) {
        const double a = std::min(1.0, amax);
        const double t = 1.0 - a + a * a * dot(ds_scaled, dz_scaled) / gap;
        sigma = std::pow(std::clamp(t, 0.0, 1.0), 3.0);
        dsa = ds_scaled;
        dza = dz_scaled;
      } else {
        const double a = std::min(1.0, 0.99 * amax);
        if (!(a > 1e-14)) {
          ok = false;
          break;
        }
        x += a * dx;
        if (has_eq) y += a * dy;
        if (!w.update(scaled(ds_scaled, a), scaled(dz_scaled, a))) {
          ok = false;
          break;
        }
        const ConeVec lam_new = w.lambda();
        s = w.apply_transpose(lam_new);
        z = w.apply_inverse(lam_new);
      }
    }
    if (!ok) break;
  }
  if (fallback) return *fallback;
  res.status = QpStatus::NumericalFailure;
  return res;
}

}  // namespace impl

/// Solves the cone QP. Failures of the main iteration are classified with a
/// phase-I problem so that infeasible instances report Infeasible.
inline QpResult solve_cone_qp(const ConeQp& p, const QpOptions& opt = {}) {
  QpResult r = impl::solve_core(p, opt);
  if (r.status == QpStatus::NumericalFailure) {
    const QpStatus c = impl::classify_failure(p, opt);
    if (c == QpStatus::Infeasible) r.status = c;
  }
  return r;
}

}  // namespace nisac::conic::detail
