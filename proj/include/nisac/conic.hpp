#pragma once

// Modeling layer for convex quadratic semidefinite programs over complex
// Hermitian PSD matrices and real scalars.
//
// Programs are written in complex form. `solve` realifies them: each N x N
// Hermitian variable becomes N^2 real parameters (diagonal, then real and
// imaginary parts of the strict upper triangle), and its PSD constraint
// becomes the real 2N x 2N block [[Re W, -Im W], [Im W, Re W]] >= 0.
//
// Factor-of-two bookkeeping under the embedding:
//   tr(embed(H))                 = 2 tr(H)
//   <embed(X), embed(Y)>_F       = 2 Re tr(X Y)
//   [Re a; Im a]' embed(R) [Re a; Im a] = a^H R a
// and every eigenvalue of H appears twice in embed(H).

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nisac/detail/cone_qp.hpp"
#include "nisac/linalg.hpp"

namespace nisac::conic {

/// [[Re H, -Im H], [Im H, Re H]].
inline Matrix embed_hermitian(const CMatrix& h, double tol = 1e-10) {
  if (!is_hermitian(h, tol)) throw Error("embed_hermitian: input is not Hermitian");
  const Eigen::Index n = h.rows();
  Matrix e(2 * n, 2 * n);
  e.topLeftCorner(n, n) = h.real();
  e.bottomRightCorner(n, n) = h.real();
  e.topRightCorner(n, n) = -h.imag();
  e.bottomLeftCorner(n, n) = h.imag();
  return e;
}

/// Inverse of embed_hermitian; averages the redundant blocks.
inline CMatrix extract_hermitian(const Matrix& e) {
  if (e.rows() != e.cols() || e.rows() % 2 != 0) throw Error("extract_hermitian: expected a 2N x 2N matrix");
  const Eigen::Index n = e.rows() / 2;
  const Matrix re = 0.5 * (e.topLeftCorner(n, n) + e.bottomRightCorner(n, n));
  const Matrix im = 0.5 * (e.bottomLeftCorner(n, n) - e.topRightCorner(n, n));
  CMatrix h(n, n);
  h.real() = re;
  h.imag() = im;
  return 0.5 * (h + h.adjoint());
}

struct PsdVariable {
  std::string name;
  int dim = 0;
};

struct ScalarVariable {
  std::string name;
  double lower = -std::numeric_limits<double>::infinity();
};

/// Re tr(coeff * W_var); coeff must be Hermitian.
struct MatrixTerm {
  int var = 0;
  CMatrix coeff;
};

struct ScalarTerm {
  int var = 0;
  double coeff = 0.0;
};

struct Affine {
  double constant = 0.0;
  std::vector<MatrixTerm> matrix_terms;
  std::vector<ScalarTerm> scalar_terms;

  Affine& add_constant(double c) {
    constant += c;
    return *this;
  }
  Affine& add_matrix(int var, CMatrix coeff) {
    matrix_terms.push_back({var, std::move(coeff)});
    return *this;
  }
  /// + scale * v^H W_var v
  Affine& add_quad(int var, const CVector& v, double scale = 1.0) {
    return add_matrix(var, scale * v * v.adjoint());
  }
  /// + scale * tr(W_var)
  Affine& add_trace(int var, int dim, double scale = 1.0) {
    return add_matrix(var, scale * CMatrix::Identity(dim, dim));
  }
  Affine& add_scalar(int var, double coeff) {
    scalar_terms.push_back({var, coeff});
    return *this;
  }
};

enum class Sense { GreaterEqual, Equal };  // expr >= 0, expr == 0

struct Constraint {
  Affine expr;
  Sense sense = Sense::GreaterEqual;
  std::string label;
};

/// minimize sum_t squares[t]^2 + linear
/// s.t. constraints, every PSD variable >= 0, scalar lower bounds.
/// Convex by construction: the quadratic part is a sum of squares.
struct ConvexProgram {
  std::vector<PsdVariable> psd_vars;
  std::vector<ScalarVariable> scalar_vars;
  std::vector<Affine> squares;
  Affine linear;
  std::vector<Constraint> constraints;

  int add_psd(std::string name, int dim) {
    psd_vars.push_back({std::move(name), dim});
    return static_cast<int>(psd_vars.size()) - 1;
  }
  int add_scalar(std::string name, double lower = -std::numeric_limits<double>::infinity()) {
    scalar_vars.push_back({std::move(name), lower});
    return static_cast<int>(scalar_vars.size()) - 1;
  }
  void add_square(Affine e) { squares.push_back(std::move(e)); }
  void add_greater_equal(Affine e, std::string label) {
    constraints.push_back({std::move(e), Sense::GreaterEqual, std::move(label)});
  }
  void add_equal(Affine e, std::string label) { constraints.push_back({std::move(e), Sense::Equal, std::move(label)}); }

  /// Throws if a term references an undeclared variable or a mis-sized coefficient.
  void check() const {
    auto check_expr = [&](const Affine& a) {
      for (const auto& t : a.matrix_terms) {
        if (t.var < 0 || t.var >= static_cast<int>(psd_vars.size()))
          throw Error("ConvexProgram: matrix term references an undeclared variable");
        const int d = psd_vars[static_cast<std::size_t>(t.var)].dim;
        if (t.coeff.rows() != d || t.coeff.cols() != d)
          throw Error("ConvexProgram: coefficient size does not match " + psd_vars[static_cast<std::size_t>(t.var)].name);
      }
      for (const auto& t : a.scalar_terms)
        if (t.var < 0 || t.var >= static_cast<int>(scalar_vars.size()))
          throw Error("ConvexProgram: scalar term references an undeclared variable");
    };
    for (const auto& a : squares) check_expr(a);
    check_expr(linear);
    for (const auto& c : constraints) check_expr(c.expr);
  }
};

enum class Status { Optimal, Infeasible, Unbounded, NumericalFailure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

struct ConicSolution {
  Status status = Status::NumericalFailure;
  std::vector<CMatrix> matrices;   // one per psd_var
  std::vector<double> scalars;     // one per scalar_var
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iters = 100;
  bool verbose = false;
};

namespace detail {

/// Real parameter layout of a Hermitian variable of dimension n.
struct HermitianLayout {
  int offset = 0;
  int dim = 0;

  int size() const { return dim * dim; }
  int diag(int i) const { return offset + i; }
  // strict upper-triangle pair (i < j) enumerated row-major
  int pair(int i, int j) const { return offset + dim + 2 * (i * dim - i * (i + 1) / 2 + (j - i - 1)); }
  int re(int i, int j) const { return pair(i, j); }
  int im(int i, int j) const { return pair(i, j) + 1; }
};

struct Layout {
  std::vector<HermitianLayout> herm;
  int scalar_offset = 0;
  int n = 0;
};

inline Layout make_layout(const ConvexProgram& p) {
  Layout l;
  int off = 0;
  for (const auto& v : p.psd_vars) {
    l.herm.push_back({off, v.dim});
    off += v.dim * v.dim;
  }
  l.scalar_offset = off;
  l.n = off + static_cast<int>(p.scalar_vars.size());
  return l;
}

/// Real row g with g'x = sum Re tr(C W) + sum c s (constant excluded).
inline Vector affine_row(const Affine& a, const Layout& l) {
  Vector g = Vector::Zero(l.n);
  for (const auto& t : a.matrix_terms) {
    const auto& hl = l.herm[static_cast<std::size_t>(t.var)];
    for (int i = 0; i < hl.dim; ++i) {
      g[hl.diag(i)] += t.coeff(i, i).real();
      for (int j = i + 1; j < hl.dim; ++j) {
        g[hl.re(i, j)] += 2.0 * t.coeff(i, j).real();
        g[hl.im(i, j)] += 2.0 * t.coeff(i, j).imag();
      }
    }
  }
  for (const auto& t : a.scalar_terms) g[l.scalar_offset + t.var] += t.coeff;
  return g;
}

inline CMatrix unpack_hermitian(const Vector& x, const HermitianLayout& hl) {
  CMatrix w(hl.dim, hl.dim);
  for (int i = 0; i < hl.dim; ++i) {
    w(i, i) = x[hl.diag(i)];
    for (int j = i + 1; j < hl.dim; ++j) {
      w(i, j) = Complex(x[hl.re(i, j)], x[hl.im(i, j)]);
      w(j, i) = std::conj(w(i, j));
    }
  }
  return w;
}

/// F_a = -embed(B_a) for each real parameter a of the Hermitian basis, so
/// that the slack h - G x equals embed(W).
inline conic::detail::PsdBlock embedded_block(const HermitianLayout& hl) {
  using conic::detail::SymEntry;
  const int n = hl.dim;
  conic::detail::PsdBlock blk;
  blk.dim = 2 * n;
  blk.h = Matrix::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) blk.coeffs.push_back({hl.diag(i), {{i, i, -1.0}, {n + i, n + i, -1.0}}});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      blk.coeffs.push_back({hl.re(i, j), {{i, j, -1.0}, {j, i, -1.0}, {n + i, n + j, -1.0}, {n + j, n + i, -1.0}}});
      blk.coeffs.push_back({hl.im(i, j), {{i, n + j, 1.0}, {n + j, i, 1.0}, {j, n + i, -1.0}, {n + i, j, -1.0}}});
    }
  }
  return blk;
}

struct Realified {
  conic::detail::ConeQp qp;
  Layout layout;
  bool trivially_infeasible = false;
  double objective_scale = 1.0;  // qp objective = scale * program objective
};

inline Realified realify(const ConvexProgram& p, double tol) {
  p.check();
  Realified r;
  r.layout = make_layout(p);
  const Layout& l = r.layout;
  auto& qp = r.qp;
  qp.n = l.n;

  // Sum of squares: P = 2 S'S, q = 2 S'c + linear, c0 = |c|^2 + linear constant.
  Matrix S(static_cast<Eigen::Index>(p.squares.size()), l.n);
  Vector c(static_cast<Eigen::Index>(p.squares.size()));
  for (std::size_t t = 0; t < p.squares.size(); ++t) {
    S.row(static_cast<Eigen::Index>(t)) = affine_row(p.squares[t], l).transpose();
    c[static_cast<Eigen::Index>(t)] = p.squares[t].constant;
  }
  qp.P = Matrix::Zero(l.n, l.n);
  if (S.rows() > 0) qp.P.noalias() = 2.0 * S.transpose() * S;
  qp.q = affine_row(p.linear, l);
  if (S.rows() > 0) qp.q.noalias() += 2.0 * S.transpose() * c;
  qp.c0 = c.squaredNorm() + p.linear.constant;
  // Large linear costs against a small quadratic part stall the interior
  // point method, so the objective is brought to unit linear scale.
  const double qmax = qp.q.size() > 0 ? qp.q.cwiseAbs().maxCoeff() : 0.0;
  if (qmax > 1.0) {
    r.objective_scale = 1.0 / qmax;
    qp.P *= r.objective_scale;
    qp.q *= r.objective_scale;
    qp.c0 *= r.objective_scale;
  }

  // Rows are normalized; feasibility is unchanged and the KKT system is
  // better conditioned when constraint data spans many decades.
  std::vector<Vector> gl_rows, a_rows;
  std::vector<double> hl_vals, b_vals;
  for (const auto& con : p.constraints) {
    const Vector g = affine_row(con.expr, l);
    const double nrm = g.norm();
    if (nrm == 0.0) {
      const double v = con.expr.constant;
      if ((con.sense == Sense::GreaterEqual && v < -tol) || (con.sense == Sense::Equal && std::abs(v) > tol))
        r.trivially_infeasible = true;
      continue;
    }
    if (con.sense == Sense::GreaterEqual) {
      gl_rows.push_back(-g / nrm);
      hl_vals.push_back(con.expr.constant / nrm);
    } else {
      a_rows.push_back(g / nrm);
      b_vals.push_back(-con.expr.constant / nrm);
    }
  }
  for (std::size_t i = 0; i < p.scalar_vars.size(); ++i) {
    const double lb = p.scalar_vars[i].lower;
    if (!std::isfinite(lb)) continue;
    Vector g = Vector::Zero(l.n);
    g[l.scalar_offset + static_cast<int>(i)] = -1.0;
    gl_rows.push_back(g);
    hl_vals.push_back(-lb);
  }
  qp.Gl.resize(static_cast<Eigen::Index>(gl_rows.size()), l.n);
  qp.hl.resize(static_cast<Eigen::Index>(gl_rows.size()));
  for (std::size_t i = 0; i < gl_rows.size(); ++i) {
    qp.Gl.row(static_cast<Eigen::Index>(i)) = gl_rows[i].transpose();
    qp.hl[static_cast<Eigen::Index>(i)] = hl_vals[i];
  }
  qp.A.resize(static_cast<Eigen::Index>(a_rows.size()), l.n);
  qp.b.resize(static_cast<Eigen::Index>(a_rows.size()));
  for (std::size_t i = 0; i < a_rows.size(); ++i) {
    qp.A.row(static_cast<Eigen::Index>(i)) = a_rows[i].transpose();
    qp.b[static_cast<Eigen::Index>(i)] = b_vals[i];
  }
  for (const auto& hl : l.herm) qp.psd.push_back(embedded_block(hl));
  return r;
}

}  // namespace detail

/// Solves `program` to tolerance `opt.tol` (absolute gap after scaling the
/// objective to unit linear coefficients, relative gap, relative
/// primal and dual residuals).
inline ConicSolution solve(const ConvexProgram& program, const SolveOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ConicSolution out;
  const detail::Realified r = detail::realify(program, opt.tol);
  if (r.trivially_infeasible) {
    out.status = Status::Infeasible;
    return out;
  }
  conic::detail::QpOptions qo;
  qo.max_iters = opt.max_iters;
  qo.abstol = opt.tol;
  qo.reltol = opt.tol;
  qo.feastol = opt.tol;
  qo.verbose = opt.verbose;
  const conic::detail::QpResult res = conic::detail::solve_cone_qp(r.qp, qo);

  switch (res.status) {
    case conic::detail::QpStatus::Optimal: out.status = Status::Optimal; break;
    case conic::detail::QpStatus::Infeasible: out.status = Status::Infeasible; break;
    case conic::detail::QpStatus::Unbounded: out.status = Status::Unbounded; break;
    case conic::detail::QpStatus::NumericalFailure: out.status = Status::NumericalFailure; break;
  }
  out.objective = res.primal_objective / r.objective_scale;
  out.primal_residual = res.primal_residual;
  out.dual_residual = res.dual_residual;
  out.gap = res.gap;
  out.relative_gap = res.relative_gap;
  out.iterations = res.iterations;
  if (res.x.size() == r.layout.n) {
    for (const auto& hl : r.layout.herm) out.matrices.push_back(detail::unpack_hermitian(res.x, hl));
    for (std::size_t i = 0; i < program.scalar_vars.size(); ++i)
      out.scalars.push_back(res.x[r.layout.scalar_offset + static_cast<int>(i)]);
  }
  out.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Value of an affine expression at given variable values.
inline double evaluate(const Affine& a, const std::vector<CMatrix>& mats, const std::vector<double>& scalars) {
  double v = a.constant;
  for (const auto& t : a.matrix_terms)
    v += (t.coeff * mats.at(static_cast<std::size_t>(t.var))).trace().real();
  for (const auto& t : a.scalar_terms) v += t.coeff * scalars.at(static_cast<std::size_t>(t.var));
  return v;
}

inline double objective_value(const ConvexProgram& p, const std::vector<CMatrix>& mats,
                              const std::vector<double>& scalars) {
  double v = evaluate(p.linear, mats, scalars);
  for (const auto& s : p.squares) {
    const double e = evaluate(s, mats, scalars);
    v += e * e;
  }
  return v;
}

// --- debug dump -------------------------------------------------------------

namespace detail {

inline nlohmann::json affine_json(const Affine& a, const ConvexProgram& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : a.matrix_terms) {
    nlohmann::json entries = nlohmann::json::array();
    for (Eigen::Index i = 0; i < t.coeff.rows(); ++i)
      for (Eigen::Index j = 0; j < t.coeff.cols(); ++j)
        if (t.coeff(i, j) != Complex(0.0, 0.0))
          entries.push_back({i, j, t.coeff(i, j).real(), t.coeff(i, j).imag()});
    terms.push_back({{"var", p.psd_vars[static_cast<std::size_t>(t.var)].name}, {"entries", entries}});
  }
  nlohmann::json scal = nlohmann::json::array();
  for (const auto& t : a.scalar_terms)
    scal.push_back({{"var", p.scalar_vars[static_cast<std::size_t>(t.var)].name}, {"coeff", t.coeff}});
  return {{"constant", a.constant}, {"matrix_terms", terms}, {"scalar_terms", scal}};
}

}  // namespace detail

/// Solver-independent description: variables, and every coefficient matrix in
/// coordinate form [row, col, re, im].
inline nlohmann::json to_json(const ConvexProgram& p) {
  nlohmann::json j;
  for (const auto& v : p.psd_vars) j["psd_vars"].push_back({{"name", v.name}, {"dim", v.dim}});
  for (const auto& v : p.scalar_vars)
    j["scalar_vars"].push_back(
        {{"name", v.name}, {"lower", std::isfinite(v.lower) ? nlohmann::json(v.lower) : nlohmann::json(nullptr)}});
  j["objective"]["squares"] = nlohmann::json::array();
  for (const auto& s : p.squares) j["objective"]["squares"].push_back(detail::affine_json(s, p));
  j["objective"]["linear"] = detail::affine_json(p.linear, p);
  j["constraints"] = nlohmann::json::array();
  for (const auto& c : p.constraints)
    j["constraints"].push_back({{"label", c.label},
                                {"sense", c.sense == Sense::Equal ? "eq" : "ge"},
                                {"expr", detail::affine_json(c.expr, p)}});
  return j;
}

}  // namespace nisac::conic
