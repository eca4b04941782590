#pragma once

// Builders that turn each transmission scheme into a ConvexProgram: the NOMA
// semidefinite relaxation, its rank-penalized SCA subproblem, and the ideal,
// conventional and communication-only benchmarks.
//
// Programs are posed in units of the power budget (matrices and delta divided
// by P_t, objective divided by P_t^2) and each rate row is divided by
// P_t |h_k|^2. `extract_solution` converts back to watts.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nisac/array.hpp"
#include "nisac/conic.hpp"
#include "nisac/scenario.hpp"
#include "nisac/taylor.hpp"

namespace nisac {

enum class SchemeKind { NomaSdr, NomaSca, IdealIsac, ConventionalIsac, CommOnly };

inline constexpr SchemeKind kAllSchemes[] = {SchemeKind::NomaSca, SchemeKind::NomaSdr, SchemeKind::IdealIsac,
                                             SchemeKind::ConventionalIsac, SchemeKind::CommOnly};

inline const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::NomaSdr: return "noma_sdr";
    case SchemeKind::NomaSca: return "noma_sca";
    case SchemeKind::IdealIsac: return "ideal";
    case SchemeKind::ConventionalIsac: return "conventional";
    case SchemeKind::CommOnly: return "comm_only";
  }
  return "unknown";
}

inline std::optional<SchemeKind> parse_scheme(std::string_view s) {
  for (SchemeKind k : kAllSchemes)
    if (s == scheme_name(k)) return k;
  return std::nullopt;
}

/// Schemes solved by the penalty-based SCA (rank-one beams enforced).
inline bool uses_sca(SchemeKind k) { return k == SchemeKind::NomaSca || k == SchemeKind::CommOnly; }
inline bool is_noma(SchemeKind k) { return k == SchemeKind::NomaSca || k == SchemeKind::NomaSdr; }

/// Angular grid, steering vectors and desired pattern of a scenario.
struct SensingGeometry {
  AngularGrid grid;
  SteeringMatrix steering;
  DesiredPattern desired;

  static SensingGeometry from(const ScenarioConfig& c) {
    SensingGeometry g;
    g.grid = AngularGrid::uniform(c.grid_spacing);
    g.steering = steering_matrix(g.grid, c.n_antennas, c.antenna_spacing_ratio);
    g.desired = desired_pattern(g.grid, c.target_directions, c.beam_width);
    return g;
  }
};

/// Lifted decision variables. For NOMA `resid` is the residual sensing
/// covariance; for the ideal and conventional benchmarks it carries the whole
/// sensing covariance R_r; comm-only leaves it empty.
struct LiftedSolution {
  SchemeKind scheme = SchemeKind::NomaSdr;
  std::vector<CMatrix> comm;
  std::vector<CMatrix> sensing;
  std::optional<CMatrix> resid;
  double delta = 0.0;
  double objective_value = 0.0;
};

inline CMatrix assemble_covariance(const LiftedSolution& s, int n_antennas) {
  CMatrix r = CMatrix::Zero(n_antennas, n_antennas);
  for (const auto& w : s.comm) r += w;
  for (const auto& w : s.sensing) r += w;
  if (s.resid) r += *s.resid;
  return r;
}

inline CMatrix assemble_covariance(const LiftedSolution& s) {
  int n = 0;
  if (!s.comm.empty()) n = static_cast<int>(s.comm.front().rows());
  else if (!s.sensing.empty()) n = static_cast<int>(s.sensing.front().rows());
  else if (s.resid) n = static_cast<int>(s.resid->rows());
  return assemble_covariance(s, n);
}

/// A program plus the bookkeeping needed to read a LiftedSolution back out.
struct SchemeProgram {
  SchemeKind scheme = SchemeKind::NomaSdr;
  conic::ConvexProgram program;
  std::vector<int> comm_vars;
  std::vector<int> sensing_vars;
  int resid_var = -1;
  int delta_var = -1;
  double power_unit = 1.0;  // P_t
};

namespace detail {

enum class SensingModel {
  None,          // comm-only
  Noma,          // virtual beams removed by SIC, residual interferes
  Ideal,         // all sensing removed
  Conventional,  // all sensing interferes
};

inline SchemeProgram build_scheme(SchemeKind kind, SensingModel model, const ChannelSet& channels,
                                  const ScenarioConfig& config, const SensingGeometry& geo) {
  const int n = config.n_antennas;
  const int k_users = channels.n_users();
  if (k_users > 0 && channels.n_antennas() != n) throw Error("build: channel length does not match n_antennas");
  if (geo.steering.n_antennas() != n) throw Error("build: steering matrix does not match n_antennas");

  SchemeProgram sp;
  sp.scheme = kind;
  sp.power_unit = config.tx_power_watts();
  auto& p = sp.program;

  for (int k = 0; k < k_users; ++k) sp.comm_vars.push_back(p.add_psd("W_" + std::to_string(k + 1), n));
  if (model == SensingModel::Noma) {
    for (int i = 0; i < config.n_virtual_beams; ++i)
      sp.sensing_vars.push_back(p.add_psd("W_r_" + std::to_string(i + 1), n));
    sp.resid_var = p.add_psd("R_resid", n);
  } else if (model == SensingModel::Ideal || model == SensingModel::Conventional) {
    sp.resid_var = p.add_psd("R_r", n);
  }
  sp.delta_var = p.add_scalar("delta", 0.0);

  std::vector<int> all_vars = sp.comm_vars;
  all_vars.insert(all_vars.end(), sp.sensing_vars.begin(), sp.sensing_vars.end());
  if (sp.resid_var >= 0) all_vars.push_back(sp.resid_var);

  // Matching error: sum_l (delta phi_l - a_l^H R a_l)^2.
  for (Eigen::Index l = 0; l < geo.steering.size(); ++l) {
    const CVector a = geo.steering.column(l);
    const CMatrix aa = a * a.adjoint();
    conic::Affine e;
    e.add_scalar(sp.delta_var, geo.desired.values[l]);
    for (int v : all_vars) e.add_matrix(v, -aa);
    p.add_square(std::move(e));
  }

  const double pt = sp.power_unit;
  const double noise = config.noise_power_watts();
  for (int k = 0; k < k_users; ++k) {
    const double gain = channels.h[static_cast<std::size_t>(k)].squaredNorm();
    if (!(gain > 0.0)) throw Error("build: zero channel for user " + std::to_string(k + 1));
    const CVector hn = channels.h[static_cast<std::size_t>(k)] / std::sqrt(gain);
    const CMatrix hh = hn * hn.adjoint();
    const double gamma = config.sinr_threshold(k);

    // h^H W_k h - Gamma (inter-user + interfering sensing + noise) >= 0
    conic::Affine rate;
    rate.add_matrix(sp.comm_vars[static_cast<std::size_t>(k)], hh);
    for (int i = 0; i < k_users; ++i)
      if (i != k) rate.add_matrix(sp.comm_vars[static_cast<std::size_t>(i)], -gamma * hh);
    if (model == SensingModel::Noma || model == SensingModel::Conventional) rate.add_matrix(sp.resid_var, -gamma * hh);
    rate.add_constant(-gamma * noise / (pt * gain));
    p.add_greater_equal(std::move(rate), "rate_" + std::to_string(k + 1));

    // SIC: h^H W_{r,i} h >= h^H W_k h
    for (std::size_t i = 0; i < sp.sensing_vars.size(); ++i) {
      conic::Affine sic;
      sic.add_matrix(sp.sensing_vars[i], hh);
      sic.add_matrix(sp.comm_vars[static_cast<std::size_t>(k)], -hh);
      p.add_greater_equal(std::move(sic), "sic_" + std::to_string(k + 1) + "_" + std::to_string(i + 1));
    }
  }

  conic::Affine power;
  power.add_constant(1.0);
  for (int v : all_vars) power.add_trace(v, n, -1.0);
  if (config.full_power)
    p.add_equal(std::move(power), "power");
  else
    p.add_greater_equal(std::move(power), "power");
  return sp;
}

}  // namespace detail

/// Semidefinite relaxation of the NOMA design (rank-one constraints dropped).
inline SchemeProgram build_noma_sdr(const ChannelSet& ch, const ScenarioConfig& c, const SensingGeometry& g) {
  return detail::build_scheme(SchemeKind::NomaSdr, detail::SensingModel::Noma, ch, c, g);
}

/// Ideal sensing-interference cancellation: sensing never enters the rate.
inline SchemeProgram build_ideal_isac(const ChannelSet& ch, const ScenarioConfig& c, const SensingGeometry& g) {
  return detail::build_scheme(SchemeKind::IdealIsac, detail::SensingModel::Ideal, ch, c, g);
}

/// Conventional ISAC: the full sensing covariance interferes at every user.
inline SchemeProgram build_conventional_isac(const ChannelSet& ch, const ScenarioConfig& c,
                                             const SensingGeometry& g) {
  return detail::build_scheme(SchemeKind::ConventionalIsac, detail::SensingModel::Conventional, ch, c, g);
}

/// Communication signals only; R = sum_k W_k.
inline SchemeProgram build_comm_only(const ChannelSet& ch, const ScenarioConfig& c, const SensingGeometry& g) {
  return detail::build_scheme(SchemeKind::CommOnly, detail::SensingModel::None, ch, c, g);
}

/// The convex relaxation each scheme is solved (or initialized) from.
inline SchemeProgram build_relaxation(SchemeKind kind, const ChannelSet& ch, const ScenarioConfig& c,
                                      const SensingGeometry& g) {
  switch (kind) {
    case SchemeKind::NomaSdr:
    case SchemeKind::NomaSca: return build_noma_sdr(ch, c, g);
    case SchemeKind::IdealIsac: return build_ideal_isac(ch, c, g);
    case SchemeKind::ConventionalIsac: return build_conventional_isac(ch, c, g);
    case SchemeKind::CommOnly: return build_comm_only(ch, c, g);
  }
  throw Error("build_relaxation: unknown scheme");
}

/// Adds (1/rho) sum (||W||_* + T(W; taylor)) over every rank-penalized matrix.
/// The nuclear norm of a PSD variable is its trace, so the addition is affine.
inline void add_rank_penalty(SchemeProgram& sp, const TaylorPoint& taylor, double rho) {
  if (!(rho > 0.0)) throw Error("add_rank_penalty: rho must be > 0");
  if (taylor.comm.size() != sp.comm_vars.size() || taylor.sensing.size() != sp.sensing_vars.size())
    throw Error("add_rank_penalty: Taylor point does not match the program variables");
  const double pt = sp.power_unit;
  auto& lin = sp.program.linear;
  auto add = [&](int var, const TaylorEntry& e) {
    const TaylorBound b = taylor_upper_bound(e);
    const auto n = e.point.rows();
    // Original units: (1/rho) (tr W + Re tr(C W) + c0), W = pt W', objective / pt^2.
    lin.add_matrix(var, (CMatrix::Identity(n, n) + b.coeff) / (rho * pt));
    lin.add_constant(b.constant / (rho * pt * pt));
  };
  for (std::size_t k = 0; k < sp.comm_vars.size(); ++k) add(sp.comm_vars[k], taylor.comm[k]);
  for (std::size_t i = 0; i < sp.sensing_vars.size(); ++i) add(sp.sensing_vars[i], taylor.sensing[i]);
}

/// Convex QSDP solved at each SCA step: the relaxation of `kind` (NomaSca or
/// CommOnly) plus the majorized rank penalty.
inline SchemeProgram build_penalized_subproblem(SchemeKind kind, const ChannelSet& ch, const ScenarioConfig& c,
                                                const SensingGeometry& g, const TaylorPoint& taylor, double rho) {
  if (!uses_sca(kind)) throw Error("build_penalized_subproblem: scheme is not solved by SCA");
  SchemeProgram sp = build_relaxation(kind, ch, c, g);
  sp.scheme = kind;
  add_rank_penalty(sp, taylor, rho);
  return sp;
}

/// Reads the solver output back into watts.
inline LiftedSolution extract_solution(const SchemeProgram& sp, const conic::ConicSolution& sol) {
  if (sol.matrices.size() != sp.program.psd_vars.size()) throw Error("extract_solution: solution has no iterate");
  const double pt = sp.power_unit;
  LiftedSolution out;
  out.scheme = sp.scheme;
  for (int v : sp.comm_vars) out.comm.push_back(pt * sol.matrices[static_cast<std::size_t>(v)]);
  for (int v : sp.sensing_vars) out.sensing.push_back(pt * sol.matrices[static_cast<std::size_t>(v)]);
  if (sp.resid_var >= 0) out.resid = pt * sol.matrices[static_cast<std::size_t>(sp.resid_var)];
  out.delta = pt * sol.scalars[static_cast<std::size_t>(sp.delta_var)];
  out.objective_value = sol.objective * pt * pt;
  return out;
}

/// Taylor point at the rank-penalized matrices of a solution.
inline TaylorPoint make_taylor_point(const LiftedSolution& s) {
  TaylorPoint t;
  for (const auto& w : s.comm) t.comm.push_back(TaylorEntry::at(w));
  for (const auto& w : s.sensing) t.sensing.push_back(TaylorEntry::at(w));
  return t;
}

inline conic::SolveOptions solve_options(const SolverConfig& sc) {
  conic::SolveOptions o;
  o.tol = sc.solver_tol;
  return o;
}

}  // namespace nisac
