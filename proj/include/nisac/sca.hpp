#pragma once

// Penalty-based successive convex approximation. The inner loop re-solves the
// majorized subproblem at the latest iterate until the penalized objective
// stops improving; the outer loop shrinks rho until every rank-penalized
// matrix is rank one.

#include <chrono>
#include <cstdio>
#include <ostream>
#include <vector>

#include "nisac/schemes.hpp"

namespace nisac {

struct TraceRow {
  int outer_iter = 0;
  int inner_iter = 0;
  double rho = 0.0;
  double penalized_objective = 0.0;
  double matching_error = 0.0;
  double penalty_value = 0.0;
  double solve_seconds = 0.0;
};

struct IterationTrace {
  std::vector<TraceRow> rows;

  void write_csv(std::ostream& os) const {
    os << "outer_iter,inner_iter,rho,penalized_objective,matching_error,penalty_value,solve_seconds\n";
    char buf[256];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.12e,%.12e,%.12e,%.12e,%.6f\n", r.outer_iter, r.inner_iter, r.rho,
                    r.penalized_objective, r.matching_error, r.penalty_value, r.solve_seconds);
      os << buf;
    }
  }
};

enum class ScaStatus {
  Converged,     // penalty <= penalty_tol
  NotConverged,  // an iteration cap or the rho floor was hit first
  Degraded,      // a subproblem failed mid-run; the previous iterate is returned
  Infeasible,    // the relaxation used for initialization is infeasible
  NumericalFailure,
};

inline const char* to_string(ScaStatus s) {
  switch (s) {
    case ScaStatus::Converged: return "converged";
    case ScaStatus::NotConverged: return "not_converged";
    case ScaStatus::Degraded: return "degraded";
    case ScaStatus::Infeasible: return "infeasible";
    case ScaStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

struct ScaResult {
  ScaStatus status = ScaStatus::NumericalFailure;
  LiftedSolution solution;
  IterationTrace trace;
  double rho_final = 0.0;
  double penalty_final = 0.0;
  int outer_iterations = 0;
  int total_solves = 0;
  double init_seconds = 0.0;
};

/// sum over rank-penalized matrices of ||W||_* - ||W||_2.
inline double penalty_value(const LiftedSolution& s) {
  double acc = 0.0;
  for (const auto& w : s.comm) acc += rank_penalty(w);
  for (const auto& w : s.sensing) acc += rank_penalty(w);
  return acc;
}

/// Matching error of a lifted solution at its own delta.
inline double lifted_matching_error(const LiftedSolution& s, const SensingGeometry& g) {
  return matching_error(s.delta, assemble_covariance(s, static_cast<int>(g.steering.n_antennas())), g.desired,
                        g.steering);
}

struct ScaInit {
  conic::Status status = conic::Status::NumericalFailure;
  LiftedSolution solution;
  TaylorPoint taylor;
  double seconds = 0.0;
};

/// Solves the scheme's relaxation and takes its matrices as the first
/// expansion point.
inline ScaInit initialize(const ChannelSet& ch, const ScenarioConfig& c, const SolverConfig& sc,
                          const SensingGeometry& g, SchemeKind kind) {
  if (!uses_sca(kind)) throw Error("initialize: scheme is not solved by SCA");
  ScaInit out;
  SchemeProgram sp = build_relaxation(kind, ch, c, g);
  sp.scheme = kind;
  const conic::ConicSolution sol = conic::solve(sp.program, solve_options(sc));
  out.status = sol.status;
  out.seconds = sol.solve_seconds;
  if (sol.status != conic::Status::Optimal) return out;
  out.solution = extract_solution(sp, sol);
  out.taylor = make_taylor_point(out.solution);
  return out;
}

/// Runs the two-loop algorithm for NomaSca or CommOnly.
inline ScaResult run_algorithm1(const ChannelSet& ch, const ScenarioConfig& c, const SolverConfig& sc,
                                const SensingGeometry& g, SchemeKind kind) {
  if (!uses_sca(kind)) throw Error("run_algorithm1: scheme is not solved by SCA");
  constexpr double rho_floor = 1e-8;
  ScaResult res;

  const ScaInit init = initialize(ch, c, sc, g, kind);
  res.init_seconds = init.seconds;
  ++res.total_solves;
  if (init.status != conic::Status::Optimal) {
    res.status = init.status == conic::Status::Infeasible ? ScaStatus::Infeasible : ScaStatus::NumericalFailure;
    return res;
  }

  LiftedSolution current = init.solution;
  TaylorPoint taylor = init.taylor;
  double rho = sc.rho_init;
  const conic::SolveOptions opts = solve_options(sc);

  auto penalized = [&](const LiftedSolution& s, double r, double& me, double& pen) {
    me = lifted_matching_error(s, g);
    pen = penalty_value(s);
    return me + pen / r;
  };

  res.status = ScaStatus::NotConverged;
  for (int outer = 0; outer < sc.max_outer_iters; ++outer) {
    res.outer_iterations = outer + 1;
    double me = 0.0;
    double pen = 0.0;
    double f_prev = penalized(current, rho, me, pen);
    bool failed = false;
    for (int inner = 0; inner < sc.max_inner_iters; ++inner) {
      SchemeProgram sp = build_penalized_subproblem(kind, ch, c, g, taylor, rho);
      const conic::ConicSolution sol = conic::solve(sp.program, opts);
      ++res.total_solves;
      if (sol.status != conic::Status::Optimal) {
        failed = true;
        break;
      }
      current = extract_solution(sp, sol);
      taylor = make_taylor_point(current);
      const double f_new = penalized(current, rho, me, pen);
      res.trace.rows.push_back({outer, inner, rho, f_new, me, pen, sol.solve_seconds});
      const double reduction = (f_prev - f_new) / std::max(std::abs(f_prev), 1e-300);
      f_prev = f_new;
      if (reduction < sc.inner_tol) break;
    }
    if (failed) {
      res.status = ScaStatus::Degraded;
      break;
    }
    if (penalty_value(current) <= sc.penalty_tol) {
      res.status = ScaStatus::Converged;
      break;
    }
    if (rho <= rho_floor) break;
    rho = std::max(sc.rho_factor * rho, rho_floor);
  }

  res.solution = current;
  res.rho_final = rho;
  res.penalty_final = penalty_value(current);
  return res;
}

}  // namespace nisac
