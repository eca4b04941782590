#pragma once

// Monte Carlo sweeps over (scheme, R_min, realization) cells: channel draws
// with deterministic resampling, per-cell solve/recover/audit, aggregation,
// and the on-disk run directory layout.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nisac/evaluate.hpp"
#include "nisac/sca.hpp"

#ifndef NISAC_VERSION
#define NISAC_VERSION "0.0.0"
#endif

namespace nisac {

inline constexpr int kMaxResamples = 10;

struct SweepSpec {
  std::vector<double> r_min_values{1.5, 2.5, 3.5, 4.5};
  std::vector<SchemeKind> schemes{std::begin(kAllSchemes), std::end(kAllSchemes)};
  int n_realizations = 10;
  std::uint64_t base_seed = 42;
  bool shared_channels = true;
};

inline std::vector<ConfigIssue> validate_config(const SweepSpec& s) {
  std::vector<ConfigIssue> out;
  if (s.n_realizations < 1) out.push_back({"n_realizations", "n_realizations must be ≥ 1"});
  if (s.r_min_values.empty()) out.push_back({"r_min_values", "r_min_values must not be empty"});
  for (std::size_t i = 0; i < s.r_min_values.size(); ++i) {
    const double r = s.r_min_values[i];
    if (!std::isfinite(r) || r < 0.0) out.push_back({"r_min_values", "r_min_values must be finite and ≥ 0"});
    if (i > 0 && !(r > s.r_min_values[i - 1]))
      out.push_back({"r_min_values", "r_min_values must be strictly increasing"});
  }
  if (s.schemes.empty()) out.push_back({"schemes", "schemes must not be empty"});
  for (std::size_t i = 0; i < s.schemes.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (s.schemes[i] == s.schemes[j])
        out.push_back({"schemes", std::string("duplicate scheme ") + scheme_name(s.schemes[i])});
  return out;
}

inline SweepSpec sweep_from_json(const nlohmann::json& j) {
  const std::string where = "sweep";
  detail::reject_unknown_keys(j, {"r_min_values", "schemes", "n_realizations", "base_seed", "shared_channels"},
                              where);
  SweepSpec s;
  detail::read_field(j, "r_min_values", s.r_min_values, where);
  if (j.contains("schemes")) {
    std::vector<std::string> names;
    detail::read_field(j, "schemes", names, where);
    s.schemes.clear();
    for (const auto& n : names) {
      const auto k = parse_scheme(n);
      if (!k) throw Error(where + ".schemes: unknown scheme \"" + n + "\"");
      s.schemes.push_back(*k);
    }
  }
  detail::read_field(j, "n_realizations", s.n_realizations, where);
  detail::read_field(j, "base_seed", s.base_seed, where);
  detail::read_field(j, "shared_channels", s.shared_channels, where);
  return s;
}

inline nlohmann::json to_json(const SweepSpec& s) {
  nlohmann::json names = nlohmann::json::array();
  for (SchemeKind k : s.schemes) names.push_back(scheme_name(k));
  return {{"r_min_values", s.r_min_values},
          {"schemes", names},
          {"n_realizations", s.n_realizations},
          {"base_seed", s.base_seed},
          {"shared_channels", s.shared_channels}};
}

enum class CellStatus {
  Converged,
  Degraded,    // SCA hit a cap or lost a subproblem; values are usable
  Infeasible,  // still infeasible after the resample cap
  Failed,      // solver failure with no usable iterate
};

inline const char* to_string(CellStatus s) {
  switch (s) {
    case CellStatus::Converged: return "converged";
    case CellStatus::Degraded: return "degraded";
    case CellStatus::Infeasible: return "infeasible";
    case CellStatus::Failed: return "failed";
  }
  return "unknown";
}

/// Everything needed to re-audit or plot a cell without solving again.
struct CellArtifacts {
  ChannelSet channels;
  LiftedSolution lifted;
  BeamformerSet beamformers;
  double recovered_delta = 0.0;
  IterationTrace trace;  // SCA schemes only
  FeasibilityReport lifted_audit;
  FeasibilityReport recovered_audit;
  std::vector<RateReport> rates;  // at the recovered beamformers
};

struct CellResult {
  SchemeKind scheme = SchemeKind::NomaSdr;
  double r_min = 0.0;
  int realization = 0;
  CellStatus status = CellStatus::Failed;
  std::optional<double> matching_error_recovered;
  std::optional<double> matching_error_lifted;
  std::optional<double> objective;
  std::optional<double> penalty_final;
  int resamples = 0;
  double wall_seconds = 0.0;
  std::uint64_t channel_fingerprint = 0;
  std::optional<CellArtifacts> artifacts;

  bool has_values() const { return status == CellStatus::Converged || status == CellStatus::Degraded; }

  /// The error Fig.-3 style averages use: recovered for schemes that enforce
  /// rank one, lifted for the relaxations.
  std::optional<double> reported_error() const {
    return uses_sca(scheme) ? matching_error_recovered : matching_error_lifted;
  }
};

namespace detail {

/// Stream index of a channel draw. Shared draws depend on the realization
/// only; unshared draws also on the scheme and R_min slot. Resample attempts
/// take the next reserved block.
inline std::uint64_t channel_stream(int realization, int attempt, std::uint64_t tag) {
  return static_cast<std::uint64_t>(realization) + (static_cast<std::uint64_t>(attempt) << 32) + (tag << 40);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Solves one scheme on one channel draw. Infeasible is reported through the
/// status so the caller can resample.
inline CellResult solve_on(SchemeKind kind, const ChannelSet& ch, const ScenarioConfig& c, const SolverConfig& sc,
                           const SensingGeometry& g) {
  CellResult cell;
  cell.scheme = kind;
  cell.channel_fingerprint = ch.fingerprint();
  CellArtifacts art;
  art.channels = ch;

  if (uses_sca(kind)) {
    ScaResult r = run_algorithm1(ch, c, sc, g, kind);
    switch (r.status) {
      case ScaStatus::Infeasible: cell.status = CellStatus::Infeasible; return cell;
      case ScaStatus::NumericalFailure: cell.status = CellStatus::Failed; return cell;
      case ScaStatus::Converged: cell.status = CellStatus::Converged; break;
      case ScaStatus::NotConverged:
      case ScaStatus::Degraded: cell.status = CellStatus::Degraded; break;
    }
    art.lifted = std::move(r.solution);
    art.trace = std::move(r.trace);
  } else {
    SchemeProgram sp = build_relaxation(kind, ch, c, g);
    const conic::ConicSolution sol = conic::solve(sp.program, solve_options(sc));
    if (sol.status == conic::Status::Infeasible) {
      cell.status = CellStatus::Infeasible;
      return cell;
    }
    if (sol.status != conic::Status::Optimal) {
      cell.status = CellStatus::Failed;
      return cell;
    }
    cell.status = CellStatus::Converged;
    art.lifted = extract_solution(sp, sol);
  }

  const int n = c.n_antennas;
  cell.objective = art.lifted.objective_value;
  cell.matching_error_lifted = lifted_matching_error(art.lifted, g);
  cell.penalty_final = penalty_value(art.lifted);
  art.lifted_audit = feasibility_audit(ch, art.lifted, c, sc);
  try {
    art.beamformers = recover_beamformers(art.lifted, sc.rank_tol);
    const CMatrix r = art.beamformers.covariance(n);
    art.recovered_delta = optimal_scale(r, g.desired, g.steering);
    cell.matching_error_recovered = matching_error(art.recovered_delta, r, g.desired, g.steering);
    art.recovered_audit = feasibility_audit(ch, art.beamformers, c, sc);
    for (int k = 0; k < ch.n_users(); ++k) art.rates.push_back(achievable_rate(ch, art.beamformers, k, c.noise_power_watts()));
  } catch (const Error&) {
    // A beam matrix collapsed to zero; only the lifted values are meaningful.
    if (uses_sca(kind)) cell.status = CellStatus::Degraded;
  }
  cell.artifacts = std::move(art);
  return cell;
}

}  // namespace detail

/// Cells of one (R_min, realization) slot that share a channel draw. If any of
/// them is infeasible the draw is replaced for all of them, up to the cap.
inline std::vector<CellResult> run_group(const std::vector<SchemeKind>& schemes, double r_min, int realization,
                                         std::uint64_t seed, std::uint64_t tag, const ScenarioConfig& base,
                                         const SolverConfig& sc, const SensingGeometry& g) {
  const ScenarioConfig c = base.with_min_rate(r_min);
  std::vector<CellResult> cells;
  for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
    const ChannelSet ch = generate_channels(c, seed, detail::channel_stream(realization, attempt, tag));
    cells.clear();
    bool infeasible = false;
    for (SchemeKind k : schemes) {
      const auto tc = std::chrono::steady_clock::now();
      CellResult cell = detail::solve_on(k, ch, c, sc, g);
      cell.wall_seconds = detail::seconds_since(tc);
      infeasible = infeasible || cell.status == CellStatus::Infeasible;
      cells.push_back(std::move(cell));
    }
    for (auto& cell : cells) {
      cell.r_min = r_min;
      cell.realization = realization;
      cell.resamples = attempt;
    }
    if (!infeasible) break;
  }
  return cells;
}

/// Progress callback: cells finished so far and the total.
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

/// Runs every cell of the spec on a pool of `jobs` workers. The result is
/// ordered by (scheme as listed in the spec, R_min, realization) regardless of
/// scheduling.
inline std::vector<CellResult> run_sweep(const SweepSpec& spec, const ScenarioConfig& config,
                                         const SolverConfig& sc, int jobs = 1, const ProgressFn& progress = {}) {
  for (const auto& issue : validate_config(spec)) throw Error("sweep." + issue.field + ": " + issue.message);
  const SensingGeometry g = SensingGeometry::from(config);

  struct Work {
    std::vector<SchemeKind> schemes;
    std::size_t r_index;
    int realization;
    std::uint64_t tag;
  };
  std::vector<Work> work;
  for (std::size_t ri = 0; ri < spec.r_min_values.size(); ++ri)
    for (int real = 0; real < spec.n_realizations; ++real) {
      if (spec.shared_channels) {
        work.push_back({spec.schemes, ri, real, 0});
      } else {
        for (std::size_t si = 0; si < spec.schemes.size(); ++si) {
          const auto slot = static_cast<std::uint64_t>(spec.schemes[si]) * 4096 + ri;
          work.push_back({{spec.schemes[si]}, ri, real, 1 + slot});
        }
      }
    }

  std::vector<std::vector<CellResult>> done(work.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> finished{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      const Work& w = work[i];
      done[i] = run_group(w.schemes, spec.r_min_values[w.r_index], w.realization, spec.base_seed, w.tag, config, sc,
                          g);
      const std::size_t f = ++finished;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(f, work.size());
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<CellResult> out;
  for (auto& group : done)
    for (auto& c : group) out.push_back(std::move(c));
  auto scheme_pos = [&](SchemeKind k) {
    return std::find(spec.schemes.begin(), spec.schemes.end(), k) - spec.schemes.begin();
  };
  std::stable_sort(out.begin(), out.end(), [&](const CellResult& a, const CellResult& b) {
    const auto pa = scheme_pos(a.scheme);
    const auto pb = scheme_pos(b.scheme);
    if (pa != pb) return pa < pb;
    if (a.r_min != b.r_min) return a.r_min < b.r_min;
    return a.realization < b.realization;
  });
  return out;
}

struct AggregateRow {
  SchemeKind scheme = SchemeKind::NomaSdr;
  double r_min = 0.0;
  std::optional<double> mean;  // empty when no cell converged
  std::optional<double> std_dev;
  int converged = 0;
  int degraded = 0;
  int infeasible = 0;
  int failed = 0;
};

/// Mean and sample standard deviation of the reported error over converged
/// cells, per (scheme, R_min) in first-seen order.
inline std::vector<AggregateRow> aggregate(const std::vector<CellResult>& results) {
  if (results.empty()) throw Error("aggregate: no results");
  std::vector<AggregateRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& c : results) {
    std::size_t i = 0;
    while (i < rows.size() && !(rows[i].scheme == c.scheme && rows[i].r_min == c.r_min)) ++i;
    if (i == rows.size()) {
      AggregateRow r;
      r.scheme = c.scheme;
      r.r_min = c.r_min;
      rows.push_back(r);
      values.emplace_back();
    }
    switch (c.status) {
      case CellStatus::Converged:
        ++rows[i].converged;
        if (const auto e = c.reported_error()) values[i].push_back(*e);
        break;
      case CellStatus::Degraded: ++rows[i].degraded; break;
      case CellStatus::Infeasible: ++rows[i].infeasible; break;
      case CellStatus::Failed: ++rows[i].failed; break;
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    if (v.empty()) continue;
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].std_dev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return rows;
}

struct BeampatternSnapshot {
  AngularGrid grid;
  Vector desired;  // delta * phi
  Vector power;
  double delta = 0.0;
};

/// Achieved pattern of a cell next to its scaled target. Schemes that enforce
/// rank one are shown at their recovered beamformers.
inline BeampatternSnapshot beampattern_snapshot(const CellResult& cell, const SensingGeometry& g) {
  if (!cell.has_values() || !cell.artifacts) throw Error("beampattern_snapshot: cell has no solution");
  const CellArtifacts& a = *cell.artifacts;
  const int n = static_cast<int>(g.steering.n_antennas());
  BeampatternSnapshot s;
  s.grid = g.grid;
  CMatrix r;
  if (uses_sca(cell.scheme) && cell.matching_error_recovered) {
    r = a.beamformers.covariance(n);
    s.delta = a.recovered_delta;
  } else {
    r = assemble_covariance(a.lifted, n);
    s.delta = a.lifted.delta;
  }
  s.desired = s.delta * g.desired.values;
  s.power = beampattern(r, g.steering, 1e-6);
  return s;
}

// ---------------------------------------------------------------------------
// Output files

namespace detail {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); }

inline std::string fmt_rmin(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", r);
  return buf;
}

inline nlohmann::json matrix_json(const CMatrix& m) {
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json rr = nlohmann::json::array();
    nlohmann::json ii = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      rr.push_back(m(i, j).real());
      ii.push_back(m(i, j).imag());
    }
    re.push_back(rr);
    im.push_back(ii);
  }
  return {{"real", re}, {"imag", im}};
}

inline nlohmann::json vector_json(const CVector& v) {
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re.push_back(v[i].real());
    im.push_back(v[i].imag());
  }
  return {{"real", re}, {"imag", im}};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
  if (!os) throw Error("write failed: " + p.string());
}

}  // namespace detail

inline std::string results_csv(const std::vector<CellResult>& results) {
  std::ostringstream os;
  os << "scheme,r_min_bits,realization,matching_error_recovered,matching_error_lifted,penalty_final,status,"
        "resamples,wall_seconds\n";
  char secs[32];
  for (const auto& c : results) {
    std::snprintf(secs, sizeof secs, "%.3f", c.wall_seconds);
    os << scheme_name(c.scheme) << ',' << detail::fmt_rmin(c.r_min) << ',' << c.realization << ','
       << detail::fmt_opt(c.matching_error_recovered) << ',' << detail::fmt_opt(c.matching_error_lifted) << ','
       << detail::fmt_opt(c.penalty_final) << ',' << to_string(c.status) << ',' << c.resamples << ',' << secs
       << '\n';
  }
  return os.str();
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "scheme,r_min_bits,mean_matching_error,std_matching_error,converged,degraded,infeasible,failed\n";
  for (const auto& r : rows)
    os << scheme_name(r.scheme) << ',' << detail::fmt_rmin(r.r_min) << ',' << detail::fmt_opt(r.mean) << ','
       << detail::fmt_opt(r.std_dev) << ',' << r.converged << ',' << r.degraded << ',' << r.infeasible << ','
       << r.failed << '\n';
  return os.str();
}

inline std::string beampattern_csv(const BeampatternSnapshot& s) {
  std::ostringstream os;
  write_beampattern_csv(os, s.grid, s.desired, s.power);
  return os.str();
}

/// Portable record of one cell: matrices, beamformers, audits and rates.
inline nlohmann::json cell_json(const CellResult& c) {
  nlohmann::json j;
  j["scheme"] = scheme_name(c.scheme);
  j["r_min_bits"] = c.r_min;
  j["realization"] = c.realization;
  j["status"] = to_string(c.status);
  j["resamples"] = c.resamples;
  j["channel_fingerprint"] = c.channel_fingerprint;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["matching_error_recovered"] = opt(c.matching_error_recovered);
  j["matching_error_lifted"] = opt(c.matching_error_lifted);
  j["objective"] = opt(c.objective);
  j["penalty_final"] = opt(c.penalty_final);
  if (!c.artifacts) return j;
  const CellArtifacts& a = *c.artifacts;
  nlohmann::json ch = nlohmann::json::array();
  for (const auto& h : a.channels.h) ch.push_back(detail::vector_json(h));
  j["channels"] = ch;
  nlohmann::json lifted;
  lifted["delta"] = a.lifted.delta;
  lifted["W_comm"] = nlohmann::json::array();
  for (const auto& w : a.lifted.comm) lifted["W_comm"].push_back(detail::matrix_json(w));
  lifted["W_sensing"] = nlohmann::json::array();
  for (const auto& w : a.lifted.sensing) lifted["W_sensing"].push_back(detail::matrix_json(w));
  lifted["R_resid"] = a.lifted.resid ? detail::matrix_json(*a.lifted.resid) : nlohmann::json(nullptr);
  j["lifted"] = lifted;
  j["lifted_audit"] = to_json(a.lifted_audit);
  if (c.matching_error_recovered) {
    nlohmann::json bf;
    bf["delta"] = a.recovered_delta;
    bf["w_comm"] = nlohmann::json::array();
    for (const auto& w : a.beamformers.comm) bf["w_comm"].push_back(detail::vector_json(w));
    bf["w_sensing"] = nlohmann::json::array();
    for (const auto& w : a.beamformers.sensing) bf["w_sensing"].push_back(detail::vector_json(w));
    bf["approximate"] = a.beamformers.approximate;
    j["beamformers"] = bf;
    j["recovered_audit"] = to_json(a.recovered_audit);
    nlohmann::json rates = nlohmann::json::array();
    for (const auto& r : a.rates) rates.push_back(to_json(r));
    j["rates"] = rates;
  }
  return j;
}

inline nlohmann::json manifest_json(const std::string& command, const ScenarioConfig& c, const SolverConfig& sc,
                                    const SweepSpec& spec, const std::vector<std::string>& files) {
  nlohmann::json j;
  j["artifact_version"] = NISAC_VERSION;
  j["command"] = command;
  j["seed"] = spec.base_seed;
  j["scenario"] = to_json(c);
  j["solver"] = to_json(sc);
  j["sweep"] = to_json(spec);
  j["files"] = files;
  return j;
}

/// Writes results, aggregates, beampatterns (realization 0), SCA traces and
/// per-cell solutions under `dir`. Returns the file names written.
inline std::vector<std::string> write_run(const std::filesystem::path& dir, const std::vector<CellResult>& results,
                                          const SensingGeometry& g) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "solutions");
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_file(dir / name, text);
    files.push_back(name);
  };
  put("results.csv", results_csv(results));
  put("aggregate.csv", aggregate_csv(aggregate(results)));
  for (const auto& c : results) {
    const std::string key = std::string(scheme_name(c.scheme)) + "_" + detail::fmt_rmin(c.r_min);
    if (c.realization == 0 && c.has_values()) put("beampattern_" + key + ".csv", beampattern_csv(beampattern_snapshot(c, g)));
    if (c.artifacts && uses_sca(c.scheme)) {
      std::ostringstream os;
      c.artifacts->trace.write_csv(os);
      put("trace_" + key + "_" + std::to_string(c.realization) + ".csv", os.str());
    }
    put("solutions/" + key + "_" + std::to_string(c.realization) + ".json", cell_json(c).dump(1) + "\n");
  }
  return files;
}

}  // namespace nisac
