#pragma once

// Post-processing of solved programs: rank-one beamformer recovery, per-user
// rates under each scheme's interference model, SIC margins and a constraint
// audit that reports margins instead of repairing anything.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nisac/schemes.hpp"

namespace nisac {

/// Recovered rates may fall short of R_min by this much and still pass.
inline constexpr double kRateSlackBits = 1e-3;

/// lambda_2 / lambda_1 of a PSD matrix.
inline double rank_one_ratio(const CMatrix& w) {
  if (w.size() == 0 || w.cwiseAbs().maxCoeff() == 0.0) throw Error("rank_one_ratio: zero matrix");
  const HermitianEigen e = hermitian_eigen(w);
  if (!(e.values[0] > 0.0)) throw Error("rank_one_ratio: matrix has no positive eigenvalue");
  if (e.values.size() < 2) return 0.0;
  return std::max(0.0, e.values[1]) / e.values[0];
}

struct BeamformerSet {
  SchemeKind scheme = SchemeKind::NomaSdr;
  std::vector<CVector> comm;     // w_k
  std::vector<CVector> sensing;  // w_{r,i}
  std::optional<CMatrix> resid;  // passed through unchanged
  std::vector<double> comm_ratios;
  std::vector<double> sensing_ratios;
  bool approximate = false;  // some ratio above rank_tol

  CMatrix covariance(int n_antennas) const {
    CMatrix r = CMatrix::Zero(n_antennas, n_antennas);
    for (const auto& w : comm) r += w * w.adjoint();
    for (const auto& w : sensing) r += w * w.adjoint();
    if (resid) r += *resid;
    return r;
  }
};

/// w = sqrt(tr W) u_1 for every beam matrix: the principal direction carries
/// the matrix's whole power, so recovery never changes the radiated power.
/// For rank-one W this is the exact factor.
inline BeamformerSet recover_beamformers(const LiftedSolution& s, double rank_tol) {
  BeamformerSet bf;
  bf.scheme = s.scheme;
  bf.resid = s.resid;
  auto recover = [&](const CMatrix& w, const char* what, std::size_t idx, std::vector<CVector>& out,
                     std::vector<double>& ratios) {
    const HermitianEigen e = hermitian_eigen(w);
    if (!(e.values[0] > 0.0))
      throw Error(std::string("recover_beamformers: ") + what + " " + std::to_string(idx + 1) +
                  " has no positive eigenvalue");
    out.push_back(std::sqrt(std::max(e.values[0], w.trace().real())) * e.vectors.col(0));
    const double ratio = e.values.size() > 1 ? std::max(0.0, e.values[1]) / e.values[0] : 0.0;
    ratios.push_back(ratio);
    if (ratio > rank_tol) bf.approximate = true;
  };
  for (std::size_t k = 0; k < s.comm.size(); ++k) recover(s.comm[k], "W_k", k, bf.comm, bf.comm_ratios);
  for (std::size_t i = 0; i < s.sensing.size(); ++i) recover(s.sensing[i], "W_r", i, bf.sensing, bf.sensing_ratios);
  return bf;
}

/// One user's rate with its denominator split by origin (watts).
struct RateReport {
  double rate_bits = 0.0;
  double sinr_linear = 0.0;
  double signal = 0.0;
  double inter_user = 0.0;
  double sensing_removed = 0.0;   // cancelled before decoding
  double sensing_residual = 0.0;  // left in the denominator
  double noise = 0.0;
};

namespace detail {

/// Rate of user k from the received power of every component. `sensing`
/// holds the virtual beams, `resid` the remaining sensing covariance.
inline RateReport rate_from_powers(SchemeKind scheme, double signal, double inter_user, double sensing,
                                   double resid, double noise) {
  RateReport r;
  r.signal = signal;
  r.inter_user = inter_user;
  r.noise = noise;
  switch (scheme) {
    case SchemeKind::NomaSdr:
    case SchemeKind::NomaSca:
      r.sensing_removed = sensing;
      r.sensing_residual = resid;
      break;
    case SchemeKind::IdealIsac: r.sensing_removed = sensing + resid; break;
    case SchemeKind::ConventionalIsac: r.sensing_residual = sensing + resid; break;
    case SchemeKind::CommOnly: break;
  }
  r.sinr_linear = signal / (inter_user + r.sensing_residual + noise);
  r.rate_bits = std::log2(1.0 + r.sinr_linear);
  return r;
}

inline double received_power(const CVector& h, const CVector& w) { return std::norm(h.dot(w)); }
inline double received_power(const CVector& h, const CMatrix& w) { return quad_form(w, h); }

template <typename Beam>
RateReport rate_of(SchemeKind scheme, const CVector& h, int k, const std::vector<Beam>& comm,
                   const std::vector<Beam>& sensing, const std::optional<CMatrix>& resid, double noise) {
  const auto ku = static_cast<std::size_t>(k);
  double inter = 0.0;
  for (std::size_t i = 0; i < comm.size(); ++i)
    if (i != ku) inter += received_power(h, comm[i]);
  double sens = 0.0;
  for (const auto& w : sensing) sens += received_power(h, w);
  const double res = resid ? std::max(0.0, quad_form(*resid, h)) : 0.0;
  return rate_from_powers(scheme, received_power(h, comm[ku]), inter, sens, res, noise);
}

}  // namespace detail

/// Achievable rate of user k under the set's scheme.
inline RateReport achievable_rate(const ChannelSet& ch, const BeamformerSet& bf, int k, double noise_power) {
  if (k < 0 || k >= static_cast<int>(bf.comm.size()) || k >= ch.n_users())
    throw Error("achievable_rate: user index out of range");
  return detail::rate_of(bf.scheme, ch.h[static_cast<std::size_t>(k)], k, bf.comm, bf.sensing, bf.resid,
                         noise_power);
}

/// Same model evaluated on lifted matrices (h^H W h in place of |h^H w|^2).
inline RateReport lifted_rate(const ChannelSet& ch, const LiftedSolution& s, int k, double noise_power) {
  if (k < 0 || k >= static_cast<int>(s.comm.size()) || k >= ch.n_users())
    throw Error("lifted_rate: user index out of range");
  return detail::rate_of(s.scheme, ch.h[static_cast<std::size_t>(k)], k, s.comm, s.sensing, s.resid, noise_power);
}

struct SicMargin {
  int user = 0;
  int beam = 0;
  double margin_watts = 0.0;  // |h^H w_r|^2 - |h^H w_k|^2
  bool pass = false;
};

/// Margins of the power condition that lets user k decode and cancel each
/// virtual beam. Empty for schemes without virtual beams.
inline std::vector<SicMargin> sic_condition_check(const ChannelSet& ch, const BeamformerSet& bf, double tx_power,
                                                  double feas_tol) {
  std::vector<SicMargin> out;
  for (std::size_t k = 0; k < bf.comm.size() && k < ch.h.size(); ++k) {
    const CVector& h = ch.h[k];
    const double own = detail::received_power(h, bf.comm[k]);
    for (std::size_t i = 0; i < bf.sensing.size(); ++i) {
      SicMargin m;
      m.user = static_cast<int>(k);
      m.beam = static_cast<int>(i);
      m.margin_watts = detail::received_power(h, bf.sensing[i]) - own;
      m.pass = m.margin_watts >= -feas_tol * tx_power * h.squaredNorm();
      out.push_back(m);
    }
  }
  return out;
}

struct FeasibilityReport {
  bool lifted = false;  // audited with the linearized rate constraint
  std::vector<double> rate_bits;
  std::vector<double> sinr_linear;
  std::vector<double> rate_margins_bits;
  std::vector<double> rate_constraint_margins;  // lifted only: watts, as posed in the program
  std::vector<bool> rate_pass;
  std::vector<SicMargin> sic_margins;
  double power_margin_watts = 0.0;
  bool power_pass = false;
  std::vector<double> psd_min_eigs;
  bool psd_pass = true;
  std::vector<double> rank_ratios;  // one per rank-penalized matrix
  bool rank_pass = true;

  bool all_pass() const {
    bool ok = power_pass && psd_pass && rank_pass;
    for (bool b : rate_pass) ok = ok && b;
    for (const auto& m : sic_margins) ok = ok && m.pass;
    return ok;
  }
};

namespace detail {

inline void audit_common(FeasibilityReport& rep, const ScenarioConfig& c, const SolverConfig& sc,
                         const CMatrix& total) {
  const double pt = c.tx_power_watts();
  rep.power_margin_watts = pt - total.trace().real();
  rep.power_pass = rep.power_margin_watts >= -sc.feas_tol * pt;
  for (double e : rep.psd_min_eigs) rep.psd_pass = rep.psd_pass && e >= -sc.feas_tol * pt;
  for (double r : rep.rank_ratios) rep.rank_pass = rep.rank_pass && r <= sc.rank_tol;
}

inline double safe_ratio(const CMatrix& w) {
  if (w.size() == 0 || w.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  return rank_one_ratio(w);
}

}  // namespace detail

/// Audit of recovered beamformers with the true rate expression.
inline FeasibilityReport feasibility_audit(const ChannelSet& ch, const BeamformerSet& bf, const ScenarioConfig& c,
                                           const SolverConfig& sc) {
  FeasibilityReport rep;
  const double noise = c.noise_power_watts();
  for (int k = 0; k < static_cast<int>(bf.comm.size()); ++k) {
    const RateReport r = achievable_rate(ch, bf, k, noise);
    rep.rate_bits.push_back(r.rate_bits);
    rep.sinr_linear.push_back(r.sinr_linear);
    rep.rate_margins_bits.push_back(r.rate_bits - c.min_rate(k));
    rep.rate_pass.push_back(r.rate_bits >= c.min_rate(k) - kRateSlackBits);
  }
  if (is_noma(bf.scheme)) rep.sic_margins = sic_condition_check(ch, bf, c.tx_power_watts(), sc.feas_tol);
  if (bf.resid) rep.psd_min_eigs.push_back(min_eigenvalue(*bf.resid));
  rep.rank_ratios = bf.comm_ratios;
  rep.rank_ratios.insert(rep.rank_ratios.end(), bf.sensing_ratios.begin(), bf.sensing_ratios.end());
  detail::audit_common(rep, c, sc, bf.covariance(c.n_antennas));
  return rep;
}

/// Audit of a lifted solution with the constraints exactly as posed.
inline FeasibilityReport feasibility_audit(const ChannelSet& ch, const LiftedSolution& s, const ScenarioConfig& c,
                                           const SolverConfig& sc) {
  FeasibilityReport rep;
  rep.lifted = true;
  const double pt = c.tx_power_watts();
  const double noise = c.noise_power_watts();
  for (int k = 0; k < static_cast<int>(s.comm.size()); ++k) {
    const RateReport r = lifted_rate(ch, s, k, noise);
    const double gamma = c.sinr_threshold(k);
    const double margin = r.signal - gamma * (r.inter_user + r.sensing_residual + r.noise);
    const double gain = ch.h[static_cast<std::size_t>(k)].squaredNorm();
    rep.rate_bits.push_back(r.rate_bits);
    rep.sinr_linear.push_back(r.sinr_linear);
    rep.rate_margins_bits.push_back(r.rate_bits - c.min_rate(k));
    rep.rate_constraint_margins.push_back(margin);
    rep.rate_pass.push_back(margin >= -sc.feas_tol * pt * gain);
  }
  if (is_noma(s.scheme)) {
    for (std::size_t k = 0; k < s.comm.size() && k < ch.h.size(); ++k) {
      const CVector& h = ch.h[k];
      for (std::size_t i = 0; i < s.sensing.size(); ++i) {
        SicMargin m;
        m.user = static_cast<int>(k);
        m.beam = static_cast<int>(i);
        m.margin_watts = quad_form(s.sensing[i], h) - quad_form(s.comm[k], h);
        m.pass = m.margin_watts >= -sc.feas_tol * pt * h.squaredNorm();
        rep.sic_margins.push_back(m);
      }
    }
  }
  for (const auto& w : s.comm) rep.psd_min_eigs.push_back(min_eigenvalue(w));
  for (const auto& w : s.sensing) rep.psd_min_eigs.push_back(min_eigenvalue(w));
  if (s.resid) rep.psd_min_eigs.push_back(min_eigenvalue(*s.resid));
  // Rank-one is only demanded of the schemes that enforce it.
  if (uses_sca(s.scheme)) {
    for (const auto& w : s.comm) rep.rank_ratios.push_back(detail::safe_ratio(w));
    for (const auto& w : s.sensing) rep.rank_ratios.push_back(detail::safe_ratio(w));
  }
  detail::audit_common(rep, c, sc, assemble_covariance(s, c.n_antennas));
  return rep;
}

inline nlohmann::json to_json(const RateReport& r) {
  return {{"rate_bits", r.rate_bits},       {"sinr_linear", r.sinr_linear},
          {"signal", r.signal},             {"inter_user", r.inter_user},
          {"sensing_removed", r.sensing_removed}, {"sensing_residual", r.sensing_residual},
          {"noise", r.noise}};
}

inline nlohmann::json to_json(const FeasibilityReport& r) {
  nlohmann::json sic = nlohmann::json::array();
  for (const auto& m : r.sic_margins)
    sic.push_back({{"user", m.user}, {"beam", m.beam}, {"margin_watts", m.margin_watts}, {"pass", m.pass}});
  nlohmann::json j;
  j["lifted"] = r.lifted;
  j["rate_bits"] = r.rate_bits;
  j["sinr_linear"] = r.sinr_linear;
  j["rate_margins_bits"] = r.rate_margins_bits;
  if (r.lifted) j["rate_constraint_margins"] = r.rate_constraint_margins;
  j["rate_pass"] = r.rate_pass;
  j["sic_margins"] = sic;
  j["power_margin_watts"] = r.power_margin_watts;
  j["power_pass"] = r.power_pass;
  j["psd_min_eigs"] = r.psd_min_eigs;
  j["psd_pass"] = r.psd_pass;
  j["rank_ratios"] = r.rank_ratios;
  j["rank_pass"] = r.rank_pass;
  j["all_pass"] = r.all_pass();
  return j;
}

}  // namespace nisac
