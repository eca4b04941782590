#pragma once

// Scenario and solver configuration, unit conversion, and reproducible
// Rayleigh channel draws for Monte Carlo experiments.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nisac/linalg.hpp"

namespace nisac {

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Physical scenario. Powers are kept in dBm as configured; the accessors hand
/// out linear watts, which is what every computation uses.
struct ScenarioConfig {
  int n_antennas = 8;
  int n_users = 5;
  int n_virtual_beams = 1;
  std::vector<double> target_directions{-60.0, 0.0, 60.0};  // degrees
  double beam_width = 10.0;                                  // degrees
  double grid_spacing = 1.0;                                 // degrees
  double tx_power_dbm = 20.0;
  double noise_power_dbm = -80.0;
  double pathloss_db = 80.0;
  std::vector<double> min_rate_bits{4.5};  // one entry applies to every user
  double antenna_spacing_ratio = 0.5;
  // true: the whole budget is radiated, tr(R) = P_t. false: tr(R) <= P_t.
  bool full_power = true;

  double tx_power_watts() const { return dbm_to_watts(tx_power_dbm); }
  double noise_power_watts() const { return dbm_to_watts(noise_power_dbm); }

  /// R_min of user k; a single configured value is shared by all users.
  double min_rate(int k) const {
    if (min_rate_bits.size() == 1) return min_rate_bits.front();
    return min_rate_bits.at(static_cast<std::size_t>(k));
  }
  /// SINR threshold 2^R_min - 1 of user k.
  double sinr_threshold(int k) const { return std::exp2(min_rate(k)) - 1.0; }

  ScenarioConfig with_min_rate(double r_min) const {
    ScenarioConfig c = *this;
    c.min_rate_bits = {r_min};
    return c;
  }
};

struct SolverConfig {
  double rho_init = 100.0;
  double rho_factor = 0.2;
  double penalty_tol = 1e-4;
  double inner_tol = 1e-2;
  int max_inner_iters = 30;
  int max_outer_iters = 20;
  double rank_tol = 1e-3;
  double feas_tol = 1e-6;
  double solver_tol = 1e-8;
};

/// One Monte Carlo draw: K downlink channels of length N, pathloss included.
struct ChannelSet {
  std::vector<CVector> h;
  std::uint64_t realization_index = 0;
  std::uint64_t seed = 0;

  int n_users() const { return static_cast<int>(h.size()); }
  int n_antennas() const { return h.empty() ? 0 : static_cast<int>(h.front().size()); }

  bool operator==(const ChannelSet& o) const {
    if (h.size() != o.h.size() || seed != o.seed || realization_index != o.realization_index) return false;
    for (std::size_t k = 0; k < h.size(); ++k)
      if (h[k].size() != o.h[k].size() || h[k] != o.h[k]) return false;
    return true;
  }

  /// FNV-1a over the raw channel bytes; equal for bit-identical draws.
  std::uint64_t fingerprint() const {
    std::uint64_t acc = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        acc ^= b[i];
        acc *= 1099511628211ULL;
      }
    };
    for (const auto& v : h) mix(v.data(), sizeof(Complex) * static_cast<std::size_t>(v.size()));
    return acc;
  }
};

struct ConfigIssue {
  std::string field;
  std::string message;
};

inline std::vector<ConfigIssue> validate_config(const ScenarioConfig& c) {
  std::vector<ConfigIssue> out;
  auto bad = [&](std::string field, std::string msg) { out.push_back({std::move(field), std::move(msg)}); };
  if (c.n_antennas < 1) bad("n_antennas", "n_antennas must be ≥ 1");
  if (c.n_users < 1) bad("n_users", "n_users must be ≥ 1");
  if (c.n_virtual_beams < 1) bad("n_virtual_beams", "n_virtual_beams must be ≥ 1");
  for (double phi : c.target_directions)
    if (!std::isfinite(phi) || phi <= -90.0 || phi >= 90.0)
      bad("target_directions", "target direction " + std::to_string(phi) + " not strictly inside (-90, 90)");
  if (!(c.beam_width > 0.0) || !std::isfinite(c.beam_width)) bad("beam_width", "beam_width must be > 0");
  if (!(c.grid_spacing > 0.0) || !std::isfinite(c.grid_spacing)) bad("grid_spacing", "grid_spacing must be > 0");
  if (!std::isfinite(c.tx_power_dbm)) bad("tx_power_dbm", "tx_power_dbm must be finite");
  if (!std::isfinite(c.noise_power_dbm)) bad("noise_power_dbm", "noise_power_dbm must be finite");
  if (!std::isfinite(c.pathloss_db)) bad("pathloss_db", "pathloss_db must be finite");
  if (c.min_rate_bits.empty()) {
    bad("min_rate_bits", "min_rate_bits must not be empty");
  } else if (c.min_rate_bits.size() != 1 && static_cast<int>(c.min_rate_bits.size()) != c.n_users) {
    bad("min_rate_bits", "min_rate_bits must hold one value or one per user");
  }
  for (double r : c.min_rate_bits)
    if (!std::isfinite(r) || r < 0.0) bad("min_rate_bits", "min_rate_bits must be finite and ≥ 0");
  if (!(c.antenna_spacing_ratio > 0.0) || !std::isfinite(c.antenna_spacing_ratio))
    bad("antenna_spacing_ratio", "antenna_spacing_ratio must be > 0");
  return out;
}

inline std::vector<ConfigIssue> validate_config(const SolverConfig& c) {
  std::vector<ConfigIssue> out;
  auto bad = [&](std::string field, std::string msg) { out.push_back({std::move(field), std::move(msg)}); };
  if (!(c.rho_init > 0.0)) bad("rho_init", "rho_init must be > 0");
  if (!(c.rho_factor > 0.0 && c.rho_factor < 1.0)) bad("rho_factor", "rho_factor out of (0,1)");
  if (!(c.penalty_tol >= 0.0)) bad("penalty_tol", "penalty_tol must be ≥ 0");
  if (!(c.inner_tol > 0.0)) bad("inner_tol", "inner_tol must be > 0");
  if (c.max_inner_iters < 1) bad("max_inner_iters", "max_inner_iters must be ≥ 1");
  if (c.max_outer_iters < 1) bad("max_outer_iters", "max_outer_iters must be ≥ 1");
  if (!(c.rank_tol > 0.0)) bad("rank_tol", "rank_tol must be > 0");
  if (!(c.feas_tol > 0.0)) bad("feas_tol", "feas_tol must be > 0");
  if (!(c.solver_tol > 0.0)) bad("solver_tol", "solver_tol must be > 0");
  return out;
}

namespace detail {

// 53-bit uniform in (0, 1]; fully specified so draws are portable across
// standard libraries (std::normal_distribution is not).
inline double uniform_open0(std::mt19937_64& g) { return (static_cast<double>(g() >> 11) + 1.0) * 0x1.0p-53; }

inline std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// i.i.d. CN(0, 10^(-pathloss/10)) entries. A pure function of (N, K, pathloss,
/// seed, realization_index): any realization can be drawn without the others.
inline ChannelSet generate_channels(const ScenarioConfig& config, std::uint64_t seed,
                                    std::uint64_t realization_index) {
  auto gen = detail::stream_for(seed, realization_index);
  const double sigma = std::sqrt(0.5 * db_to_linear(-config.pathloss_db));
  ChannelSet out;
  out.seed = seed;
  out.realization_index = realization_index;
  out.h.reserve(static_cast<std::size_t>(std::max(config.n_users, 0)));
  for (int k = 0; k < config.n_users; ++k) {
    CVector v(config.n_antennas);
    for (int n = 0; n < config.n_antennas; ++n) {
      // Box-Muller: one complex entry per pair of uniforms.
      const double r = std::sqrt(-2.0 * std::log(detail::uniform_open0(gen)));
      const double t = 2.0 * kPi * detail::uniform_open0(gen);
      v[n] = Complex(sigma * r * std::cos(t), sigma * r * std::sin(t));
    }
    out.h.push_back(std::move(v));
  }
  return out;
}

// --- JSON ------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error(where + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  const std::string where = "scenario";
  detail::reject_unknown_keys(j,
                              {"n_antennas", "n_users", "n_virtual_beams", "target_directions", "beam_width",
                               "grid_spacing", "tx_power_dbm", "noise_power_dbm", "pathloss_db", "min_rate_bits",
                               "antenna_spacing_ratio", "full_power"},
                              where);
  ScenarioConfig c;
  detail::read_field(j, "n_antennas", c.n_antennas, where);
  detail::read_field(j, "n_users", c.n_users, where);
  detail::read_field(j, "n_virtual_beams", c.n_virtual_beams, where);
  detail::read_field(j, "target_directions", c.target_directions, where);
  detail::read_field(j, "beam_width", c.beam_width, where);
  detail::read_field(j, "grid_spacing", c.grid_spacing, where);
  detail::read_field(j, "tx_power_dbm", c.tx_power_dbm, where);
  detail::read_field(j, "noise_power_dbm", c.noise_power_dbm, where);
  detail::read_field(j, "pathloss_db", c.pathloss_db, where);
  if (j.contains("min_rate_bits")) {
    const auto& r = j.at("min_rate_bits");
    if (r.is_number()) {
      c.min_rate_bits = {r.get<double>()};
    } else {
      detail::read_field(j, "min_rate_bits", c.min_rate_bits, where);
    }
  }
  detail::read_field(j, "antenna_spacing_ratio", c.antenna_spacing_ratio, where);
  detail::read_field(j, "full_power", c.full_power, where);
  return c;
}

inline nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["n_antennas"] = c.n_antennas;
  j["n_users"] = c.n_users;
  j["n_virtual_beams"] = c.n_virtual_beams;
  j["target_directions"] = c.target_directions;
  j["beam_width"] = c.beam_width;
  j["grid_spacing"] = c.grid_spacing;
  j["tx_power_dbm"] = c.tx_power_dbm;
  j["noise_power_dbm"] = c.noise_power_dbm;
  j["pathloss_db"] = c.pathloss_db;
  if (c.min_rate_bits.size() == 1)
    j["min_rate_bits"] = c.min_rate_bits.front();
  else
    j["min_rate_bits"] = c.min_rate_bits;
  j["antenna_spacing_ratio"] = c.antenna_spacing_ratio;
  j["full_power"] = c.full_power;
  return j;
}

inline SolverConfig solver_from_json(const nlohmann::json& j) {
  const std::string where = "solver";
  detail::reject_unknown_keys(j,
                              {"rho_init", "rho_factor", "penalty_tol", "inner_tol", "max_inner_iters",
                               "max_outer_iters", "rank_tol", "feas_tol", "solver_tol"},
                              where);
  SolverConfig c;
  detail::read_field(j, "rho_init", c.rho_init, where);
  detail::read_field(j, "rho_factor", c.rho_factor, where);
  detail::read_field(j, "penalty_tol", c.penalty_tol, where);
  detail::read_field(j, "inner_tol", c.inner_tol, where);
  detail::read_field(j, "max_inner_iters", c.max_inner_iters, where);
  detail::read_field(j, "max_outer_iters", c.max_outer_iters, where);
  detail::read_field(j, "rank_tol", c.rank_tol, where);
  detail::read_field(j, "feas_tol", c.feas_tol, where);
  detail::read_field(j, "solver_tol", c.solver_tol, where);
  return c;
}

inline nlohmann::json to_json(const SolverConfig& c) {
  return {{"rho_init", c.rho_init},       {"rho_factor", c.rho_factor},
          {"penalty_tol", c.penalty_tol}, {"inner_tol", c.inner_tol},
          {"max_inner_iters", c.max_inner_iters}, {"max_outer_iters", c.max_outer_iters},
          {"rank_tol", c.rank_tol},       {"feas_tol", c.feas_tol},
          {"solver_tol", c.solver_tol}};
}

}  // namespace nisac
