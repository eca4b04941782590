#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

namespace nisac::cli {

namespace fs = std::filesystem;

RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  detail::reject_unknown_keys(j, {"scenario", "solver", "sweep"}, "config");
  RunConfig rc;
  if (j.contains("scenario")) rc.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("solver")) rc.solver = solver_from_json(j.at("solver"));
  if (j.contains("sweep")) rc.sweep = sweep_from_json(j.at("sweep"));
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config: " + path + " is not valid JSON (" + e.what() + ")");
  }
  return parse_config(j);
}

std::vector<std::string> config_violations(const RunConfig& rc) {
  std::vector<std::string> out;
  for (const auto& i : validate_config(rc.scenario)) out.push_back("scenario." + i.field + ": " + i.message);
  for (const auto& i : validate_config(rc.solver)) out.push_back("solver." + i.field + ": " + i.message);
  for (const auto& i : validate_config(rc.sweep)) out.push_back("sweep." + i.field + ": " + i.message);
  return out;
}

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct CellArgs {
  std::string scheme;
  std::optional<double> r_min;
  int realization = 0;
};

std::string timestamp_dir() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "runs/%Y%m%d-%H%M%S", &tm);
  return buf;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Path to the JSON config")->required();
  sub->add_option("--seed", c.seed, "Base seed of every channel draw (default: sweep.base_seed, 42)");
  sub->add_option("--out", c.out, "Output directory (default: ./runs/<UTC timestamp>)");
}

void add_cell(CLI::App* sub, CellArgs& a, const char* default_scheme) {
  a.scheme = default_scheme;
  sub->add_option("--scheme", a.scheme, "noma_sca, noma_sdr, ideal, conventional or comm_only")
      ->capture_default_str();
  sub->add_option("--r-min", a.r_min, "Minimum rate in bits/s/Hz (default: scenario.min_rate_bits)");
  sub->add_option("--realization", a.realization, "Channel realization index")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
}

/// Loads and validates the config; prints violations and returns false on error.
bool prepare(const Common& c, RunConfig& rc, std::ostream& err) {
  try {
    rc = load_config(c.config);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return false;
  }
  if (c.seed) rc.sweep.base_seed = *c.seed;
  const auto issues = config_violations(rc);
  for (const auto& i : issues) err << i << "\n";
  return issues.empty();
}

fs::path out_dir(const Common& c) { return c.out.empty() ? fs::path(timestamp_dir()) : fs::path(c.out); }

int exit_for(const std::vector<CellResult>& cells) {
  bool infeasible = false;
  bool failed = false;
  for (const auto& c : cells) {
    infeasible = infeasible || c.status == CellStatus::Infeasible;
    failed = failed || c.status == CellStatus::Failed;
  }
  if (failed) return kNumericalFailure;
  if (infeasible) return kInfeasible;
  return kOk;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& rc,
                    std::vector<std::string> files) {
  files.push_back("manifest.json");
  detail::write_file(dir / "manifest.json",
                     manifest_json(command, rc.scenario, rc.solver, rc.sweep, files).dump(2) + "\n");
}

void report_cell(const CellResult& c, std::ostream& err) {
  err << scheme_name(c.scheme) << " r_min=" << c.r_min << " realization=" << c.realization << ": "
      << to_string(c.status);
  if (c.reported_error()) err << ", matching error " << *c.reported_error();
  if (c.resamples > 0) err << ", " << c.resamples << " resample(s)";
  err << "\n";
}

std::optional<SchemeKind> scheme_arg(const std::string& s, std::ostream& err) {
  const auto k = parse_scheme(s);
  if (!k) err << "unknown scheme \"" << s << "\"\n";
  return k;
}

/// Solves one (scheme, R_min, realization) cell and writes its artifacts.
int single_cell(const std::string& command, const Common& c, const CellArgs& a, bool need_sca,
                std::ostream& err) {
  RunConfig rc;
  if (!prepare(c, rc, err)) return kConfigError;
  const auto kind = scheme_arg(a.scheme, err);
  if (!kind) return kConfigError;
  if (need_sca && !uses_sca(*kind)) {
    err << "trace needs an SCA scheme (noma_sca or comm_only)\n";
    return kConfigError;
  }
  const double r_min = a.r_min.value_or(rc.scenario.min_rate(0));
  if (!std::isfinite(r_min) || r_min < 0.0) {
    err << "--r-min must be finite and ≥ 0\n";
    return kConfigError;
  }
  rc.sweep.schemes = {*kind};
  rc.sweep.r_min_values = {r_min};
  rc.sweep.n_realizations = a.realization + 1;

  const SensingGeometry g = SensingGeometry::from(rc.scenario);
  const auto cells = run_group({*kind}, r_min, a.realization, rc.sweep.base_seed, 0, rc.scenario, rc.solver, g);
  const CellResult& cell = cells.front();
  report_cell(cell, err);

  const fs::path dir = out_dir(c);
  fs::create_directories(dir);
  std::vector<std::string> files;
  const std::string key = std::string(scheme_name(*kind)) + "_" + detail::fmt_rmin(r_min);
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_file(dir / name, text);
    files.push_back(name);
  };
  put("results.csv", results_csv(cells));
  if (cell.artifacts && uses_sca(*kind)) {
    std::ostringstream os;
    cell.artifacts->trace.write_csv(os);
    put("trace_" + key + "_" + std::to_string(a.realization) + ".csv", os.str());
  }
  if (cell.has_values() && command != "trace") put("beampattern_" + key + ".csv", beampattern_csv(beampattern_snapshot(cell, g)));
  put("solution_" + key + "_" + std::to_string(a.realization) + ".json", cell_json(cell).dump(1) + "\n");
  write_manifest(dir, command, rc, files);
  err << "wrote " << dir.string() << "\n";
  return exit_for(cells);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"NOMA-inspired ISAC beamforming: solve, sweep and inspect beampattern designs", "nisac"};
  app.set_version_flag("--version", std::string(NISAC_VERSION));
  app.require_subcommand(1);

  Common vc;
  CLI::App* validate = app.add_subcommand("validate", "Check a config file and print every violation");
  add_common(validate, vc);

  Common sc;
  CellArgs sa;
  CLI::App* solve = app.add_subcommand("solve", "Solve one scheme on one channel realization");
  add_common(solve, sc);
  add_cell(solve, sa, "noma_sca");

  Common wc;
  std::optional<int> realizations;
  bool full = false;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  CLI::App* sweep = app.add_subcommand("sweep", "Monte Carlo sweep over schemes, R_min values and realizations");
  add_common(sweep, wc);
  sweep->add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  auto* real_opt = sweep->add_option("--realizations", realizations, "Realizations per cell (default: sweep.n_realizations)")
                       ->check(CLI::PositiveNumber);
  sweep->add_flag("--full", full, "Use 50 realizations per cell")->excludes(real_opt);

  Common bc;
  std::optional<double> b_rmin;
  int b_real = 0;
  std::vector<std::string> b_schemes;
  CLI::App* bp = app.add_subcommand("beampattern", "Transmit beampatterns of several schemes on one realization");
  add_common(bp, bc);
  bp->add_option("--scheme", b_schemes, "Schemes to include (default: sweep.schemes)");
  bp->add_option("--r-min", b_rmin, "Minimum rate in bits/s/Hz (default: scenario.min_rate_bits)");
  bp->add_option("--realization", b_real, "Channel realization index")->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  Common tc;
  CellArgs ta;
  CLI::App* trace = app.add_subcommand("trace", "Record the SCA convergence trace on one realization");
  add_common(trace, tc);
  add_cell(trace, ta, "noma_sca");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (validate->parsed()) {
      RunConfig rc;
      if (!prepare(vc, rc, err)) return kConfigError;
      err << "config ok: N=" << rc.scenario.n_antennas << " K=" << rc.scenario.n_users
          << " M=" << rc.scenario.n_virtual_beams << "\n";
      return kOk;
    }
    if (solve->parsed()) return single_cell("solve", sc, sa, false, err);
    if (trace->parsed()) return single_cell("trace", tc, ta, true, err);

    if (sweep->parsed()) {
      RunConfig rc;
      if (!prepare(wc, rc, err)) return kConfigError;
      if (full) rc.sweep.n_realizations = 50;
      if (realizations) rc.sweep.n_realizations = *realizations;
      const auto t0 = std::chrono::steady_clock::now();
      const auto cells = run_sweep(rc.sweep, rc.scenario, rc.solver, jobs, [&](std::size_t done, std::size_t total) {
        err << "\r" << done << "/" << total << " groups" << std::flush;
      });
      err << "\n";
      const fs::path dir = out_dir(wc);
      auto files = write_run(dir, cells, SensingGeometry::from(rc.scenario));
      write_manifest(dir, "sweep", rc, files);
      for (const auto& row : aggregate(cells)) {
        err << scheme_name(row.scheme) << " r_min=" << row.r_min << ": ";
        if (row.mean)
          err << "mean " << *row.mean << " std " << *row.std_dev;
        else
          err << "no converged cells";
        err << " (" << row.converged << " converged, " << row.degraded << " degraded, " << row.infeasible
            << " infeasible, " << row.failed << " failed)\n";
      }
      err << "wrote " << dir.string() << " in " << detail::seconds_since(t0) << " s\n";
      return exit_for(cells);
    }

    if (bp->parsed()) {
      RunConfig rc;
      if (!prepare(bc, rc, err)) return kConfigError;
      if (!b_schemes.empty()) {
        rc.sweep.schemes.clear();
        for (const auto& s : b_schemes) {
          const auto k = scheme_arg(s, err);
          if (!k) return kConfigError;
          rc.sweep.schemes.push_back(*k);
        }
        for (const auto& i : validate_config(rc.sweep)) {
          err << "--scheme: " << i.message << "\n";
          return kConfigError;
        }
      }
      const double r_min = b_rmin.value_or(rc.scenario.min_rate(0));
      const SensingGeometry g = SensingGeometry::from(rc.scenario);
      const auto cells = run_group(rc.sweep.schemes, r_min, b_real, rc.sweep.base_seed, 0, rc.scenario, rc.solver, g);
      const fs::path dir = out_dir(bc);
      fs::create_directories(dir);
      std::vector<std::string> files;
      for (const auto& c : cells) {
        report_cell(c, err);
        if (!c.has_values()) continue;
        const std::string name = "beampattern_" + std::string(scheme_name(c.scheme)) + "_" + detail::fmt_rmin(r_min) + ".csv";
        detail::write_file(dir / name, beampattern_csv(beampattern_snapshot(c, g)));
        files.push_back(name);
      }
      detail::write_file(dir / "results.csv", results_csv(cells));
      files.push_back("results.csv");
      rc.sweep.r_min_values = {r_min};
      write_manifest(dir, "beampattern", rc, files);
      err << "wrote " << dir.string() << "\n";
      return exit_for(cells);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

}  // namespace nisac::cli
