#pragma once

#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "nisac/experiment.hpp"

namespace nisac::cli {

enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,  // I/O and other unexpected failures
  kConfigError = 2,
  kInfeasible = 3,
  kNumericalFailure = 4,
};

struct RunConfig {
  ScenarioConfig scenario;
  SolverConfig solver;
  SweepSpec sweep;
};

/// Parses a config document with optional top-level "scenario", "solver" and
/// "sweep" objects. Throws nisac::Error on malformed input or unknown keys.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// Every violation of a parsed config, formatted "section.field: message".
std::vector<std::string> config_violations(const RunConfig& rc);

/// Entry point of the nisac tool. Human-readable messages go to `err`;
/// `out` receives only --help and version text.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nisac::cli
