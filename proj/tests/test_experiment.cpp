#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "nisac/experiment.hpp"

namespace {

using namespace nisac;
namespace fs = std::filesystem;

CellResult fake(SchemeKind k, double r, CellStatus st, std::optional<double> err) {
  CellResult c;
  c.scheme = k;
  c.r_min = r;
  c.status = st;
  c.matching_error_recovered = err;
  c.matching_error_lifted = err;
  return c;
}

std::string drop_wall_seconds(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::string out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

SweepSpec small_spec() {
  SweepSpec s;
  s.r_min_values = {2.5};
  s.n_realizations = 1;
  return s;
}

}  // namespace

TEST(Spec, DefaultsAndValidation) {
  SweepSpec s;
  EXPECT_EQ(s.n_realizations, 10);
  EXPECT_EQ(s.base_seed, 42u);
  EXPECT_TRUE(s.shared_channels);
  EXPECT_EQ(s.schemes.size(), 5u);
  EXPECT_TRUE(validate_config(s).empty());

  s.n_realizations = 0;
  s.r_min_values = {2.5, 1.5};
  s.schemes = {SchemeKind::NomaSca, SchemeKind::NomaSca};
  EXPECT_EQ(validate_config(s).size(), 3u);
  s.r_min_values.clear();
  EXPECT_FALSE(validate_config(s).empty());
}

TEST(Spec, JsonRoundTrip) {
  SweepSpec s;
  s.r_min_values = {1.0, 2.0};
  s.schemes = {SchemeKind::CommOnly, SchemeKind::IdealIsac};
  s.base_seed = 7;
  const auto back = sweep_from_json(to_json(s));
  EXPECT_EQ(back.r_min_values, s.r_min_values);
  EXPECT_EQ(back.schemes, s.schemes);
  EXPECT_EQ(back.base_seed, 7u);
  EXPECT_THROW(sweep_from_json({{"realizations", 3}}), Error);
  EXPECT_THROW(sweep_from_json({{"schemes", {"noma"}}}), Error);
}

TEST(Sweep, OneCellPerSchemeWithSharedChannel) {
  const auto results = run_sweep(small_spec(), ScenarioConfig{}, SolverConfig{});
  ASSERT_EQ(results.size(), 5u);
  std::set<std::uint64_t> prints;
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].scheme, kAllSchemes[i]);
    EXPECT_EQ(results[i].realization, 0);
    EXPECT_DOUBLE_EQ(results[i].r_min, 2.5);
    EXPECT_EQ(results[i].status, CellStatus::Converged);
    EXPECT_GE(*results[i].matching_error_lifted, 0.0);
    prints.insert(results[i].channel_fingerprint);
  }
  EXPECT_EQ(prints.size(), 1u);
}

TEST(Sweep, UnsharedChannelsDiffer) {
  SweepSpec s = small_spec();
  s.shared_channels = false;
  s.schemes = {SchemeKind::IdealIsac, SchemeKind::ConventionalIsac};
  const auto results = run_sweep(s, ScenarioConfig{}, SolverConfig{});
  ASSERT_EQ(results.size(), 2u);
  EXPECT_NE(results[0].channel_fingerprint, results[1].channel_fingerprint);
}

TEST(Sweep, SharedChannelsAcrossRates) {
  SweepSpec s;
  s.r_min_values = {1.5, 3.5};
  s.schemes = {SchemeKind::IdealIsac};
  s.n_realizations = 2;
  const auto results = run_sweep(s, ScenarioConfig{}, SolverConfig{});
  ASSERT_EQ(results.size(), 4u);
  EXPECT_EQ(results[0].channel_fingerprint, results[2].channel_fingerprint);
  EXPECT_EQ(results[1].channel_fingerprint, results[3].channel_fingerprint);
  EXPECT_NE(results[0].channel_fingerprint, results[1].channel_fingerprint);
}

TEST(Sweep, InfeasibleAfterResampleCap) {
  SweepSpec s = small_spec();
  s.r_min_values = {40.0};
  s.schemes = {SchemeKind::IdealIsac};
  const auto results = run_sweep(s, ScenarioConfig{}, SolverConfig{});
  ASSERT_EQ(results.size(), 1u);
  EXPECT_EQ(results[0].status, CellStatus::Infeasible);
  EXPECT_EQ(results[0].resamples, kMaxResamples);
  EXPECT_FALSE(results[0].has_values());
  EXPECT_FALSE(results[0].matching_error_lifted.has_value());
  EXPECT_FALSE(results[0].matching_error_recovered.has_value());
  const auto agg = aggregate(results);
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_FALSE(agg[0].mean.has_value());
  EXPECT_EQ(agg[0].infeasible, 1);
}

TEST(Sweep, OrderIndependentOfJobs) {
  SweepSpec s;
  s.r_min_values = {1.5, 4.5};
  s.schemes = {SchemeKind::ConventionalIsac, SchemeKind::NomaSdr};
  s.n_realizations = 2;
  const auto a = run_sweep(s, ScenarioConfig{}, SolverConfig{}, 1);
  const auto b = run_sweep(s, ScenarioConfig{}, SolverConfig{}, 3);
  EXPECT_EQ(drop_wall_seconds(results_csv(a)), drop_wall_seconds(results_csv(b)));
  EXPECT_EQ(a.front().scheme, SchemeKind::ConventionalIsac);
  EXPECT_EQ(a.back().scheme, SchemeKind::NomaSdr);
  EXPECT_DOUBLE_EQ(a.back().r_min, 4.5);
  EXPECT_EQ(a.back().realization, 1);
}

TEST(Sweep, ProgressReported) {
  SweepSpec s = small_spec();
  s.schemes = {SchemeKind::IdealIsac};
  s.n_realizations = 2;
  std::size_t calls = 0;
  std::size_t last_total = 0;
  run_sweep(s, ScenarioConfig{}, SolverConfig{}, 1, [&](std::size_t, std::size_t total) {
    ++calls;
    last_total = total;
  });
  EXPECT_EQ(calls, 2u);
  EXPECT_EQ(last_total, 2u);
}

TEST(Sweep, PerInstanceOrdering) {
  SweepSpec s;
  s.r_min_values = {2.5, 4.5};
  s.n_realizations = 2;
  const SolverConfig sc;
  const auto results = run_sweep(s, ScenarioConfig{}, sc);
  auto find = [&](SchemeKind k, double r, int real) {
    for (const auto& c : results)
      if (c.scheme == k && c.r_min == r && c.realization == real) return c;
    ADD_FAILURE() << "missing cell";
    return CellResult{};
  };
  for (double r : s.r_min_values)
    for (int real = 0; real < s.n_realizations; ++real) {
      const double ideal = *find(SchemeKind::IdealIsac, r, real).reported_error();
      const double sdr = *find(SchemeKind::NomaSdr, r, real).reported_error();
      const double sca = *find(SchemeKind::NomaSca, r, real).reported_error();
      const double conv = *find(SchemeKind::ConventionalIsac, r, real).reported_error();
      const auto tol = [&](double v) { return 2.0 * sc.solver_tol * std::max(1.0, std::abs(v)); };
      EXPECT_LE(ideal, sdr + tol(sdr));
      EXPECT_LE(sdr, sca + tol(sca));
      EXPECT_LE(ideal, conv + tol(conv));
    }
}

TEST(Aggregate, MeanAndSampleStd) {
  const auto rows = aggregate({fake(SchemeKind::NomaSca, 1.5, CellStatus::Converged, 1.0),
                               fake(SchemeKind::NomaSca, 1.5, CellStatus::Converged, 3.0)});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(*rows[0].mean, 2.0);
  EXPECT_DOUBLE_EQ(*rows[0].std_dev, std::sqrt(2.0));
  EXPECT_EQ(rows[0].converged, 2);
}

TEST(Aggregate, SingleValueHasZeroStd) {
  const auto rows = aggregate({fake(SchemeKind::IdealIsac, 2.5, CellStatus::Converged, 0.7)});
  EXPECT_DOUBLE_EQ(*rows[0].mean, 0.7);
  EXPECT_DOUBLE_EQ(*rows[0].std_dev, 0.0);
  EXPECT_EQ(rows[0].converged, 1);
}

TEST(Aggregate, AllInfeasibleIsNull) {
  std::vector<CellResult> cells(3, fake(SchemeKind::NomaSdr, 4.5, CellStatus::Infeasible, std::nullopt));
  const auto rows = aggregate(cells);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].mean.has_value());
  EXPECT_FALSE(rows[0].std_dev.has_value());
  EXPECT_EQ(rows[0].infeasible, 3);
  const std::string csv = aggregate_csv(rows);
  EXPECT_NE(csv.find("noma_sdr,4.5,,,0,0,3,0\n"), std::string::npos);
}

TEST(Aggregate, GroupsAndCounts) {
  const auto rows = aggregate({fake(SchemeKind::NomaSca, 1.5, CellStatus::Converged, 1.0),
                               fake(SchemeKind::NomaSca, 1.5, CellStatus::Degraded, 100.0),
                               fake(SchemeKind::NomaSca, 2.5, CellStatus::Failed, std::nullopt),
                               fake(SchemeKind::CommOnly, 1.5, CellStatus::Converged, 5.0)});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_DOUBLE_EQ(*rows[0].mean, 1.0);
  EXPECT_EQ(rows[0].degraded, 1);
  EXPECT_EQ(rows[1].failed, 1);
  EXPECT_FALSE(rows[1].mean.has_value());
  EXPECT_EQ(rows[2].scheme, SchemeKind::CommOnly);
  EXPECT_THROW(aggregate({}), Error);
}

TEST(Aggregate, ReportedErrorFollowsScheme) {
  CellResult c = fake(SchemeKind::NomaSca, 1.0, CellStatus::Converged, 1.0);
  c.matching_error_lifted = 0.5;
  EXPECT_DOUBLE_EQ(*c.reported_error(), 1.0);
  c.scheme = SchemeKind::NomaSdr;
  EXPECT_DOUBLE_EQ(*c.reported_error(), 0.5);
}

TEST(Snapshot, RowsAndScaledTarget) {
  const ScenarioConfig c;
  const auto g = SensingGeometry::from(c);
  SweepSpec s = small_spec();
  s.r_min_values = {4.5};
  s.schemes = {SchemeKind::NomaSca, SchemeKind::IdealIsac};
  const auto results = run_sweep(s, c, SolverConfig{});
  for (const auto& cell : results) {
    ASSERT_EQ(cell.status, CellStatus::Converged);
    const auto snap = beampattern_snapshot(cell, g);
    EXPECT_EQ(snap.grid.size(), 181u);
    EXPECT_EQ(snap.power.size(), 181);
    for (Eigen::Index l = 0; l < snap.desired.size(); ++l) EXPECT_EQ(snap.desired[l], snap.delta * g.desired.values[l]);

    CMatrix gram = CMatrix::Zero(8, 8);
    for (Eigen::Index l = 0; l < g.steering.size(); ++l) gram += g.steering.column(l) * g.steering.column(l).adjoint();
    const CMatrix r = cell.scheme == SchemeKind::NomaSca ? cell.artifacts->beamformers.covariance(8)
                                                         : assemble_covariance(cell.artifacts->lifted, 8);
    EXPECT_NEAR(snap.power.sum(), (r * gram).trace().real(), 1e-6 * snap.power.sum());
    const std::string csv = beampattern_csv(snap);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 182);
  }
  EXPECT_THROW(beampattern_snapshot(fake(SchemeKind::NomaSca, 1.0, CellStatus::Infeasible, std::nullopt), g), Error);
}

TEST(Output, ResultsCsvHeaderAndEmptyFields) {
  const std::string csv = results_csv({fake(SchemeKind::NomaSdr, 2.5, CellStatus::Infeasible, std::nullopt)});
  EXPECT_EQ(csv,
            "scheme,r_min_bits,realization,matching_error_recovered,matching_error_lifted,penalty_final,status,"
            "resamples,wall_seconds\nnoma_sdr,2.5,0,,,,infeasible,0,0.000\n");
}

TEST(Output, WriteRunLayout) {
  const ScenarioConfig c;
  const auto g = SensingGeometry::from(c);
  SweepSpec s = small_spec();
  s.schemes = {SchemeKind::NomaSca, SchemeKind::ConventionalIsac};
  const auto results = run_sweep(s, c, SolverConfig{});
  const fs::path dir = fs::temp_directory_path() / "nisac_test_write_run";
  fs::remove_all(dir);
  const auto files = write_run(dir, results, g);
  for (const char* name : {"results.csv", "aggregate.csv", "beampattern_noma_sca_2.5.csv",
                           "beampattern_conventional_2.5.csv", "trace_noma_sca_2.5_0.csv",
                           "solutions/noma_sca_2.5_0.json", "solutions/conventional_2.5_0.json"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
    EXPECT_NE(std::find(files.begin(), files.end(), name), files.end()) << name;
  }
  EXPECT_FALSE(fs::exists(dir / "trace_conventional_2.5_0.csv"));

  std::ifstream is(dir / "solutions/noma_sca_2.5_0.json");
  const auto j = nlohmann::json::parse(is);
  EXPECT_EQ(j["status"], "converged");
  EXPECT_EQ(j["lifted"]["W_comm"].size(), 5u);
  EXPECT_EQ(j["lifted"]["W_comm"][0]["real"].size(), 8u);
  EXPECT_EQ(j["beamformers"]["w_sensing"].size(), 1u);
  EXPECT_TRUE(j["recovered_audit"].contains("rank_ratios"));
  fs::remove_all(dir);
}

TEST(Output, ManifestRecordsConfiguration) {
  SweepSpec s;
  s.base_seed = 9;
  const auto j = manifest_json("sweep", ScenarioConfig{}, SolverConfig{}, s, {"results.csv"});
  EXPECT_EQ(j["seed"], 9);
  EXPECT_EQ(j["scenario"]["n_antennas"], 8);
  EXPECT_EQ(j["solver"]["rho_init"], 100.0);
  EXPECT_EQ(j["files"][0], "results.csv");
  EXPECT_TRUE(j.contains("artifact_version"));
}

TEST(DeskSweep, MostCellsConverge) {
  const auto results = run_sweep(SweepSpec{}, ScenarioConfig{}, SolverConfig{}, 2);
  ASSERT_EQ(results.size(), 200u);
  const auto converged = std::count_if(results.begin(), results.end(),
                                       [](const CellResult& c) { return c.status == CellStatus::Converged; });
  EXPECT_GE(static_cast<double>(converged), 0.95 * 200.0);
}
