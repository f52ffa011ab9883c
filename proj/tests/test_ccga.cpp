#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "scopf/ccga.hpp"

using namespace scopf;

namespace {

std::optional<double> extensive_objective(const Grid& g, const std::vector<double>& d, SolverBackend& b) {
  const FlowCuts cuts = flow_cuts(build_ptdf(g), g, d);
  const Formulation f = build_extensive(g, cuts, LoadVector(g, d));
  const SolveResult r = b.solve(f.model, SolveOptions{1e-9, kInf, {}});
  if (r.status != SolveStatus::Optimal) return std::nullopt;
  return r.objective;
}

}  // namespace

TEST_CASE("CCGA reaches the brute-force optimum on the toy") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const std::vector<double> d{0, 0, 150};
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, d));
  auto backend = make_highs_backend();
  const CcgaResult r = run_ccga(problem, CcgaConfig{}, *backend);
  REQUIRE(r.ok());
  CHECK(r.audit_passed);
  CHECK(r.cost == doctest::Approx(2000).epsilon(0.0025));
  CHECK(r.phi <= 0.05);
  CHECK(oracle::secure(g, r.dispatch, d, 0.05));
  CHECK(r.iterations >= 1);
}

namespace {

// line 1-3 at 96.8 MW: the cheap dispatch is fine nominally but not after losing unit 2
Grid tight_toy() {
  return parse_grid(R"({"ref_bus": 1, "buses": [{"id": 1}, {"id": 2}, {"id": 3, "load": 150}],
      "lines": [{"from": 1, "to": 2, "susceptance": 10, "capacity": 100},
                {"from": 1, "to": 3, "susceptance": 10, "capacity": 96.8},
                {"from": 2, "to": 3, "susceptance": 10, "capacity": 100}],
      "generators": [{"id": 1, "bus": 1, "p_min": 0, "p_max": 200, "gamma": 1, "cost": [[0, 0], [200, 200]]},
                     {"id": 2, "bus": 2, "p_min": 0, "p_max": 200, "gamma": 1, "cost": [[0, 0], [200, 400]]},
                     {"id": 3, "bus": 3, "p_min": 0, "p_max": 50, "gamma": 1, "cost": [[0, 0], [50, 250]]}],
      "contingencies": "all"})");
}

}  // namespace

TEST_CASE("CCGA adds the violated state and then converges") {
  const Grid g = tight_toy();
  const std::vector<double> d{0, 0, 150};
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, d));
  auto backend = make_highs_backend();
  const CcgaResult r = run_ccga(problem, CcgaConfig{}, *backend);
  REQUIRE(r.ok());
  CHECK(r.iterations >= 2);
  CHECK(r.cuts.contains_state(1));
  CHECK(oracle::secure(g, r.dispatch, d, 0.05));
  const auto ext = extensive_objective(g, d, *backend);
  REQUIRE(ext);
  CHECK(std::abs(r.objective - *ext) <= 0.0025 * *ext + 1e-6);
}

TEST_CASE("CCGA matches the extensive form and keeps every master point balanceable") {
  std::mt19937_64 rng(101);
  auto backend = make_highs_backend();
  int compared = 0;
  for (int k = 0; k < 40 && compared < 8; ++k) {
    const Grid g = oracle::random_grid(rng, 5, 4);
    const auto d = g.nominal_load();
    const auto ext = extensive_objective(g, d, *backend);
    const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, d));
    double worst_residual = 0.0;
    std::size_t prev_cuts = 0;
    const CcgaResult r = run_ccga(problem, CcgaConfig{}, *backend, [&](const IterationTrace& it) {
      CHECK(it.num_cuts >= prev_cuts);
      prev_cuts = it.num_cuts;
      const double total = problem.load.total();
      for (std::size_t s : g.contingencies())
        worst_residual = std::max(worst_residual, std::abs(bisect_balance(g, it.dispatch, s, total, default_balance_tol(total)).residual));
      return true;
    });
    if (!ext) {
      CHECK(r.status == CcgaStatus::Infeasible);
      continue;
    }
    REQUIRE(r.ok());
    ++compared;
    CHECK(std::abs(r.objective - *ext) <= 0.0025 * std::abs(*ext) + 1e-6);
    CHECK(worst_residual <= 1e-6 * problem.load.total());
    CHECK(r.audit_passed);
  }
  CHECK(compared >= 5);
}

TEST_CASE("an overloaded instance is reported infeasible, not thrown") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, {0, 0, 390}));
  auto backend = make_highs_backend();
  const CcgaResult r = run_ccga(problem, CcgaConfig{}, *backend);
  CHECK(r.status == CcgaStatus::Infeasible);
  CHECK_FALSE(r.ok());
}

TEST_CASE("observer can stop the run and limits are honoured") {
  const Grid g = tight_toy();
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, {0, 0, 150}));
  auto backend = make_highs_backend();
  {
    const CcgaResult r = run_ccga(problem, CcgaConfig{}, *backend, [](const IterationTrace&) { return false; });
    CHECK(r.status == CcgaStatus::Stopped);
    CHECK(r.iterations == 1);
  }
  {
    CcgaConfig cfg;
    cfg.max_iterations = 1;
    const CcgaResult r = run_ccga(problem, cfg, *backend);
    CHECK(r.status == CcgaStatus::IterationLimit);
  }
  CcgaConfig bad;
  bad.epsilon = -1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("trace CSV has one row per iteration") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, {0, 0, 150}));
  auto backend = make_highs_backend();
  const CcgaResult r = run_ccga(problem, CcgaConfig{}, *backend);
  std::ostringstream os;
  write_trace_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "iteration,time_s,objective,phi_MW,n_S,n_cuts");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == r.iterations);
}

TEST_CASE("FR-CCGA from an infeasible guess lands on a secure dispatch") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const std::vector<double> d{0, 0, 150};
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, d));
  auto backend = make_highs_backend();
  const CcgaResult r = run_fr_ccga(problem, std::vector<double>{150, 0}, CcgaConfig{}, *backend);
  REQUIRE(r.ok());
  CHECK(oracle::secure(g, r.dispatch, d, 0.05));
  // closest secure point keeps g₂ at its 50 MW floor
  CHECK(r.distance == doctest::Approx(100).epsilon(1e-6));
}

TEST_CASE("bounds race closes the gap on the toy") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const CcgaProblem problem(g, build_ptdf(g), LoadVector(g, {0, 0, 150}));
  auto lo = make_highs_backend(), up = make_highs_backend();
  const GapTrace t = run_bounds_race(problem, std::vector<double>{120, 30}, CcgaConfig{}, *lo, *up);
  CHECK(t.gap_closed);
  CHECK(t.lower <= t.upper + 1e-6);
  CHECK(t.upper == doctest::Approx(2000).epsilon(0.0025));
  std::ostringstream os;
  write_gap_csv(os, t);
  CHECK(os.str().rfind("time_s,lower,upper,gap,source\n", 0) == 0);
  CHECK(!t.points.empty());
}
