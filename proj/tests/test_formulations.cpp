#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "scopf/apr.hpp"
#include "scopf/ccga.hpp"
#include "scopf/formulations.hpp"

using namespace scopf;

namespace {

struct Solved {
  Formulation f;
  SolveResult r;
};

Solved solve_extensive(const Grid& g, const std::vector<double>& d) {
  const PtdfModel p = build_ptdf(g);
  Solved s{build_extensive(g, flow_cuts(p, g, d), LoadVector(g, d)), {}};
  SolveOptions opts;
  opts.rel_gap = 1e-9;
  s.r = make_highs_backend()->solve(s.f.model, opts);
  return s;
}

}  // namespace

TEST_CASE("extensive form on IEEE-118 has one binary per generator and contingency") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/case118.json");
  const PtdfModel p = build_ptdf(g);
  auto d = g.nominal_load();
  for (double& v : d) v *= 0.82;
  const Formulation f = build_extensive(g, flow_cuts(p, g, d), LoadVector(g, d));
  const double bins = static_cast<double>(f.model.num_binaries());
  CHECK(bins == 54 * 54);
  CHECK(std::abs(bins - 2862) <= 0.05 * 2862);
  for (const auto& row : f.model.constraints())
    for (int j : row.index) CHECK(j < static_cast<int>(f.model.num_variables()));
  std::ostringstream lp;
  f.model.write_lp(lp);
  CHECK(lp.str().find("Binar") != std::string::npos);
}

TEST_CASE("extensive optimum on the toy matches the brute-force scan") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const std::vector<double> d{0, 0, 150};
  const auto bf = oracle::brute_force_two_gen(g, d);
  REQUIRE(bf.feasible);
  CHECK(bf.cost == doctest::Approx(2000).epsilon(1e-6));

  const auto s = solve_extensive(g, d);
  REQUIRE(s.r.status == SolveStatus::Optimal);
  CHECK(s.r.objective == doctest::Approx(bf.cost).epsilon(1e-6));
  CHECK(s.f.model.max_violation(s.r.x) <= 1e-6);
  const auto gd = s.f.nominal_dispatch(s.r.x);
  CHECK(oracle::secure(g, gd, d, 1e-6));
  CHECK(s.f.epigraph_cost(s.r.x) == doctest::Approx(g.cost(gd)).epsilon(1e-6));
}

TEST_CASE("decoded solutions satisfy the rules they encode") {
  std::mt19937_64 rng(41);
  int solved = 0;
  for (int k = 0; k < 30 && solved < 8; ++k) {
    const Grid g = oracle::random_grid(rng, 5, 4);
    const auto d = g.nominal_load();
    const auto s = solve_extensive(g, d);
    if (s.r.status != SolveStatus::Optimal) continue;
    ++solved;
    CHECK(s.f.model.max_violation(s.r.x) <= 1e-6);
    const auto gd = s.f.nominal_dispatch(s.r.x);
    const double total = oracle::sum(d);
    CHECK(std::abs(oracle::sum(gd) - total) <= 1e-6 * total);
    for (std::size_t k2 = 0; k2 < g.contingencies().size(); ++k2) {
      const std::size_t c = g.contingencies()[k2];
      const auto gs = s.f.contingency_dispatch(s.r.x, k2);
      const double n = s.r.x[static_cast<std::size_t>(s.f.index.signal[k2])];
      const auto expect = oracle::respond(g, gd, n, c);
      for (std::size_t i = 0; i < gs.size(); ++i) CHECK(gs[i] == doctest::Approx(expect[i]).epsilon(1e-6).scale(100));
      CHECK(oracle::worst_overload(g, gs, d) <= 1e-5);
    }
  }
  CHECK(solved >= 4);
}

TEST_CASE("the empty master relaxes the extensive form") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const std::vector<double> d{0, 0, 150};
  const PtdfModel p = build_ptdf(g);
  const FlowCuts cuts = flow_cuts(p, g, d);
  const Formulation m = build_master(g, cuts, LoadVector(g, d), CutSet{});
  CHECK(m.model.num_binaries() == 0);
  const auto r = make_highs_backend()->solve(m.model, SolveOptions{1e-9, kInf, {}});
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective <= 2000 + 1e-6);
}

TEST_CASE("master cut rows appear only for listed pairs") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const std::vector<double> d{0, 0, 150};
  const FlowCuts cuts = flow_cuts(build_ptdf(g), g, d);
  CutSet cs;
  cs.add_state(1);
  cs.add_upper(2, 1);
  const Formulation m = build_master(g, cuts, LoadVector(g, d), cs);
  int cut_rows = 0, apr_rows = 0;
  for (const auto& row : m.model.constraints()) {
    cut_rows += row.name.rfind("cut_", 0) == 0;
    apr_rows += row.name.rfind("apr_", 0) == 0;
  }
  CHECK(cut_rows == 1);
  CHECK(apr_rows == 4);  // one surviving unit, four regime rows
  CHECK(m.model.num_binaries() == 2);
  CHECK(m.index.signal[0] == -1);
  CHECK(m.index.signal[1] >= 0);
}

TEST_CASE("FR master seeded with a feasible optimum has zero distance") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const std::vector<double> d{0, 0, 150};
  const PtdfModel p = build_ptdf(g);
  const CcgaProblem problem(g, p, LoadVector(g, d));
  auto backend = make_highs_backend();
  const auto r = run_fr_ccga(problem, std::vector<double>{100, 50}, CcgaConfig{}, *backend);
  REQUIRE(r.ok());
  CHECK(r.distance <= 1e-6);
  CHECK(r.dispatch[0] == doctest::Approx(100).epsilon(1e-6));
  CHECK_THROWS(build_fr_master(g, problem.cuts, problem.load, CutSet{}, std::vector<double>{1.0}));
}
