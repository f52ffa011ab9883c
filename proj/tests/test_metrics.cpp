#include <doctest.h>

#include <cmath>
#include <sstream>

#include "scopf/metrics.hpp"

using namespace scopf;

TEST_CASE("nearest-rank percentiles") {
  const std::vector<double> v{15, 20, 35, 40, 50};
  CHECK(nearest_rank(v, 5) == 15);
  CHECK(nearest_rank(v, 30) == 20);
  CHECK(nearest_rank(v, 40) == 20);
  CHECK(nearest_rank(v, 50) == 35);
  CHECK(nearest_rank(v, 100) == 50);
  CHECK(nearest_rank(v, 0) == 15);
  CHECK(nearest_rank({3, 1, 2}, 50) == 2);
  CHECK(median_of({4, 1, 3, 2}) == 2.5);  // even counts average the middle pair
  CHECK(median_of({5, 1, 3}) == 3);
  CHECK_THROWS(nearest_rank({}, 50));
}

TEST_CASE("summary statistics against hand values") {
  std::vector<double> v;
  for (int i = 1; i <= 40; ++i) v.push_back(i);
  const Summary s = summarize(v);
  CHECK(s.count == 40);
  CHECK(s.median == 20.5);
  CHECK(s.mean == doctest::Approx(20.5));
  CHECK(s.min == 1);
  CHECK(s.max == 40);
  CHECK(s.std == doctest::Approx(std::sqrt((40.0 * 40 - 1) / 12)));
  CHECK(s.lo == 1);   // ⌈0.025·40⌉ = 1
  CHECK(s.hi == 39);  // ⌈0.975·40⌉ = 39
  CHECK(summarize(std::vector<double>{}).count == 0);
}

TEST_CASE("band errors use the label to pick the band") {
  const std::vector<std::vector<double>> labels{{20, 200, 5}, {40, 300, 6000}};
  const std::vector<std::vector<double>> preds{{22, 190, 0}, {40, 330, 0}};
  const auto b = band_errors(labels, preds);
  REQUIRE(b.size() == default_bands().size());
  CHECK(b[0].count == 2);
  CHECK(b[0].mae_pct == doctest::Approx(5.0));  // (10% + 0%) / 2
  CHECK(b[2].count == 1);
  CHECK(b[2].mae_pct == doctest::Approx(5.0));
  CHECK(b[3].count == 1);
  CHECK(b[3].mae_pct == doctest::Approx(10.0));
  CHECK(b[1].count == 0);
  CHECK_THROWS(band_errors(labels, {{1, 2, 3}}));
}

TEST_CASE("distance and balance percentages") {
  CHECK(distance_pct(std::vector<double>{110, 40}, std::vector<double>{100, 50}) == doctest::Approx(20.0 / 150 * 100));
  CHECK(balance_violation_pct(std::vector<double>{110, 40}, 160) == doctest::Approx(10.0 / 160 * 100));
  CHECK(balance_violation_pct(std::vector<double>{110, 50}, 160) == 0.0);
}

TEST_CASE("bench CSV round-trips and failed rows are kept out of the cost summaries") {
  std::vector<BenchRow> rows;
  for (int k = 0; k < 5; ++k) {
    BenchRow r;
    r.index = static_cast<std::size_t>(k);
    r.total_load = 1000 + k / 3.0;
    r.ccga_ok = r.fr_ok = true;
    r.ccga_cost = 1e5 + k;
    r.fr_cost = r.ccga_cost * 1.001;
    r.ccga_seconds = 1.0 + k;
    r.fr_seconds = 0.1 * (k + 1);
    r.ccga_iterations = 3;
    r.fr_iterations = 1;
    r.fr_phi = k == 4 ? 0.2 : 0.0;
    r.balance_pct = 0.1 * k;
    r.distance_pct = 0.5;
    r.cost_increase_pct = 0.1;
    rows.push_back(r);
  }
  rows[2].fr_ok = false;
  rows[2].note = "limit, hit";
  std::stringstream ss;
  write_bench_csv(ss, rows);
  const auto back = read_bench_csv(ss);
  REQUIRE(back.size() == rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(back[k].total_load == rows[k].total_load);
    CHECK(back[k].fr_cost == rows[k].fr_cost);
    CHECK(back[k].fr_ok == rows[k].fr_ok);
    CHECK(back[k].fr_phi == rows[k].fr_phi);
  }
  const BenchReport rep = aggregate(back, 0.05);
  CHECK(rep.instances == 5);
  CHECK(rep.failed == 1);
  CHECK(rep.fr_feasible == 3);
  CHECK(rep.ccga_time.count == 4);
  CHECK(rep.balance.count == 5);
  CHECK(rep.ccga_time.median == 3.0);
  std::ostringstream table;
  write_report_table(table, rep);
  CHECK(!table.str().empty());

  std::istringstream bad("not,a,header\n");
  CHECK_THROWS(read_bench_csv(bad));
}
