#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace scopf {

/// Nearest-rank percentile: the ⌈p/100·n⌉-th smallest value (p = 0 gives the minimum).
double nearest_rank(std::vector<double> values, double p);

double median_of(std::vector<double> values);

struct Summary {
  std::size_t count = 0;
  double median = 0.0, mean = 0.0, min = 0.0, max = 0.0, std = 0.0;
  double lo = 0.0, hi = 0.0;  // 2.5th / 97.5th nearest-rank percentiles
};

/// Population standard deviation; all zeros when `values` is empty.
Summary summarize(std::span<const double> values);

/// Generation ranges (MW) for the error breakdown, [lo, hi).
struct Band {
  double lo = 0.0, hi = 0.0;
};

std::vector<Band> default_bands();

struct BandError {
  Band band;
  std::size_t count = 0;  // (instance, generator) pairs whose label falls in the band
  double mae_pct = 0.0;   // mean of |ġ − g| / g · 100 over those pairs
};

/// `labels` and `predictions` are instance-major, one dispatch vector per instance.
std::vector<BandError> band_errors(const std::vector<std::vector<double>>& labels,
                                   const std::vector<std::vector<double>>& predictions,
                                   const std::vector<Band>& bands = default_bands());

/// Σ|ġ − g_f| / Σ g_f · 100.
double distance_pct(std::span<const double> prediction, std::span<const double> feasible);

/// |Σġ − Σd| / Σd · 100.
double balance_violation_pct(std::span<const double> prediction, double total_load);

/// One row of the benchmark CSV.
struct BenchRow {
  std::size_t index = 0;
  double total_load = 0.0;
  bool ccga_ok = false, fr_ok = false;
  double ccga_cost = 0.0, fr_cost = 0.0;
  double ccga_seconds = 0.0, fr_seconds = 0.0;
  int ccga_iterations = 0, fr_iterations = 0;
  double fr_phi = 0.0;
  double balance_pct = 0.0, rlv_pct = 0.0, distance_pct = 0.0, cost_increase_pct = 0.0;
  std::string note;
};

struct BenchReport {
  std::size_t instances = 0, failed = 0, fr_feasible = 0;
  std::vector<BandError> bands;
  Summary balance, rlv, distance, cost_increase, ccga_time, fr_time;
};

/// Pure aggregation of rows; failed rows only count toward `failed`.
BenchReport aggregate(const std::vector<BenchRow>& rows, double phi_tol, std::vector<BandError> bands = {});

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);
std::vector<BenchRow> read_bench_csv(std::istream& in);
void write_report_table(std::ostream& out, const BenchReport& report);

}  // namespace scopf
