#include "scopf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace scopf {

double nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("nearest_rank: no values");
  if (p < 0 || p > 100) throw std::invalid_argument("nearest_rank: p outside [0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p / 100.0 * n)));
  return values[std::min(rank, values.size()) - 1];
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::vector<double> v(values.begin(), values.end());
  s.median = median_of(v);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  s.lo = nearest_rank(v, 2.5);
  s.hi = nearest_rank(v, 97.5);
  return s;
}

std::vector<Band> default_bands() {
  return {{10, 50}, {50, 100}, {100, 250}, {250, 500}, {500, 1000}, {1000, 2000}, {2000, 5000}};
}

std::vector<BandError> band_errors(const std::vector<std::vector<double>>& labels,
                                   const std::vector<std::vector<double>>& predictions,
                                   const std::vector<Band>& bands) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("band_errors: instance count mismatch");
  std::vector<BandError> out;
  for (const auto& b : bands) out.push_back({b, 0, 0.0});
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t].size() != predictions[t].size()) throw std::invalid_argument("band_errors: length mismatch");
    for (std::size_t i = 0; i < labels[t].size(); ++i) {
      const double g = labels[t][i];
      for (auto& e : out)
        if (g >= e.band.lo && g < e.band.hi) {
          e.mae_pct += std::abs(predictions[t][i] - g) / g * 100.0;
          ++e.count;
        }
    }
  }
  for (auto& e : out)
    if (e.count) e.mae_pct /= static_cast<double>(e.count);
  return out;
}

double distance_pct(std::span<const double> prediction, std::span<const double> feasible) {
  if (prediction.size() != feasible.size()) throw std::invalid_argument("distance_pct: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < feasible.size(); ++i) {
    num += std::abs(prediction[i] - feasible[i]);
    den += feasible[i];
  }
  return den > 0 ? num / den * 100.0 : 0.0;
}

double balance_violation_pct(std::span<const double> prediction, double total_load) {
  const double g = std::accumulate(prediction.begin(), prediction.end(), 0.0);
  return total_load != 0 ? std::abs(g - total_load) / std::abs(total_load) * 100.0 : 0.0;
}

BenchReport aggregate(const std::vector<BenchRow>& rows, double phi_tol, std::vector<BandError> bands) {
  BenchReport r;
  r.instances = rows.size();
  r.bands = std::move(bands);
  std::vector<double> bal, rlv, dist, inc, tc, tf;
  for (const auto& row : rows) {
    bal.push_back(row.balance_pct);
    rlv.push_back(row.rlv_pct);
    if (!row.ccga_ok || !row.fr_ok) {
      ++r.failed;
      continue;
    }
    if (row.fr_phi <= phi_tol) ++r.fr_feasible;
    dist.push_back(row.distance_pct);
    inc.push_back(row.cost_increase_pct);
    tc.push_back(row.ccga_seconds);
    tf.push_back(row.fr_seconds);
  }
  r.balance = summarize(bal);
  r.rlv = summarize(rlv);
  r.distance = summarize(dist);
  r.cost_increase = summarize(inc);
  r.ccga_time = summarize(tc);
  r.fr_time = summarize(tf);
  return r;
}

namespace {

constexpr const char* kHeader =
    "index,total_load,ccga_ok,fr_ok,ccga_cost,fr_cost,ccga_seconds,fr_seconds,ccga_iterations,fr_iterations,"
    "fr_phi,balance_pct,rlv_pct,distance_pct,cost_increase_pct,note";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    out << r.index << ',' << num(r.total_load) << ',' << r.ccga_ok << ',' << r.fr_ok << ',' << num(r.ccga_cost) << ','
        << num(r.fr_cost) << ',' << num(r.ccga_seconds) << ',' << num(r.fr_seconds) << ',' << r.ccga_iterations << ','
        << r.fr_iterations << ',' << num(r.fr_phi) << ',' << num(r.balance_pct) << ',' << num(r.rlv_pct) << ','
        << num(r.distance_pct) << ',' << num(r.cost_increase_pct) << ',' << note << '\n';
  }
}

std::vector<BenchRow> read_bench_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw std::runtime_error("bench CSV: unexpected header");
  std::vector<BenchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 15) f.emplace_back();
    if (f.size() != 16) throw std::runtime_error("bench CSV: bad row: " + line);
    BenchRow r;
    r.index = std::stoull(f[0]);
    r.total_load = std::stod(f[1]);
    r.ccga_ok = f[2] == "1";
    r.fr_ok = f[3] == "1";
    r.ccga_cost = std::stod(f[4]);
    r.fr_cost = std::stod(f[5]);
    r.ccga_seconds = std::stod(f[6]);
    r.fr_seconds = std::stod(f[7]);
    r.ccga_iterations = std::stoi(f[8]);
    r.fr_iterations = std::stoi(f[9]);
    r.fr_phi = std::stod(f[10]);
    r.balance_pct = std::stod(f[11]);
    r.rlv_pct = std::stod(f[12]);
    r.distance_pct = std::stod(f[13]);
    r.cost_increase_pct = std::stod(f[14]);
    r.note = f[15];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_report_table(std::ostream& out, const BenchReport& r) {
  char buf[256];
  out << "instances " << r.instances << ", failed " << r.failed << ", FR feasible " << r.fr_feasible << '\n';
  if (!r.bands.empty()) {
    out << "\nprediction MAE by generation range (%)\n";
    for (const auto& b : r.bands) {
      if (b.count)
        std::snprintf(buf, sizeof buf, "  %6.0f-%-6.0f MW  %8.3f  (%zu)\n", b.band.lo, b.band.hi, b.mae_pct, b.count);
      else
        std::snprintf(buf, sizeof buf, "  %6.0f-%-6.0f MW  %8s\n", b.band.lo, b.band.hi, "N/A");
      out << buf;
    }
  }
  out << "\n                      median   2.5%    97.5%\n";
  auto interval = [&](const char* name, const Summary& s) {
    std::snprintf(buf, sizeof buf, "  %-18s %8.3f %8.3f %8.3f\n", name, s.median, s.lo, s.hi);
    out << buf;
  };
  interval("balance (%)", r.balance);
  interval("RLV (%)", r.rlv);
  interval("distance (%)", r.distance);
  out << "\n                      median     mean      min      max      std\n";
  auto stats = [&](const char* name, const Summary& s) {
    std::snprintf(buf, sizeof buf, "  %-18s %8.3f %8.3f %8.3f %8.3f %8.3f\n", name, s.median, s.mean, s.min, s.max,
                  s.std);
    out << buf;
  };
  stats("CCGA time (s)", r.ccga_time);
  stats("FR-CCGA time (s)", r.fr_time);
  stats("cost increase (%)", r.cost_increase);
}

}  // namespace scopf
