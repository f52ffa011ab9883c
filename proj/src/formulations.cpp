#include "scopf/formulations.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace scopf {

namespace {

constexpr double kDropCoef = 1e-10;

std::string tag(const char* base, std::size_t a) { return std::string(base) + "_" + std::to_string(a); }
std::string tag(const char* base, std::size_t a, std::size_t b) {
  return std::string(base) + "_" + std::to_string(a) + "_" + std::to_string(b);
}

std::vector<int> add_dispatch_columns(MilpModel& m, const Grid& grid, const char* base, std::size_t block,
                                      std::optional<std::size_t> failed) {
  std::vector<int> cols;
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    const auto& g = grid.generators()[i];
    const bool out = failed && *failed == i;
    const double lo = out ? 0.0 : (failed ? 0.0 : g.p_min);
    const double hi = out ? 0.0 : g.p_max;
    cols.push_back(m.add_variable(failed ? tag(base, block, i) : tag(base, i), lo, hi));
  }
  return cols;
}

void add_balance(MilpModel& m, const std::vector<int>& cols, double total, std::string name) {
  m.add_constraint(std::move(name), cols, std::vector<double>(cols.size(), 1.0), total, total);
}

/// One ranged row per line: −k2 ≤ k1·g ≤ k3 covers both cut families.
void add_flow_row(MilpModel& m, const FlowCuts& cuts, const std::vector<int>& cols, std::size_t line, double lower,
                  double upper, std::string name) {
  std::vector<int> idx;
  std::vector<double> coef;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const double c = cuts.k1(static_cast<Eigen::Index>(line), static_cast<Eigen::Index>(i));
    if (std::abs(c) <= kDropCoef) continue;
    idx.push_back(cols[i]);
    coef.push_back(c);
  }
  m.add_constraint(std::move(name), std::move(idx), std::move(coef), lower, upper);
}

void add_all_flow_rows(MilpModel& m, const FlowCuts& cuts, const std::vector<int>& cols, const std::string& prefix) {
  for (std::size_t l = 0; l < static_cast<std::size_t>(cuts.k1.rows()); ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    add_flow_row(m, cuts, cols, l, -cuts.k2(li), cuts.k3(li), prefix + "_" + std::to_string(l));
  }
}

std::vector<int> add_cost_epigraph(MilpModel& m, const Grid& grid, const std::vector<int>& g) {
  std::vector<int> z;
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    const auto& curve = grid.generators()[i].cost;
    const int zi = m.add_variable(tag("cost", i), -kInf, kInf, VarType::Continuous, 1.0);
    z.push_back(zi);
    // z ≥ c_k + slope_k (g − p_k) for each segment
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
      const double slope = (curve[k + 1].cost - curve[k].cost) / (curve[k + 1].mw - curve[k].mw);
      m.add_constraint(tag("epi", i, k), {zi, g[i]}, {1.0, -slope}, curve[k].cost - slope * curve[k].mw, kInf);
    }
  }
  return z;
}

/// Big-M APR response for contingency s on dispatch columns gs; returns (n, x).
std::pair<int, std::vector<int>> add_apr_block(MilpModel& m, const Grid& grid, std::size_t position,
                                               std::size_t s, const std::vector<int>& g, const std::vector<int>& gs) {
  const int n = m.add_variable(tag("n", position), 0.0, 1.0);
  std::vector<int> x;
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    const bool failed = i == s;
    x.push_back(m.add_variable(tag("x", position, i), 0.0, failed ? 0.0 : 1.0, VarType::Binary));
  }
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    if (i == s) continue;
    const auto& gen = grid.generators()[i];
    const double gmax = gen.p_max;
    const double r = gen.response_limit();
    // |g_si − g_i − n r| ≤ ḡ(1 − x)
    m.add_constraint(tag("apr_up", position, i), {gs[i], g[i], n, x[i]}, {1.0, -1.0, -r, gmax}, -kInf, gmax);
    m.add_constraint(tag("apr_lo", position, i), {gs[i], g[i], n, x[i]}, {1.0, -1.0, -r, -gmax}, -gmax, kInf);
    // g_i + n r ≥ ḡ(1 − x)
    m.add_constraint(tag("apr_sat", position, i), {g[i], n, x[i]}, {1.0, r, gmax}, gmax, kInf);
    // g_si ≥ ḡ(1 − x)
    m.add_constraint(tag("apr_pin", position, i), {gs[i], x[i]}, {1.0, gmax}, gmax, kInf);
  }
  return {n, x};
}

Formulation build_master_common(const Grid& grid, const FlowCuts& cuts, const LoadVector& load,
                                const CutSet& cut_set, bool cost_objective) {
  Formulation f;
  auto& m = f.model;
  auto& ix = f.index;
  const double total = load.total();

  ix.dispatch = add_dispatch_columns(m, grid, "g", 0, std::nullopt);
  if (cost_objective) ix.cost = add_cost_epigraph(m, grid, ix.dispatch);
  add_balance(m, ix.dispatch, total, "balance");
  add_all_flow_rows(m, cuts, ix.dispatch, "flow");

  const auto& cont = grid.contingencies();
  ix.contingency_dispatch.resize(cont.size());
  ix.signal.assign(cont.size(), -1);
  ix.below_limit.resize(cont.size());
  for (std::size_t k = 0; k < cont.size(); ++k) {
    const std::size_t s = cont[k];
    auto& gp = ix.contingency_dispatch[k];
    gp = add_dispatch_columns(m, grid, "gp", k, s);
    add_balance(m, gp, total, tag("balance_s", k));
    for (std::size_t i = 0; i < grid.num_generators(); ++i) {
      if (i == s) continue;
      // g′_s − g ≤ r̄
      m.add_constraint(tag("ramp", k, i), {gp[i], ix.dispatch[i]}, {1.0, -1.0}, -kInf,
                       grid.generators()[i].response_limit());
    }
    if (cut_set.contains_state(s)) {
      auto [n, x] = add_apr_block(m, grid, k, s, ix.dispatch, gp);
      ix.signal[k] = n;
      ix.below_limit[k] = std::move(x);
    }
  }

  std::vector<std::size_t> position(grid.num_generators(), cont.size());
  for (std::size_t k = 0; k < cont.size(); ++k) position[cont[k]] = k;
  for (const auto& [line, s] : cut_set.upper()) {
    const auto li = static_cast<Eigen::Index>(line);
    add_flow_row(m, cuts, ix.contingency_dispatch[position[s]], line, -cuts.k2(li), kInf, tag("cut_up", line, s));
  }
  for (const auto& [line, s] : cut_set.lower()) {
    const auto li = static_cast<Eigen::Index>(line);
    add_flow_row(m, cuts, ix.contingency_dispatch[position[s]], line, -kInf, cuts.k3(li), tag("cut_lo", line, s));
  }
  return f;
}

}  // namespace

bool CutSet::includes(const CutSet& other) const {
  return std::includes(states_.begin(), states_.end(), other.states_.begin(), other.states_.end()) &&
         std::includes(upper_.begin(), upper_.end(), other.upper_.begin(), other.upper_.end()) &&
         std::includes(lower_.begin(), lower_.end(), other.lower_.begin(), other.lower_.end());
}

std::vector<double> Formulation::nominal_dispatch(std::span<const double> x) const {
  std::vector<double> g;
  for (int j : index.dispatch) g.push_back(x[static_cast<std::size_t>(j)]);
  return g;
}

std::vector<double> Formulation::contingency_dispatch(std::span<const double> x, std::size_t position) const {
  std::vector<double> g;
  for (int j : index.contingency_dispatch.at(position)) g.push_back(x[static_cast<std::size_t>(j)]);
  return g;
}

double Formulation::epigraph_cost(std::span<const double> x) const {
  double c = 0.0;
  for (int j : index.cost) c += x[static_cast<std::size_t>(j)];
  return c;
}

Formulation build_extensive(const Grid& grid, const FlowCuts& cuts, const LoadVector& load) {
  Formulation f;
  auto& m = f.model;
  auto& ix = f.index;
  const double total = load.total();

  ix.dispatch = add_dispatch_columns(m, grid, "g", 0, std::nullopt);
  ix.cost = add_cost_epigraph(m, grid, ix.dispatch);
  add_balance(m, ix.dispatch, total, "balance");
  add_all_flow_rows(m, cuts, ix.dispatch, "flow");

  const auto& cont = grid.contingencies();
  ix.contingency_dispatch.resize(cont.size());
  ix.signal.assign(cont.size(), -1);
  ix.below_limit.resize(cont.size());
  for (std::size_t k = 0; k < cont.size(); ++k) {
    const std::size_t s = cont[k];
    auto& gs = ix.contingency_dispatch[k];
    gs = add_dispatch_columns(m, grid, "gs", k, s);
    add_balance(m, gs, total, tag("balance_s", k));
    add_all_flow_rows(m, cuts, gs, tag("flow_s", k));
    auto [n, x] = add_apr_block(m, grid, k, s, ix.dispatch, gs);
    ix.signal[k] = n;
    ix.below_limit[k] = std::move(x);
  }
  return f;
}

Formulation build_master(const Grid& grid, const FlowCuts& cuts, const LoadVector& load, const CutSet& cut_set) {
  return build_master_common(grid, cuts, load, cut_set, true);
}

Formulation build_fr_master(const Grid& grid, const FlowCuts& cuts, const LoadVector& load, const CutSet& cut_set,
                            std::span<const double> prediction) {
  if (prediction.size() != grid.num_generators())
    throw std::invalid_argument("build_fr_master: prediction length mismatch");
  Formulation f = build_master_common(grid, cuts, load, cut_set, false);
  auto& m = f.model;
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    // g − ġ = up − down with both parts priced
    const int up = m.add_variable(tag("dist_up", i), 0.0, kInf, VarType::Continuous, 1.0);
    const int down = m.add_variable(tag("dist_down", i), 0.0, kInf, VarType::Continuous, 1.0);
    m.add_constraint(tag("dist", i), {f.index.dispatch[i], up, down}, {1.0, -1.0, 1.0}, prediction[i], prediction[i]);
    f.index.distance.push_back(up);
    f.index.distance.push_back(down);
  }
  return f;
}

}  // namespace scopf
