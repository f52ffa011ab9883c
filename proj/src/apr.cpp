#include "scopf/apr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scopf {

namespace {

constexpr int kMaxBisections = 60;

inline double clipped(double g, double signal, double response, double upper) {
  return std::max(0.0, std::min(g + signal * response, upper));
}

}  // namespace

double default_balance_tol(double total_load) { return std::max(1e-9, 1e-6 * std::abs(total_load)); }

double response_total(const Grid& grid, std::span<const double> dispatch, double signal, std::size_t contingency) {
  const auto& gens = grid.generators();
  double total = 0.0;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (i == contingency) continue;
    total += clipped(dispatch[i], signal, gens[i].response_limit(), gens[i].p_max);
  }
  return total;
}

ContingencyState apr_response(const Grid& grid, std::span<const double> dispatch, double signal,
                              std::size_t contingency) {
  const auto& gens = grid.generators();
  if (dispatch.size() != gens.size()) throw std::invalid_argument("apr_response: dispatch length mismatch");
  ContingencyState st;
  st.contingency = contingency;
  st.signal = signal;
  st.dispatch.assign(gens.size(), 0.0);
  st.below_limit.assign(gens.size(), 0);
  for (std::size_t i = 0; i < gens.size(); ++i) {
    if (i == contingency) continue;
    const double target = dispatch[i] + signal * gens[i].response_limit();
    st.dispatch[i] = clipped(dispatch[i], signal, gens[i].response_limit(), gens[i].p_max);
    st.below_limit[i] = target < gens[i].p_max ? 1 : 0;
  }
  return st;
}

ContingencyState bisect_balance(const Grid& grid, std::span<const double> dispatch, std::size_t contingency,
                                double total_load, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("bisect_balance: tol must be positive");
  if (dispatch.size() != grid.num_generators())
    throw std::invalid_argument("bisect_balance: dispatch length mismatch");

  auto finish = [&](double signal, Balance balance) {
    auto st = apr_response(grid, dispatch, signal, contingency);
    st.residual = total_load - std::accumulate(st.dispatch.begin(), st.dispatch.end(), 0.0);
    st.balance = balance;
    return st;
  };

  const double at_zero = response_total(grid, dispatch, 0.0, contingency);
  if (at_zero >= total_load - tol)
    return finish(0.0, at_zero <= total_load + tol ? Balance::Balanced : Balance::Surplus);
  const double at_one = response_total(grid, dispatch, 1.0, contingency);
  if (at_one < total_load - tol) return finish(1.0, Balance::Shortfall);

  double lo = 0.0, hi = 1.0, mid = 1.0;
  for (int k = 0; k < kMaxBisections; ++k) {
    mid = 0.5 * (lo + hi);
    const double total = response_total(grid, dispatch, mid, contingency);
    if (std::abs(total - total_load) <= tol) break;
    if (total < total_load)
      lo = mid;
    else
      hi = mid;
  }
  auto st = finish(mid, Balance::Balanced);
  if (std::abs(st.residual) > tol) {
    // numerically flat bracket; the upper end is guaranteed to cover the load
    st = finish(hi, Balance::Balanced);
  }
  return st;
}

std::vector<ContingencyState> contingency_states(const Grid& grid, std::span<const double> dispatch,
                                                 double total_load, double tol) {
  std::vector<ContingencyState> out;
  out.reserve(grid.contingencies().size());
  for (auto s : grid.contingencies()) out.push_back(bisect_balance(grid, dispatch, s, total_load, tol));
  return out;
}

ViolationReport scan_violations(const Grid& grid, std::span<const ContingencyState> states, const FlowCuts& cuts) {
  const auto nl = cuts.k1.rows();
  ViolationReport rep;
  rep.tau_upper = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states.size()), nl);
  rep.tau_lower = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states.size()), nl);
  rep.worst_line.assign(states.size(), 0);
  rep.worst_value.assign(states.size(), 0.0);
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd up = cuts.upper(states[k].dispatch);
    const Eigen::VectorXd lo = cuts.lower(states[k].dispatch);
    for (Eigen::Index l = 0; l < nl; ++l) {
      const double tu = std::max(0.0, -up(l));
      const double tl = std::max(0.0, -lo(l));
      rep.tau_upper(row, l) = tu;
      rep.tau_lower(row, l) = tl;
      const double worst = std::max(tu, tl);
      if (worst > rep.worst_value[k]) {
        rep.worst_value[k] = worst;
        rep.worst_line[k] = static_cast<std::size_t>(l);
      }
      for (bool upper : {true, false}) {
        const double v = upper ? tu : tl;
        if (v <= 0.0) continue;
        const std::size_t s = states[k].contingency;
        const bool better = v > rep.phi ||
                            (v == rep.phi && rep.phi_contingency &&
                             grid.generators()[s].id < grid.generators()[*rep.phi_contingency].id);
        if (better) {
          rep.phi = v;
          rep.phi_contingency = s;
          rep.phi_line = static_cast<std::size_t>(l);
          rep.phi_on_upper = upper;
        }
      }
    }
  }
  return rep;
}

SecurityAudit audit_dispatch(const Grid& grid, const FlowCuts& cuts, std::span<const double> dispatch,
                             double total_load, double balance_tol) {
  SecurityAudit audit;
  const double gen_total = std::accumulate(dispatch.begin(), dispatch.end(), 0.0);
  audit.nominal_imbalance = std::abs(gen_total - total_load);
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    const auto& g = grid.generators()[i];
    audit.nominal_bound_violation =
        std::max({audit.nominal_bound_violation, g.p_min - dispatch[i], dispatch[i] - g.p_max});
  }
  if (cuts.k1.rows() > 0)
    audit.nominal_flow_violation =
        std::max(0.0, std::max(-cuts.upper(dispatch).minCoeff(), -cuts.lower(dispatch).minCoeff()));

  const auto states = contingency_states(grid, dispatch, total_load, balance_tol);
  for (const auto& st : states) audit.max_balance_residual = std::max(audit.max_balance_residual, std::abs(st.residual));
  const auto rep = scan_violations(grid, states, cuts);
  audit.phi = rep.phi;
  audit.phi_contingency = rep.phi_contingency;
  audit.phi_line = rep.phi_line;
  return audit;
}

}  // namespace scopf
