#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scopf/grid.hpp"
#include "scopf/ptdf.hpp"

namespace scopf {

enum class Balance {
  Balanced,   // |residual| ≤ tol
  Shortfall,  // even n_s = 1 cannot cover the load; residual > 0
  Surplus,    // the surviving units already over-generate at n_s = 0; residual < 0
};

/// Post-contingency operating point for the loss of generator `contingency`.
struct ContingencyState {
  std::size_t contingency = 0;  // generator index
  double signal = 0.0;          // n_s ∈ [0, 1]
  std::vector<double> dispatch;           // g_s, MW
  std::vector<std::uint8_t> below_limit;  // x_s: 1 = responding linearly, 0 = pinned at ḡ
  double residual = 0.0;                  // e᷀ᵀd − e᷀ᵀg_s
  Balance balance = Balance::Balanced;
};

/// g_{s,i} = max{0, min{gᵢ + n·γᵢĝᵢ, ḡᵢ}} for i ≠ s and g_{s,s} = 0.
/// x_{s,i} = 1 iff gᵢ + n·γᵢĝᵢ < ḡᵢ (ties go to 0).
ContingencyState apr_response(const Grid& grid, std::span<const double> dispatch, double signal,
                              std::size_t contingency);

/// Total post-contingency generation e᷀ᵀg_s(n) without materialising g_s.
double response_total(const Grid& grid, std::span<const double> dispatch, double signal, std::size_t contingency);

/// Default bisection tolerance: 1e-6 × total load (MW), floored at 1e-9.
double default_balance_tol(double total_load);

/// Finds n_s with e᷀ᵀg_s(n_s) = total_load by bisection (at most 60 halvings
/// or |residual| ≤ tol). Unreachable balance is reported through `balance`
/// and `residual`, never thrown.
ContingencyState bisect_balance(const Grid& grid, std::span<const double> dispatch, std::size_t contingency,
                                double total_load, double tol);

inline ContingencyState bisect_balance(const Grid& grid, std::span<const double> dispatch,
                                       std::size_t contingency, const LoadVector& load, double tol) {
  return bisect_balance(grid, dispatch, contingency, load.total(), tol);
}

struct ViolationReport {
  // rows follow the order of the `states` passed in; columns are lines
  Eigen::MatrixXd tau_upper;  // τ⁺ ≥ 0, MW
  Eigen::MatrixXd tau_lower;  // τ⁻ ≥ 0, MW
  double phi = 0.0;           // max over states, lines and sides
  std::optional<std::size_t> phi_contingency;  // generator index attaining φ (lowest id on ties)
  std::optional<std::size_t> phi_line;
  bool phi_on_upper = true;
  std::vector<std::size_t> worst_line;  // per state
  std::vector<double> worst_value;      // per state, MW
};

/// Negative parts of the cut families evaluated at each g_s.
ViolationReport scan_violations(const Grid& grid, std::span<const ContingencyState> states, const FlowCuts& cuts);

/// Bisection + response for every contingency of the grid, in grid order.
std::vector<ContingencyState> contingency_states(const Grid& grid, std::span<const double> dispatch,
                                                 double total_load, double tol);

/// Full independent check of a nominal dispatch: nominal balance, bounds and
/// flows plus every contingency via bisection and scanning.
struct SecurityAudit {
  double nominal_imbalance = 0.0;   // |e᷀ᵀg − e᷀ᵀd|, MW
  double nominal_bound_violation = 0.0;  // MW outside [g_, ḡ]
  double nominal_flow_violation = 0.0;   // MW above f̄
  double max_balance_residual = 0.0;     // over contingencies, |residual|
  double phi = 0.0;
  std::optional<std::size_t> phi_contingency;
  std::optional<std::size_t> phi_line;

  bool secure(double line_tol, double balance_tol) const {
    return nominal_imbalance <= balance_tol && nominal_bound_violation <= 1e-6 &&
           nominal_flow_violation <= line_tol && max_balance_residual <= balance_tol && phi <= line_tol;
  }
};

SecurityAudit audit_dispatch(const Grid& grid, const FlowCuts& cuts, std::span<const double> dispatch,
                             double total_load, double balance_tol);

}  // namespace scopf
