#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scopf/grid.hpp"

namespace scopf {

/// Power transfer distribution factors. `k0(l, b)` is the MW flow on line l
/// (from → to) per MW injected at bus b and withdrawn at the reference bus.
struct PtdfModel {
  Eigen::MatrixXd k0;  // lines × buses
  std::size_t ref_bus_index = 0;

  /// Flows for a nodal injection vector (generation minus load, MW).
  Eigen::VectorXd flows(const Eigen::VectorXd& injection) const { return k0 * injection; }
};

/// Factorizes the reduced nodal susceptance matrix (reference bus removed)
/// and back-solves once per line. Throws GridError(Disconnected) when the
/// reduced matrix is singular.
PtdfModel build_ptdf(const Grid& grid);

/// Generator-to-bus incidence B (buses × generators).
Eigen::MatrixXd generator_incidence(const Grid& grid);

/// Post-contingency thermal limits for a fixed load d, written as two
/// families of rows that are feasible iff nonnegative:
///   upper:  k1·g + k2 ≥ 0   (flow ≤ f̄)
///   lower: −k1·g + k3 ≥ 0   (flow ≥ −f̄)
/// with k1 = −K0·B, k2 = f̄ + K0·d, k3 = f̄ − K0·d.
struct FlowCuts {
  Eigen::MatrixXd k1;  // lines × generators
  Eigen::VectorXd k2;
  Eigen::VectorXd k3;

  Eigen::VectorXd upper(std::span<const double> g) const;
  Eigen::VectorXd lower(std::span<const double> g) const;
  /// Line flows implied by dispatch g: −k1·g + (k3 − k2)/2.
  Eigen::VectorXd flows(std::span<const double> g) const;
};

FlowCuts flow_cuts(const PtdfModel& ptdf, const Grid& grid, std::span<const double> load);

inline Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace scopf
