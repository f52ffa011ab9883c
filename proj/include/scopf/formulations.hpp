#pragma once

#include <set>
#include <span>
#include <utility>
#include <vector>

#include "scopf/grid.hpp"
#include "scopf/milp.hpp"
#include "scopf/ptdf.hpp"

namespace scopf {

/// CCGA working sets. Contingencies are generator indices; pairs are
/// (line index, generator index). Only ever grows.
class CutSet {
public:
  bool add_state(std::size_t s) { return states_.insert(s).second; }
  bool add_upper(std::size_t line, std::size_t s) { return upper_.insert({line, s}).second; }
  bool add_lower(std::size_t line, std::size_t s) { return lower_.insert({line, s}).second; }

  const std::set<std::size_t>& states() const { return states_; }
  const std::set<std::pair<std::size_t, std::size_t>>& upper() const { return upper_; }
  const std::set<std::pair<std::size_t, std::size_t>>& lower() const { return lower_; }

  bool contains_state(std::size_t s) const { return states_.count(s) > 0; }
  std::size_t num_pairs() const { return upper_.size() + lower_.size(); }
  bool empty() const { return states_.empty() && upper_.empty() && lower_.empty(); }

  /// True when every element of `other` is also in this set.
  bool includes(const CutSet& other) const;

private:
  std::set<std::size_t> states_;
  std::set<std::pair<std::size_t, std::size_t>> upper_;
  std::set<std::pair<std::size_t, std::size_t>> lower_;
};

/// Maps model columns back to (g, g_s / g′_s, x_s, n_s). Contingency blocks are
/// indexed by position in grid.contingencies(); -1 / empty when absent.
struct FormulationIndex {
  std::vector<int> dispatch;        // g
  std::vector<int> cost;            // epigraph of hᵢ(gᵢ), empty for the FR master
  std::vector<int> distance;        // positive and negative parts of g − ġ, FR master only
  std::vector<std::vector<int>> contingency_dispatch;  // g_s (extensive) or g′_s (master)
  std::vector<int> signal;                             // n_s
  std::vector<std::vector<int>> below_limit;           // x_s
};

struct Formulation {
  MilpModel model;
  FormulationIndex index;

  std::vector<double> nominal_dispatch(std::span<const double> x) const;
  std::vector<double> contingency_dispatch(std::span<const double> x, std::size_t position) const;
  /// h(g) from the epigraph columns (equals Σ hᵢ(gᵢ) at an optimum).
  double epigraph_cost(std::span<const double> x) const;
};

/// All contingencies with full APR blocks and flow limits (MILP with
/// |𝒮|·|𝒢| binaries). Objective h(g) via epigraph columns.
Formulation build_extensive(const Grid& grid, const FlowCuts& cuts, const LoadVector& load);

/// CCGA master: g, g′_s for every s ∈ 𝒮 with ramp, capacity and demand rows;
/// APR blocks only for s ∈ 𝕊; flow cut rows only for pairs in 𝕌⁺/𝕌⁻.
Formulation build_master(const Grid& grid, const FlowCuts& cuts, const LoadVector& load, const CutSet& cut_set);

/// Same feasible set as build_master, objective ‖ġ − g‖₁.
Formulation build_fr_master(const Grid& grid, const FlowCuts& cuts, const LoadVector& load, const CutSet& cut_set,
                            std::span<const double> prediction);

}  // namespace scopf
