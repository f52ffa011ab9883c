#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "scopf/apr.hpp"
#include "scopf/formulations.hpp"
#include "scopf/grid.hpp"
#include "scopf/milp.hpp"
#include "scopf/ptdf.hpp"

namespace scopf {

struct CcgaConfig {
  double epsilon = 0.05;              // MW, line-violation tolerance
  std::optional<double> beta;         // MW, cut-addition threshold; defaults to epsilon
  double rel_gap = 0.0025;
  double time_limit = kInf;           // seconds, whole run
  int max_iterations = 100;
  double balance_tol_rel = 1e-6;      // bisection tolerance relative to total load
  unsigned threads = 1;               // per-contingency bisection workers
  bool warm_start = true;             // seed each master with the previous APR regimes

  double cut_threshold() const { return beta.value_or(epsilon); }
  void validate() const;
};

enum class CcgaStatus { Converged, Infeasible, IterationLimit, TimeLimit, Stalled, SolverError, Stopped };

const char* to_string(CcgaStatus status);

struct IterationTrace {
  int iteration = 0;
  double seconds = 0.0;     // since the start of the run
  double objective = 0.0;   // master objective
  double bound = 0.0;       // master best bound
  double phi = 0.0;
  std::size_t num_states = 0;
  std::size_t num_cuts = 0;
  double max_residual = 0.0;  // max |residual| of the bisections on this master point
  std::vector<double> dispatch;  // g^j
};

struct CcgaResult {
  CcgaStatus status = CcgaStatus::SolverError;
  std::string message;
  std::vector<double> dispatch;             // g*
  std::vector<ContingencyState> states;     // per contingency, grid order
  double objective = 0.0;                   // last master objective (cost, or L1 distance for FR)
  double bound = 0.0;                       // last master best bound
  double cost = 0.0;                        // h(g*) evaluated directly
  double distance = 0.0;                    // ‖ġ − g*‖₁ (FR runs)
  int iterations = 0;
  double phi = 0.0;
  CutSet cuts;
  std::vector<IterationTrace> trace;
  double wall_seconds = 0.0;
  double build_seconds = 0.0;               // spent assembling master models
  SecurityAudit audit;
  bool audit_passed = false;

  bool ok() const { return status == CcgaStatus::Converged; }
  /// Wall time with model assembly excluded.
  double solve_seconds() const { return wall_seconds - build_seconds; }
};

/// Called after every master solve + scan. Return false to stop the run.
using IterationObserver = std::function<bool(const IterationTrace&)>;

/// Precomputed per-load data shared by the drivers.
struct CcgaProblem {
  const Grid& grid;
  LoadVector load;
  FlowCuts cuts;

  CcgaProblem(const Grid& g, const PtdfModel& ptdf, LoadVector d)
      : grid(g), load(std::move(d)), cuts(flow_cuts(ptdf, g, load.mw)) {}
};

CcgaResult run_ccga(const CcgaProblem& problem, const CcgaConfig& cfg, SolverBackend& backend,
                    const IterationObserver& observer = {});

/// Feasibility recovery: the closest feasible dispatch (L1) to `prediction`.
CcgaResult run_fr_ccga(const CcgaProblem& problem, std::span<const double> prediction, const CcgaConfig& cfg,
                       SolverBackend& backend, const IterationObserver& observer = {});

void write_trace_csv(std::ostream& out, const CcgaResult& result);

struct GapPoint {
  double seconds = 0.0;
  double lower = -kInf;
  double upper = kInf;
  double gap = kInf;      // (upper − lower) / |upper|
  std::string source;     // "ccga" or "fr-ccga"
};

struct GapTrace {
  std::vector<GapPoint> points;
  CcgaResult lower_run;   // CCGA
  CcgaResult upper_run;   // FR-CCGA
  double lower = -kInf;
  double upper = kInf;
  double gap = kInf;
  bool gap_closed = false;
};

/// Runs FR-CCGA (upper bounds) and CCGA (lower bounds) concurrently on two
/// backend handles; stops once the relative gap is within cfg.rel_gap or both
/// runs finish.
GapTrace run_bounds_race(const CcgaProblem& problem, std::span<const double> prediction, const CcgaConfig& cfg,
                         SolverBackend& lower_backend, SolverBackend& upper_backend);

void write_gap_csv(std::ostream& out, const GapTrace& trace);

}  // namespace scopf
