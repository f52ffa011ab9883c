#include "scopf/ccga.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <thread>

namespace scopf {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<ContingencyState> parallel_states(const Grid& grid, std::span<const double> g, double total, double tol,
                                              unsigned threads) {
  const auto& cont = grid.contingencies();
  if (threads <= 1 || cont.size() < 2 * threads) return contingency_states(grid, g, total, tol);
  std::vector<ContingencyState> out(cont.size());
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < cont.size(); k += threads) out[k] = bisect_balance(grid, g, cont[k], total, tol);
    });
  pool.clear();
  return out;
}

CcgaResult run_loop(const CcgaProblem& p, std::optional<std::span<const double>> prediction, const CcgaConfig& cfg,
                    SolverBackend& backend, const IterationObserver& observer) {
  cfg.validate();
  const auto t0 = Clock::now();
  const Grid& grid = p.grid;
  const double total = p.load.total();
  const double tol = std::max(1e-9, cfg.balance_tol_rel * std::abs(total));

  CcgaResult res;
  if (p.load.exceeds_capacity) {
    res.status = CcgaStatus::Infeasible;
    res.message = "total load exceeds total generator capability";
    return res;
  }

  bool finished = false;
  for (int j = 0; j < cfg.max_iterations && !finished; ++j) {
    const double elapsed = since(t0);
    if (elapsed >= cfg.time_limit) {
      res.status = CcgaStatus::TimeLimit;
      res.message = "time limit reached";
      break;
    }
    const auto tb = Clock::now();
    const Formulation master = prediction ? build_fr_master(grid, p.cuts, p.load, res.cuts, *prediction)
                                          : build_master(grid, p.cuts, p.load, res.cuts);
    res.build_seconds += since(tb);

    SolveOptions opts;
    opts.rel_gap = cfg.rel_gap;
    opts.time_limit = cfg.time_limit - elapsed;
    if (cfg.warm_start && !res.states.empty()) {
      // warm start: the regime the previous dispatch actually lands in
      for (std::size_t k = 0; k < master.index.below_limit.size(); ++k)
        for (std::size_t i = 0; i < master.index.below_limit[k].size(); ++i)
          opts.start.emplace_back(master.index.below_limit[k][i], res.states[k].below_limit[i]);
    }
    const SolveResult sol = backend.solve(master.model, opts);
    if (!sol.has_solution()) {
      if (sol.status == SolveStatus::Infeasible) {
        res.status = CcgaStatus::Infeasible;
        res.message = "master problem infeasible";
      } else if (sol.status == SolveStatus::TimeLimit) {
        res.status = CcgaStatus::TimeLimit;
        res.message = "time limit reached inside master solve";
      } else {
        res.status = CcgaStatus::SolverError;
        res.message = std::string("master solve failed: ") + to_string(sol.status);
      }
      break;
    }

    res.iterations = j + 1;
    res.dispatch = master.nominal_dispatch(sol.x);
    res.objective = sol.objective;
    res.bound = sol.best_bound;
    res.states = parallel_states(grid, res.dispatch, total, tol, cfg.threads);
    const ViolationReport rep = scan_violations(grid, res.states, p.cuts);
    res.phi = rep.phi;

    IterationTrace it;
    it.iteration = j;
    it.objective = sol.objective;
    it.bound = sol.best_bound;
    it.phi = rep.phi;
    it.num_states = res.cuts.states().size();
    it.num_cuts = res.cuts.num_pairs();
    for (const auto& st : res.states) it.max_residual = std::max(it.max_residual, std::abs(st.residual));
    it.dispatch = res.dispatch;
    it.seconds = since(t0);
    res.trace.push_back(it);
    const bool keep_going = !observer || observer(it);

    if (rep.phi <= cfg.epsilon) {
      res.status = CcgaStatus::Converged;
      finished = true;
      break;
    }

    bool grew = false;
    if (rep.phi_contingency) grew = res.cuts.add_state(*rep.phi_contingency) || grew;
    const double beta = cfg.cut_threshold();
    for (std::size_t k = 0; k < res.states.size(); ++k) {
      const std::size_t s = res.states[k].contingency;
      for (Eigen::Index l = 0; l < rep.tau_upper.cols(); ++l) {
        const auto kk = static_cast<Eigen::Index>(k);
        if (rep.tau_upper(kk, l) > beta) grew = res.cuts.add_upper(static_cast<std::size_t>(l), s) || grew;
        if (rep.tau_lower(kk, l) > beta) grew = res.cuts.add_lower(static_cast<std::size_t>(l), s) || grew;
      }
    }
    if (!keep_going) {
      res.status = CcgaStatus::Stopped;
      res.message = "stopped by observer";
      break;
    }
    if (!grew) {
      res.status = CcgaStatus::Stalled;
      res.message = "violation above epsilon but no new state or cut to add";
      break;
    }
    if (j + 1 == cfg.max_iterations) {
      res.status = CcgaStatus::IterationLimit;
      res.message = "iteration limit reached";
    }
  }

  if (!res.dispatch.empty()) {
    res.cost = grid.cost(res.dispatch);
    if (prediction) {
      res.distance = 0.0;
      for (std::size_t i = 0; i < res.dispatch.size(); ++i) res.distance += std::abs((*prediction)[i] - res.dispatch[i]);
    }
    // never trust the backend alone
    res.audit = audit_dispatch(grid, p.cuts, res.dispatch, total, tol);
    res.audit_passed = res.audit.secure(cfg.epsilon, std::max(tol, 1e-6 * std::max(1.0, std::abs(total))));
  }
  res.wall_seconds = since(t0);
  return res;
}

}  // namespace

void CcgaConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("ccga: epsilon must be > 0");
  if (beta && !(*beta >= 0.0)) throw std::invalid_argument("ccga: beta must be >= 0");
  if (!(rel_gap >= 0.0)) throw std::invalid_argument("ccga: rel_gap must be >= 0");
  if (max_iterations < 1) throw std::invalid_argument("ccga: max_iterations must be >= 1");
}

const char* to_string(CcgaStatus status) {
  switch (status) {
    case CcgaStatus::Converged: return "converged";
    case CcgaStatus::Infeasible: return "infeasible";
    case CcgaStatus::IterationLimit: return "iteration_limit";
    case CcgaStatus::TimeLimit: return "time_limit";
    case CcgaStatus::Stalled: return "stalled";
    case CcgaStatus::SolverError: return "solver_error";
    case CcgaStatus::Stopped: return "stopped";
  }
  return "unknown";
}

CcgaResult run_ccga(const CcgaProblem& problem, const CcgaConfig& cfg, SolverBackend& backend,
                    const IterationObserver& observer) {
  return run_loop(problem, std::nullopt, cfg, backend, observer);
}

CcgaResult run_fr_ccga(const CcgaProblem& problem, std::span<const double> prediction, const CcgaConfig& cfg,
                       SolverBackend& backend, const IterationObserver& observer) {
  if (prediction.size() != problem.grid.num_generators())
    throw std::invalid_argument("run_fr_ccga: prediction length mismatch");
  return run_loop(problem, prediction, cfg, backend, observer);
}

void write_trace_csv(std::ostream& out, const CcgaResult& result) {
  out << "iteration,time_s,objective,phi_MW,n_S,n_cuts\n";
  out << std::setprecision(10);
  for (const auto& it : result.trace)
    out << it.iteration << ',' << it.seconds << ',' << it.objective << ',' << it.phi << ',' << it.num_states << ','
        << it.num_cuts << '\n';
}

GapTrace run_bounds_race(const CcgaProblem& problem, std::span<const double> prediction, const CcgaConfig& cfg,
                         SolverBackend& lower_backend, SolverBackend& upper_backend) {
  GapTrace trace;
  std::mutex mu;
  std::stop_source stop;
  const auto t0 = Clock::now();
  const Grid& grid = problem.grid;

  // caller holds mu
  auto record = [&](const char* source) {
    const double gap = std::isfinite(trace.upper) && std::isfinite(trace.lower)
                           ? (trace.upper - trace.lower) / std::max(1e-12, std::abs(trace.upper))
                           : kInf;
    trace.gap = gap;
    trace.points.push_back({since(t0), trace.lower, trace.upper, gap, source});
    if (gap <= cfg.rel_gap) {
      trace.gap_closed = true;
      stop.request_stop();
    }
  };

  {
    std::jthread lower_worker([&] {
      auto obs = [&](const IterationTrace& it) {
        std::lock_guard lock(mu);
        if (it.bound > trace.lower) {
          trace.lower = it.bound;
          record("ccga");
        }
        return !stop.stop_requested();
      };
      CcgaResult r = run_ccga(problem, cfg, lower_backend, obs);
      std::lock_guard lock(mu);
      if (r.ok() && r.audit_passed && r.cost < trace.upper) {
        trace.upper = r.cost;
        record("ccga");
      }
      trace.lower_run = std::move(r);
    });
    std::jthread upper_worker([&] {
      auto obs = [&](const IterationTrace&) { return !stop.stop_requested(); };
      CcgaResult r = run_fr_ccga(problem, prediction, cfg, upper_backend, obs);
      std::lock_guard lock(mu);
      if (r.ok() && r.audit_passed) {
        const double c = grid.cost(r.dispatch);
        if (c < trace.upper) {
          trace.upper = c;
          record("fr-ccga");
        }
      }
      trace.upper_run = std::move(r);
    });
  }
  return trace;
}

void write_gap_csv(std::ostream& out, const GapTrace& trace) {
  out << "time_s,lower,upper,gap,source\n";
  out << std::setprecision(10);
  for (const auto& p : trace.points)
    out << p.seconds << ',' << p.lower << ',' << p.upper << ',' << p.gap << ',' << p.source << '\n';
}

}  // namespace scopf
