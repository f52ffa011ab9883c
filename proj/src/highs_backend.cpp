#include <chrono>
#include <cmath>

#include <Highs.h>

#include "scopf/milp.hpp"

namespace scopf {

namespace {

class HighsBackend final : public SolverBackend {
public:
  std::string name() const override { return "highs"; }

  SolveResult solve(const MilpModel& model, const SolveOptions& options) override {
    const auto t0 = std::chrono::steady_clock::now();
    Highs highs;
    highs.setOptionValue("output_flag", false);
    highs.setOptionValue("threads", 1);
    highs.setOptionValue("random_seed", 0);
    highs.setOptionValue("mip_rel_gap", options.rel_gap);
    if (std::isfinite(options.time_limit)) highs.setOptionValue("time_limit", options.time_limit);

    HighsLp lp;
    const auto& vars = model.variables();
    const auto& rows = model.constraints();
    lp.num_col_ = static_cast<HighsInt>(vars.size());
    lp.num_row_ = static_cast<HighsInt>(rows.size());
    lp.sense_ = ObjSense::kMinimize;
    lp.offset_ = model.objective_offset();
    lp.col_cost_ = model.objective();
    bool integer = false;
    for (const auto& v : vars) {
      lp.col_lower_.push_back(std::isfinite(v.lower) ? v.lower : -kHighsInf);
      lp.col_upper_.push_back(std::isfinite(v.upper) ? v.upper : kHighsInf);
      const bool bin = v.type == VarType::Binary;
      integer = integer || bin;
      lp.integrality_.push_back(bin ? HighsVarType::kInteger : HighsVarType::kContinuous);
    }
    if (!integer) lp.integrality_.clear();
    lp.a_matrix_.format_ = MatrixFormat::kRowwise;
    lp.a_matrix_.num_col_ = lp.num_col_;
    lp.a_matrix_.num_row_ = lp.num_row_;
    lp.a_matrix_.start_.assign(1, 0);
    for (const auto& r : rows) {
      lp.row_lower_.push_back(std::isfinite(r.lower) ? r.lower : -kHighsInf);
      lp.row_upper_.push_back(std::isfinite(r.upper) ? r.upper : kHighsInf);
      for (std::size_t k = 0; k < r.index.size(); ++k) {
        if (r.coef[k] == 0.0) continue;
        lp.a_matrix_.index_.push_back(r.index[k]);
        lp.a_matrix_.value_.push_back(r.coef[k]);
      }
      lp.a_matrix_.start_.push_back(static_cast<HighsInt>(lp.a_matrix_.index_.size()));
    }

    SolveResult result;
    if (highs.passModel(std::move(lp)) == HighsStatus::kError) {
      result.status = SolveStatus::Error;
      return result;
    }
    if (integer && !options.start.empty()) {
      std::vector<HighsInt> idx;
      std::vector<double> val;
      for (const auto& [j, v] : options.start) {
        idx.push_back(static_cast<HighsInt>(j));
        val.push_back(v);
      }
      // a rejected start is harmless; the search simply runs cold
      highs.setSolution(static_cast<HighsInt>(idx.size()), idx.data(), val.data());
    }
    const HighsStatus run = highs.run();
    const HighsModelStatus ms = highs.getModelStatus();
    const HighsInfo& info = highs.getInfo();
    const bool has_primal = info.primal_solution_status == kSolutionStatusFeasible;

    switch (ms) {
      case HighsModelStatus::kOptimal:
        result.status = SolveStatus::Optimal;
        break;
      case HighsModelStatus::kInfeasible:
        result.status = SolveStatus::Infeasible;
        break;
      case HighsModelStatus::kUnbounded:
      case HighsModelStatus::kUnboundedOrInfeasible:
        // presolve can't tell which; for these models unbounded is impossible
        result.status = integer || ms == HighsModelStatus::kUnboundedOrInfeasible ? SolveStatus::Infeasible
                                                                                 : SolveStatus::Unbounded;
        break;
      case HighsModelStatus::kTimeLimit:
      case HighsModelStatus::kIterationLimit:
        result.status = SolveStatus::TimeLimit;
        break;
      default:
        result.status = run == HighsStatus::kError ? SolveStatus::Error
                                                   : (has_primal ? SolveStatus::Feasible : SolveStatus::Error);
    }
    if (has_primal) {
      result.x = highs.getSolution().col_value;
      result.objective = info.objective_function_value;
      result.best_bound = integer ? info.mip_dual_bound : info.objective_function_value;
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }
};

}  // namespace

std::unique_ptr<SolverBackend> make_highs_backend() { return std::make_unique<HighsBackend>(); }

}  // namespace scopf
