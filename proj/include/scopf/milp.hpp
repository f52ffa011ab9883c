#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace scopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarType { Continuous, Binary };

struct Variable {
  std::string name;
  double lower = 0.0;
  double upper = kInf;
  VarType type = VarType::Continuous;
};

/// lower ≤ Σ coef·x[index] ≤ upper
struct Constraint {
  std::string name;
  std::vector<int> index;
  std::vector<double> coef;
  double lower = -kInf;
  double upper = kInf;
};

/// Minimisation MILP in row form. Builders keep their own index maps; this
/// type only knows variables, rows and the linear objective.
class MilpModel {
public:
  int add_variable(std::string name, double lower, double upper, VarType type = VarType::Continuous,
                   double objective = 0.0);
  int add_constraint(std::string name, std::vector<int> index, std::vector<double> coef, double lower,
                     double upper);

  void set_objective(int var, double coef) { objective_[static_cast<std::size_t>(var)] = coef; }
  void set_objective_offset(double offset) { offset_ = offset; }

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return rows_; }
  const std::vector<double>& objective() const { return objective_; }
  double objective_offset() const { return offset_; }

  std::size_t num_variables() const { return vars_.size(); }
  std::size_t num_constraints() const { return rows_.size(); }
  std::size_t num_binaries() const;

  double evaluate_objective(std::span<const double> x) const;
  /// Largest bound, row or integrality violation of x (absolute).
  double max_violation(std::span<const double> x) const;

  /// CPLEX LP-format text, for debugging.
  void write_lp(std::ostream& out) const;

private:
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
  std::vector<double> objective_;
  double offset_ = 0.0;
};

enum class SolveStatus { Optimal, Feasible, Infeasible, Unbounded, TimeLimit, Error };

const char* to_string(SolveStatus status);

struct SolveOptions {
  double rel_gap = 0.0025;
  double time_limit = kInf;  // seconds
  /// Partial MIP start as (column, value) pairs; the backend completes it if it can.
  std::vector<std::pair<int, double>> start;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Error;
  double objective = kInf;
  double best_bound = -kInf;  // valid lower bound for minimisation
  std::vector<double> x;
  double seconds = 0.0;

  bool has_solution() const {
    return (status == SolveStatus::Optimal || status == SolveStatus::Feasible ||
            status == SolveStatus::TimeLimit) &&
           !x.empty();
  }
};

/// Exact MILP backend contract. One handle serves one solve at a time.
class SolverBackend {
public:
  virtual ~SolverBackend() = default;
  virtual std::string name() const = 0;
  virtual SolveResult solve(const MilpModel& model, const SolveOptions& options) = 0;
};

/// The reference backend (HiGHS, single-threaded, fixed seed).
std::unique_ptr<SolverBackend> make_highs_backend();

}  // namespace scopf
