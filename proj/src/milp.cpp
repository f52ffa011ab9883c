#include "scopf/milp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace scopf {

int MilpModel::add_variable(std::string name, double lower, double upper, VarType type, double objective) {
  if (lower > upper) throw std::invalid_argument("variable " + name + " has lower > upper");
  vars_.push_back({std::move(name), lower, upper, type});
  objective_.push_back(objective);
  return static_cast<int>(vars_.size() - 1);
}

int MilpModel::add_constraint(std::string name, std::vector<int> index, std::vector<double> coef, double lower,
                              double upper) {
  if (index.size() != coef.size()) throw std::invalid_argument("constraint " + name + ": index/coef size mismatch");
  for (int j : index)
    if (j < 0 || static_cast<std::size_t>(j) >= vars_.size())
      throw std::out_of_range("constraint " + name + " references undeclared variable");
  rows_.push_back({std::move(name), std::move(index), std::move(coef), lower, upper});
  return static_cast<int>(rows_.size() - 1);
}

std::size_t MilpModel::num_binaries() const {
  return static_cast<std::size_t>(
      std::count_if(vars_.begin(), vars_.end(), [](const Variable& v) { return v.type == VarType::Binary; }));
}

double MilpModel::evaluate_objective(std::span<const double> x) const {
  double v = offset_;
  for (std::size_t j = 0; j < vars_.size(); ++j) v += objective_[j] * x[j];
  return v;
}

double MilpModel::max_violation(std::span<const double> x) const {
  if (x.size() != vars_.size()) throw std::invalid_argument("max_violation: length mismatch");
  double worst = 0.0;
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    worst = std::max({worst, vars_[j].lower - x[j], x[j] - vars_[j].upper});
    if (vars_[j].type == VarType::Binary) worst = std::max(worst, std::abs(x[j] - std::round(x[j])));
  }
  for (const auto& r : rows_) {
    double a = 0.0;
    for (std::size_t k = 0; k < r.index.size(); ++k) a += r.coef[k] * x[static_cast<std::size_t>(r.index[k])];
    worst = std::max({worst, r.lower - a, a - r.upper});
  }
  return worst;
}

namespace {

void write_term(std::ostream& out, double c, const std::string& name, bool first) {
  if (c < 0)
    out << " - " << -c << ' ' << name;
  else
    out << (first ? " " : " + ") << c << ' ' << name;
}

void write_row(std::ostream& out, const MilpModel& m, const Constraint& r, const char* suffix, const char* sense,
               double rhs) {
  out << ' ' << r.name << suffix << ':';
  for (std::size_t k = 0; k < r.index.size(); ++k)
    write_term(out, r.coef[k], m.variables()[static_cast<std::size_t>(r.index[k])].name, k == 0);
  if (r.index.empty()) out << " 0 " << m.variables().front().name;
  out << ' ' << sense << ' ' << rhs << '\n';
}

}  // namespace

void MilpModel::write_lp(std::ostream& out) const {
  out.precision(17);
  out << "\\ written by scopf\nMinimize\n obj:";
  bool first = true;
  for (std::size_t j = 0; j < vars_.size(); ++j) {
    if (objective_[j] == 0.0) continue;
    write_term(out, objective_[j], vars_[j].name, first);
    first = false;
  }
  if (offset_ != 0.0) out << (offset_ < 0 ? " - " : " + ") << std::abs(offset_);
  if (first && offset_ == 0.0) out << " 0 " << (vars_.empty() ? "x" : vars_.front().name);
  out << "\nSubject To\n";
  for (const auto& r : rows_) {
    if (r.lower == r.upper) {
      write_row(out, *this, r, "", "=", r.lower);
      continue;
    }
    if (std::isfinite(r.lower)) write_row(out, *this, r, std::isfinite(r.upper) ? "_lo" : "", ">=", r.lower);
    if (std::isfinite(r.upper)) write_row(out, *this, r, std::isfinite(r.lower) ? "_up" : "", "<=", r.upper);
  }
  out << "Bounds\n";
  for (const auto& v : vars_) {
    if (v.type == VarType::Binary && v.lower == 0.0 && v.upper == 1.0) continue;
    out << ' ';
    if (std::isfinite(v.lower))
      out << v.lower;
    else
      out << "-inf";
    out << " <= " << v.name << " <= ";
    if (std::isfinite(v.upper))
      out << v.upper;
    else
      out << "+inf";
    out << '\n';
  }
  bool any_binary = false;
  for (const auto& v : vars_) {
    if (v.type != VarType::Binary) continue;
    if (!any_binary) out << "Binaries\n";
    any_binary = true;
    out << ' ' << v.name << '\n';
  }
  out << "End\n";
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::TimeLimit: return "time_limit";
    case SolveStatus::Error: return "error";
  }
  return "unknown";
}

}  // namespace scopf
