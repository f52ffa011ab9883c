#include "scopf/ptdf.hpp"

#include <cmath>

namespace scopf {

PtdfModel build_ptdf(const Grid& grid) {
  const auto nb = static_cast<Eigen::Index>(grid.num_buses());
  const auto nl = static_cast<Eigen::Index>(grid.num_lines());
  const auto ref = static_cast<Eigen::Index>(grid.ref_bus_index());

  // reduced index: buses without the reference bus
  auto reduced = [ref](Eigen::Index b) { return b < ref ? b : b - 1; };

  Eigen::MatrixXd bred = Eigen::MatrixXd::Zero(nb - 1, nb - 1);
  Eigen::MatrixXd sred_t = Eigen::MatrixXd::Zero(nb - 1, nl);  // (S without ref column)ᵀ
  for (Eigen::Index l = 0; l < nl; ++l) {
    const double b = grid.lines()[l].susceptance;
    const auto f = static_cast<Eigen::Index>(grid.line_from(l));
    const auto t = static_cast<Eigen::Index>(grid.line_to(l));
    if (f != ref) {
      bred(reduced(f), reduced(f)) += b;
      sred_t(reduced(f), l) = b;
    }
    if (t != ref) {
      bred(reduced(t), reduced(t)) += b;
      sred_t(reduced(t), l) = -b;
    }
    if (f != ref && t != ref) {
      bred(reduced(f), reduced(t)) -= b;
      bred(reduced(t), reduced(f)) -= b;
    }
  }

  PtdfModel model;
  model.ref_bus_index = static_cast<std::size_t>(ref);
  model.k0 = Eigen::MatrixXd::Zero(nl, nb);
  if (nb == 1) return model;

  Eigen::LLT<Eigen::MatrixXd> llt(bred);
  if (llt.info() != Eigen::Success)
    throw GridError(GridError::Kind::Disconnected, "reduced susceptance matrix is singular (islanded network)");
  const Eigen::MatrixXd x = llt.solve(sred_t);  // (nb-1) × nl
  for (Eigen::Index b = 0; b < nb; ++b) {
    if (b == ref) continue;
    model.k0.col(b) = x.row(reduced(b)).transpose();
  }
  if (!model.k0.allFinite())
    throw GridError(GridError::Kind::Disconnected, "reduced susceptance matrix is singular (islanded network)");
  return model;
}

Eigen::MatrixXd generator_incidence(const Grid& grid) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(grid.num_buses(), grid.num_generators());
  for (std::size_t i = 0; i < grid.num_generators(); ++i) b(grid.generator_bus(i), i) = 1.0;
  return b;
}

FlowCuts flow_cuts(const PtdfModel& ptdf, const Grid& grid, std::span<const double> load) {
  if (load.size() != grid.num_buses() || ptdf.k0.cols() != static_cast<Eigen::Index>(grid.num_buses()) ||
      ptdf.k0.rows() != static_cast<Eigen::Index>(grid.num_lines()))
    throw std::invalid_argument("flow_cuts: dimension mismatch");
  const Eigen::VectorXd fmax = as_vector(grid.line_capacities());
  const Eigen::VectorXd k0d = ptdf.k0 * as_vector(load);

  FlowCuts cuts;
  // K0·B just picks the generator-bus columns of K0
  cuts.k1.resize(ptdf.k0.rows(), static_cast<Eigen::Index>(grid.num_generators()));
  for (std::size_t i = 0; i < grid.num_generators(); ++i)
    cuts.k1.col(static_cast<Eigen::Index>(i)) = -ptdf.k0.col(static_cast<Eigen::Index>(grid.generator_bus(i)));
  cuts.k2 = fmax + k0d;
  cuts.k3 = fmax - k0d;
  return cuts;
}

Eigen::VectorXd FlowCuts::upper(std::span<const double> g) const { return k1 * as_vector(g) + k2; }

Eigen::VectorXd FlowCuts::lower(std::span<const double> g) const { return k3 - k1 * as_vector(g); }

Eigen::VectorXd FlowCuts::flows(std::span<const double> g) const { return 0.5 * (k3 - k2) - k1 * as_vector(g); }

}  // namespace scopf
