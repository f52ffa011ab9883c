#include "scopf/learner.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "scopf/apr.hpp"

namespace scopf {

static_assert(std::endian::native == std::endian::little, "model payload assumes a little-endian host");

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kModelFormat = "scopf-model/v1";

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

std::vector<int> layer_widths(const Grid& grid, const TrainConfig& cfg) {
  const int h = std::max(1, static_cast<int>(std::lround(cfg.hidden_factor * static_cast<double>(grid.num_generators()))));
  std::vector<int> w{static_cast<int>(grid.num_buses())};
  for (int k = 0; k < cfg.hidden_layers; ++k) w.push_back(h);
  w.push_back(static_cast<int>(grid.num_generators()));
  return w;
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Rows per (index, contingency, upper?) for the λ bump on cut rows.
using CutKey = std::tuple<std::size_t, std::size_t, bool>;

struct OuterEval {
  std::vector<int> counts;
  std::set<CutKey> hit;
  std::vector<double> phi;  // MW, over instances with φ > ε
  std::vector<double> all_phi;
  std::vector<double> nominal_medians;  // per nominal row of cs
  double balance_median = 0.0;
};

OuterEval evaluate_outer(const Mlp& net, const Normalizer& norm, const ViolationModel& vm, const ConstraintSet& cs,
                         const TrainingSet& ts, double epsilon) {
  const Grid& grid = vm.grid();
  const auto& cont = grid.contingencies();
  std::vector<std::size_t> position(grid.num_generators(), cont.size());
  for (std::size_t k = 0; k < cont.size(); ++k) position[cont[k]] = k;

  OuterEval ev;
  ev.counts.assign(cont.size(), 0);
  const Eigen::MatrixXd pred = norm.decode(net.forward(norm.encode(ts.loads)));
  ConstraintSet nominal;
  for (const auto& r : cs.rows)
    if (r.nominal()) nominal.rows.push_back(r);
  std::vector<std::vector<double>> nu(nominal.rows.size(), std::vector<double>(ts.size()));

  for (std::size_t t = 0; t < ts.size(); ++t) {
    const auto g = column(pred, static_cast<Eigen::Index>(t));
    const PredictionScan sc = vm.scan(g, ts, t);
    ev.all_phi.push_back(sc.phi);
    if (sc.phi > epsilon && sc.contingency) {
      ++ev.counts[position[*sc.contingency]];
      ev.hit.emplace(*sc.line, *sc.contingency, sc.upper);
      ev.phi.push_back(sc.phi);
    }
    const Eigen::VectorXd v = vm.violations(nominal, g, ts, t, {});
    for (std::size_t c = 0; c < nominal.rows.size(); ++c) nu[c][t] = v(static_cast<Eigen::Index>(c));
  }
  for (std::size_t c = 0; c < nominal.rows.size(); ++c) {
    ev.nominal_medians.push_back(median(nu[c]));
    if (nominal.rows[c].kind == PenaltyKind::Balance) ev.balance_median = ev.nominal_medians.back();
  }
  return ev;
}

}  // namespace

// ---------------------------------------------------------------- activations

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_grad(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int w : widths_)
    if (w < 1) throw std::invalid_argument("Mlp: widths must be positive");
  std::mt19937_64 rng(seed);
  for (std::size_t k = 1; k < widths_.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[k - 1]));
    Eigen::MatrixXd w(widths_[k], widths_[k - 1]);
    Eigen::VectorXd bias(widths_[k]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * unit_uniform(rng()) - 1.0);
    for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = bound * (2.0 * unit_uniform(rng()) - 1.0);
    W.push_back(std::move(w));
    b.push_back(std::move(bias));
  }
}

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < W.size(); ++k) n += static_cast<std::size_t>(W[k].size() + b[k].size());
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < W.size(); ++k) {
    theta.segment(at, W[k].size()) = Eigen::Map<const Eigen::VectorXd>(W[k].data(), W[k].size());
    at += W[k].size();
    theta.segment(at, b[k].size()) = b[k];
    at += b[k].size();
  }
  return theta;
}

void Mlp::set_parameters(const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != num_parameters())
    throw std::invalid_argument("Mlp::set_parameters: length mismatch");
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < W.size(); ++k) {
    Eigen::Map<Eigen::VectorXd>(W[k].data(), W[k].size()) = theta.segment(at, W[k].size());
    at += W[k].size();
    b[k] = theta.segment(at, b[k].size());
    at += b[k].size();
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X) const {
  Tape tape;
  return forward(X, tape);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X, Tape& tape) const {
  if (W.empty()) throw std::logic_error("Mlp::forward: empty network");
  if (X.rows() != W.front().cols()) throw std::invalid_argument("Mlp::forward: input width mismatch");
  tape.z.clear();
  tape.a.assign(1, X);
  for (std::size_t k = 0; k < W.size(); ++k) {
    Eigen::MatrixXd z = W[k] * tape.a.back();
    z.colwise() += b[k];
    tape.z.push_back(z);
    if (k + 1 < W.size())
      tape.a.push_back(z.unaryExpr([](double v) { return softplus(v); }));
    else
      tape.a.push_back(std::move(z));
  }
  return tape.a.back();
}

Eigen::VectorXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& dY) const {
  std::vector<Eigen::MatrixXd> gw(W.size());
  std::vector<Eigen::VectorXd> gb(W.size());
  Eigen::MatrixXd delta = dY;
  for (std::size_t k = W.size(); k-- > 0;) {
    gw[k] = delta * tape.a[k].transpose();
    gb[k] = delta.rowwise().sum();
    if (k > 0)
      delta = (W[k].transpose() * delta).cwiseProduct(tape.z[k - 1].unaryExpr([](double v) { return softplus_grad(v); }));
  }
  Eigen::VectorXd grad(static_cast<Eigen::Index>(num_parameters()));
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < W.size(); ++k) {
    grad.segment(at, gw[k].size()) = Eigen::Map<const Eigen::VectorXd>(gw[k].data(), gw[k].size());
    at += gw[k].size();
    grad.segment(at, gb[k].size()) = gb[k];
    at += gb[k].size();
  }
  return grad;
}

// ---------------------------------------------------------------- Normalizer

Normalizer Normalizer::fit(const Grid& grid, const Dataset& data, Scaling scaling) {
  const auto N = static_cast<Eigen::Index>(grid.num_buses());
  const auto G = static_cast<Eigen::Index>(grid.num_generators());
  Normalizer n;
  n.scaling = scaling;
  if (scaling == Scaling::Nominal) {
    const auto nominal = grid.nominal_load();
    n.in_shift = Eigen::VectorXd::Zero(N);
    n.in_scale.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) n.in_scale(i) = std::abs(nominal[static_cast<std::size_t>(i)]) > 0 ? std::abs(nominal[static_cast<std::size_t>(i)]) : 1.0;
    n.out_shift = Eigen::VectorXd::Zero(G);
    n.out_scale.resize(G);
    for (Eigen::Index i = 0; i < G; ++i) n.out_scale(i) = std::max(1.0, grid.generators()[static_cast<std::size_t>(i)].p_max);
    return n;
  }
  if (data.instances.empty()) throw std::invalid_argument("Normalizer::fit: empty dataset");
  const auto T = static_cast<double>(data.instances.size());
  auto stats = [&](Eigen::Index dim, auto get, Eigen::VectorXd& mean, Eigen::VectorXd& sd, double floor_abs) {
    mean = Eigen::VectorXd::Zero(dim);
    sd = Eigen::VectorXd::Zero(dim);
    for (const auto& inst : data.instances) mean += Eigen::Map<const Eigen::VectorXd>(get(inst).data(), dim);
    mean /= T;
    for (const auto& inst : data.instances)
      sd += (Eigen::Map<const Eigen::VectorXd>(get(inst).data(), dim) - mean).cwiseAbs2();
    sd = (sd / T).cwiseSqrt();
    // constant components (zero-load buses, idle units) would divide by ~0
    for (Eigen::Index i = 0; i < dim; ++i) sd(i) = std::max(sd(i), std::max(floor_abs, 1e-3 * std::abs(mean(i))));
  };
  stats(N, [](const Instance& i) -> const std::vector<double>& { return i.load; }, n.in_shift, n.in_scale, 1e-3);
  stats(G, [](const Instance& i) -> const std::vector<double>& { return i.dispatch; }, n.out_shift, n.out_scale, 1e-3);
  return n;
}

Eigen::MatrixXd Normalizer::encode(const Eigen::MatrixXd& loads) const {
  return (loads.colwise() - in_shift).array().colwise() / in_scale.array();
}

Eigen::MatrixXd Normalizer::decode(const Eigen::MatrixXd& outputs) const {
  Eigen::MatrixXd g = outputs.array().colwise() * out_scale.array();
  g.colwise() += out_shift;
  return g;
}

// ---------------------------------------------------------------- constraints

const char* to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::Balance: return "balance";
    case PenaltyKind::GenUpper: return "gen_upper";
    case PenaltyKind::GenLower: return "gen_lower";
    case PenaltyKind::FlowUpper: return "flow_upper";
    case PenaltyKind::FlowLower: return "flow_lower";
    case PenaltyKind::CutUpper: return "cut_upper";
    case PenaltyKind::CutLower: return "cut_lower";
  }
  return "unknown";
}

namespace {

PenaltyKind penalty_kind(const std::string& s) {
  for (auto k : {PenaltyKind::Balance, PenaltyKind::GenUpper, PenaltyKind::GenLower, PenaltyKind::FlowUpper,
                 PenaltyKind::FlowLower, PenaltyKind::CutUpper, PenaltyKind::CutLower})
    if (s == to_string(k)) return k;
  throw std::runtime_error("unknown penalty kind " + s);
}

}  // namespace

ConstraintSet ConstraintSet::nominal(const Grid& grid) {
  ConstraintSet cs;
  cs.rows.push_back({PenaltyKind::Balance, 0, 0, 0.0});
  for (std::size_t l = 0; l < grid.num_lines(); ++l) {
    cs.rows.push_back({PenaltyKind::FlowUpper, l, 0, 0.0});
    cs.rows.push_back({PenaltyKind::FlowLower, l, 0, 0.0});
  }
  for (std::size_t i = 0; i < grid.num_generators(); ++i) {
    cs.rows.push_back({PenaltyKind::GenUpper, i, 0, 0.0});
    cs.rows.push_back({PenaltyKind::GenLower, i, 0, 0.0});
  }
  return cs;
}

bool ConstraintSet::has_state(std::size_t s) const { return std::binary_search(states.begin(), states.end(), s); }

void ConstraintSet::add_state(const Grid& grid, std::size_t s) {
  if (has_state(s)) return;
  if (s >= grid.num_generators()) throw std::out_of_range("ConstraintSet::add_state: bad generator index");
  states.insert(std::upper_bound(states.begin(), states.end(), s), s);
  for (std::size_t l = 0; l < grid.num_lines(); ++l) {
    rows.push_back({PenaltyKind::CutUpper, l, s, 0.0});
    rows.push_back({PenaltyKind::CutLower, l, s, 0.0});
  }
}

std::size_t ConstraintSet::num_nominal() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const Penalty& p) { return p.nominal(); }));
}

// ---------------------------------------------------------------- violations

ViolationModel::ViolationModel(const Grid& grid) : grid_(grid), ptdf_(build_ptdf(grid)) {
  const auto L = static_cast<Eigen::Index>(grid.num_lines());
  const auto G = static_cast<Eigen::Index>(grid.num_generators());
  pg_.resize(L, G);
  for (Eigen::Index i = 0; i < G; ++i) pg_.col(i) = ptdf_.k0.col(static_cast<Eigen::Index>(grid.generator_bus(static_cast<std::size_t>(i))));
  cap_ = as_vector(grid.line_capacities());
  gmin_ = as_vector(grid.p_min());
  gmax_ = as_vector(grid.p_max());
  resp_ = as_vector(grid.response_limits());
  gscale_ = gmax_.cwiseMax(1.0);
}

TrainingSet ViolationModel::training_set(const Dataset& data) const {
  std::vector<std::vector<double>> loads;
  for (const auto& inst : data.instances) loads.push_back(inst.load);
  TrainingSet ts = training_set(loads);
  ts.labels.resize(static_cast<Eigen::Index>(grid_.num_generators()), static_cast<Eigen::Index>(data.instances.size()));
  for (std::size_t t = 0; t < data.instances.size(); ++t) {
    if (data.instances[t].dispatch.size() != grid_.num_generators())
      throw std::invalid_argument("training_set: label length mismatch");
    ts.labels.col(static_cast<Eigen::Index>(t)) = as_vector(data.instances[t].dispatch);
  }
  return ts;
}

TrainingSet ViolationModel::training_set(const std::vector<std::vector<double>>& loads) const {
  TrainingSet ts;
  const auto N = static_cast<Eigen::Index>(grid_.num_buses());
  ts.loads.resize(N, static_cast<Eigen::Index>(loads.size()));
  ts.total.resize(static_cast<Eigen::Index>(loads.size()));
  for (std::size_t t = 0; t < loads.size(); ++t) {
    if (loads[t].size() != grid_.num_buses()) throw std::invalid_argument("training_set: load length mismatch");
    ts.loads.col(static_cast<Eigen::Index>(t)) = as_vector(loads[t]);
    ts.total(static_cast<Eigen::Index>(t)) = std::accumulate(loads[t].begin(), loads[t].end(), 0.0);
  }
  ts.base_flow = ptdf_.k0 * ts.loads;
  return ts;
}

std::vector<double> ViolationModel::signals(const ConstraintSet& cs, std::span<const double> g, double total_load) const {
  std::vector<double> n;
  n.reserve(cs.states.size());
  const double tol = default_balance_tol(total_load);
  for (std::size_t s : cs.states) n.push_back(bisect_balance(grid_, g, s, total_load, tol).signal);
  return n;
}

Eigen::VectorXd ViolationModel::violations(const ConstraintSet& cs, std::span<const double> g, const TrainingSet& ts,
                                           std::size_t t, std::span<const double> signals, Eigen::VectorXd* grad) const {
  const auto G = static_cast<Eigen::Index>(grid_.num_generators());
  if (static_cast<Eigen::Index>(g.size()) != G) throw std::invalid_argument("violations: dispatch length mismatch");
  if (signals.size() != cs.states.size()) throw std::invalid_argument("violations: one signal per state required");
  const Eigen::Map<const Eigen::VectorXd> gv(g.data(), G);
  const auto ti = static_cast<Eigen::Index>(t);
  const double total = ts.total(ti);
  const Eigen::VectorXd flow = pg_ * gv - ts.base_flow.col(ti);

  // clipped response and its pass-through mask per state
  std::vector<Eigen::VectorXd> sflow(cs.states.size()), mask(cs.states.size());
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t k = 0; k < cs.states.size(); ++k) {
    const std::size_t s = cs.states[k];
    slot[s] = k;
    Eigen::VectorXd gs(G), m(G);
    for (Eigen::Index i = 0; i < G; ++i) {
      const double target = gv(i) + signals[k] * resp_(i);
      gs(i) = std::max(0.0, std::min(target, gmax_(i)));
      m(i) = target > 0.0 && target < gmax_(i) ? 1.0 : 0.0;
    }
    gs(static_cast<Eigen::Index>(s)) = 0.0;
    m(static_cast<Eigen::Index>(s)) = 0.0;
    sflow[k] = pg_ * gs - ts.base_flow.col(ti);
    mask[k] = std::move(m);
  }

  Eigen::VectorXd nu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cs.rows.size()));
  if (grad) *grad = Eigen::VectorXd::Zero(G);
  const double scale_bal = std::max(1e-9, std::abs(total));
  for (std::size_t c = 0; c < cs.rows.size(); ++c) {
    const Penalty& p = cs.rows[c];
    const auto j = static_cast<Eigen::Index>(p.index);
    double v = 0.0;
    const bool want = grad && p.lambda != 0.0;
    switch (p.kind) {
      case PenaltyKind::Balance: {
        const double f = gv.sum() - total;
        v = std::abs(f) / scale_bal;
        if (want && f != 0.0) grad->array() += p.lambda * (f > 0 ? 1.0 : -1.0) / scale_bal;
        break;
      }
      case PenaltyKind::GenUpper:
        v = std::max(0.0, gv(j) - gmax_(j)) / gscale_(j);
        if (want && v > 0.0) (*grad)(j) += p.lambda / gscale_(j);
        break;
      case PenaltyKind::GenLower:
        v = std::max(0.0, gmin_(j) - gv(j)) / gscale_(j);
        if (want && v > 0.0) (*grad)(j) -= p.lambda / gscale_(j);
        break;
      case PenaltyKind::FlowUpper:
        v = std::max(0.0, flow(j) - cap_(j)) / cap_(j);
        if (want && v > 0.0) *grad += (p.lambda / cap_(j)) * pg_.row(j).transpose();
        break;
      case PenaltyKind::FlowLower:
        v = std::max(0.0, -flow(j) - cap_(j)) / cap_(j);
        if (want && v > 0.0) *grad -= (p.lambda / cap_(j)) * pg_.row(j).transpose();
        break;
      case PenaltyKind::CutUpper:
      case PenaltyKind::CutLower: {
        const auto it = slot.find(p.contingency);
        if (it == slot.end()) throw std::logic_error("violations: cut row for a state not in the set");
        const double f = sflow[it->second](j);
        const double sign = p.kind == PenaltyKind::CutUpper ? 1.0 : -1.0;
        v = std::max(0.0, sign * f - cap_(j)) / cap_(j);
        if (want && v > 0.0)
          *grad += (sign * p.lambda / cap_(j)) * pg_.row(j).transpose().cwiseProduct(mask[it->second]);
        break;
      }
    }
    nu(static_cast<Eigen::Index>(c)) = v;
  }
  return nu;
}

PredictionScan ViolationModel::scan(std::span<const double> g, const TrainingSet& ts, std::size_t t) const {
  const auto ti = static_cast<Eigen::Index>(t);
  const double total = ts.total(ti);
  const double tol = default_balance_tol(total);
  PredictionScan out;
  for (std::size_t s : grid_.contingencies()) {
    const ContingencyState st = bisect_balance(grid_, g, s, total, tol);
    const Eigen::VectorXd f = pg_ * as_vector(st.dispatch) - ts.base_flow.col(ti);
    for (Eigen::Index l = 0; l < f.size(); ++l) {
      const double up = f(l) - cap_(l), lo = -f(l) - cap_(l);
      const double v = std::max(up, lo);
      if (v > out.phi) {
        out.phi = v;
        out.phi_rel = v / cap_(l);
        out.contingency = s;
        out.line = static_cast<std::size_t>(l);
        out.upper = up >= lo;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- loss

LossResult penalized_loss(const Mlp& net, const Normalizer& norm, const ViolationModel& vm, const ConstraintSet& cs,
                          const TrainingSet& ts, std::span<const std::size_t> batch, bool want_grad,
                          const SignalTable* fixed_signals) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto N = ts.loads.rows();
  Eigen::MatrixXd D(N, B);
  for (Eigen::Index j = 0; j < B; ++j) D.col(j) = ts.loads.col(static_cast<Eigen::Index>(batch[static_cast<std::size_t>(j)]));

  Mlp::Tape tape;
  const Eigen::MatrixXd Y = net.forward(norm.encode(D), tape);
  const Eigen::MatrixXd P = norm.decode(Y);

  LossResult res;
  Eigen::MatrixXd dP = Eigen::MatrixXd::Zero(P.rows(), B);
  Eigen::VectorXd gpen;
  for (Eigen::Index j = 0; j < B; ++j) {
    const std::size_t t = batch[static_cast<std::size_t>(j)];
    const Eigen::VectorXd diff = P.col(j) - ts.labels.col(static_cast<Eigen::Index>(t));
    const double l0 = diff.norm();
    res.l0 += l0;
    if (want_grad && l0 > 0.0) dP.col(j) = diff / l0;

    if (cs.rows.empty()) continue;
    const auto g = column(P, j);
    const std::vector<double> sig = fixed_signals ? fixed_signals->at(t) : vm.signals(cs, g, ts.total(static_cast<Eigen::Index>(t)));
    const Eigen::VectorXd nu = vm.violations(cs, g, ts, t, sig, want_grad ? &gpen : nullptr);
    for (std::size_t c = 0; c < cs.rows.size(); ++c) res.penalty += cs.rows[c].lambda * nu(static_cast<Eigen::Index>(c));
    if (want_grad) dP.col(j) += gpen;
  }
  res.loss = res.l0 + res.penalty;
  if (want_grad) res.grad = net.backward(tape, dP.array().colwise() * norm.out_scale.array());
  return res;
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (hidden_layers < 0) throw std::invalid_argument("train: hidden_layers must be >= 0");
  if (!(hidden_factor > 0)) throw std::invalid_argument("train: hidden_factor must be > 0");
  if (inner_steps < 1 || batch_size < 1) throw std::invalid_argument("train: inner_steps and batch_size must be >= 1");
  if (!(lr_start > 0) || !(lr_end > 0)) throw std::invalid_argument("train: learning rates must be > 0");
  if (!(rho >= 0)) throw std::invalid_argument("train: rho must be >= 0");
  if (dual_passes < 1) throw std::invalid_argument("train: dual_passes must be >= 1");
  if (!(epsilon > 0) || !(beta1 >= 0) || !(beta_c >= 0)) throw std::invalid_argument("train: bad tolerances");
  if (max_outer < 1) throw std::invalid_argument("train: max_outer must be >= 1");
}

void train_lagrangian(Mlp& net, ConstraintSet& cs, const Normalizer& norm, const ViolationModel& vm,
                      const TrainingSet& ts, const TrainConfig& cfg, std::mt19937_64& rng, double* last_loss) {
  cfg.validate();
  const std::size_t T = ts.size();
  if (T == 0) throw std::invalid_argument("train_lagrangian: empty training set");
  const std::size_t B = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), T);

  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = T;
  auto shuffle = [&] {
    for (std::size_t i = T; i > 1; --i) {
      const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % i;
      std::uint64_t x;
      do x = rng();
      while (x >= limit);
      std::swap(order[i - 1], order[x % i]);
    }
    cursor = 0;
  };

  const double decay = cfg.inner_steps > 1 ? std::log(cfg.lr_end / cfg.lr_start) / (cfg.inner_steps - 1) : 0.0;
  double tail_loss = 0.0;
  int tail_count = 0;
  for (int pass = 0; pass < cfg.dual_passes; ++pass) {
    Eigen::VectorXd theta = net.parameters();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size()), v = Eigen::VectorXd::Zero(theta.size());
    tail_loss = 0.0;
    tail_count = 0;
    for (int k = 0; k < cfg.inner_steps; ++k) {
      if (cursor + B > T) shuffle();
      const std::span<const std::size_t> batch(order.data() + cursor, B);
      cursor += B;
      const LossResult r = penalized_loss(net, norm, vm, cs, ts, batch, true);
      if (!std::isfinite(r.loss) || !r.grad.allFinite())
        throw std::runtime_error("training diverged (non-finite loss) at step " + std::to_string(k));
      const double alpha = cfg.lr_start * std::exp(decay * k);
      if (cfg.optimizer == Optimizer::Sgd) {
        theta -= alpha * r.grad;
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        m = b1 * m + (1 - b1) * r.grad;
        v = b2 * v + (1 - b2) * r.grad.cwiseAbs2();
        const double c1 = 1 - std::pow(b1, k + 1), c2 = 1 - std::pow(b2, k + 1);
        theta.array() -= alpha * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      }
      net.set_parameters(theta);
      if (k >= cfg.inner_steps - std::min(cfg.inner_steps, 100)) {
        tail_loss += r.loss / static_cast<double>(B);
        ++tail_count;
      }
    }

    // dual update on the median violation over all instances
    if (cs.rows.empty() || cfg.rho == 0.0) continue;
    const Eigen::MatrixXd pred = norm.decode(net.forward(norm.encode(ts.loads)));
    std::vector<std::vector<double>> nu(cs.rows.size(), std::vector<double>(T));
    for (std::size_t t = 0; t < T; ++t) {
      const auto g = column(pred, static_cast<Eigen::Index>(t));
      const Eigen::VectorXd v_t = vm.violations(cs, g, ts, t, vm.signals(cs, g, ts.total(static_cast<Eigen::Index>(t))));
      for (std::size_t c = 0; c < cs.rows.size(); ++c) nu[c][t] = v_t(static_cast<Eigen::Index>(c));
    }
    for (std::size_t c = 0; c < cs.rows.size(); ++c) cs.rows[c].lambda += cfg.rho * median(nu[c]);
  }
  if (last_loss) *last_loss = tail_count ? tail_loss / tail_count : 0.0;
}

namespace {

TrainedModel run_training(const Grid& grid, const Dataset& data, const TrainConfig& cfg, bool constrained,
                          const TrainProgress& progress) {
  cfg.validate();
  data.check_grid(grid);
  if (data.instances.empty()) throw std::invalid_argument("training needs a non-empty dataset");
  const auto t0 = Clock::now();
  const ViolationModel vm(grid);
  const TrainingSet ts = vm.training_set(data);

  TrainedModel model;
  model.grid_name = grid.name();
  model.fingerprint = grid.fingerprint();
  model.config = cfg;
  model.norm = Normalizer::fit(grid, data, cfg.scaling);
  model.net = Mlp(layer_widths(grid, cfg), cfg.seed);
  if (constrained) model.constraints = ConstraintSet::nominal(grid);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const auto& cont = grid.contingencies();
  const int outer_limit = constrained ? cfg.max_outer : 1;
  for (int l = 1; l <= outer_limit; ++l) {
    OuterLog log;
    log.iteration = l;
    train_lagrangian(model.net, model.constraints, model.norm, vm, ts, cfg, rng, &log.loss);
    const OuterEval ev = evaluate_outer(model.net, model.norm, vm, model.constraints, ts, cfg.epsilon);
    log.counts = ev.counts;
    log.balance_median = ev.balance_median;
    for (double v : ev.nominal_medians) log.nominal_median_max = std::max(log.nominal_median_max, v);
    log.phi_median = median(ev.all_phi);

    std::vector<std::size_t> frequent;
    for (std::size_t k = 0; k < cont.size(); ++k)
      if (static_cast<double>(ev.counts[k]) / static_cast<double>(ts.size()) > cfg.beta1) frequent.push_back(cont[k]);
    const bool nominal_ok = std::all_of(ev.nominal_medians.begin(), ev.nominal_medians.end(),
                                        [&](double v) { return v <= cfg.beta_c; });
    log.seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    if (!constrained) {
      model.log.push_back(log);
      model.converged = true;
      break;
    }
    if (frequent.empty() && nominal_ok) {
      model.log.push_back(log);
      model.converged = true;
      break;
    }
    for (std::size_t s : frequent)
      if (!model.constraints.has_state(s)) {
        model.constraints.add_state(grid, s);
        log.added.push_back(grid.generators()[s].id);
      }
    // stricter update for cut rows: the median top violation (MW), on the lines that attained some φᵗ
    const double phi_tilde = median(ev.phi);
    for (auto& row : model.constraints.rows) {
      if (row.nominal() || !model.constraints.has_state(row.contingency)) continue;
      if (ev.hit.count({row.index, row.contingency, row.kind == PenaltyKind::CutUpper}))
        row.lambda += cfg.rho * phi_tilde;
    }
    model.log.push_back(log);
    if (progress) {
      std::ostringstream msg;
      msg << "outer " << l << ": loss " << log.loss << ", balance median " << log.balance_median
          << ", phi median " << log.phi_median << " MW, states";
      for (std::size_t s : model.constraints.states) msg << ' ' << grid.generators()[s].id;
      msg << ", " << log.seconds << " s";
      progress(msg.str());
    }
  }
  if (!model.converged) model.message = "outer iteration limit reached before tolerances were met";
  return model;
}

}  // namespace

TrainedModel train_baseline(const Grid& grid, const Dataset& data, const TrainConfig& cfg,
                            const TrainProgress& progress) {
  return run_training(grid, data, cfg, false, progress);
}

TrainedModel train_ccga_dnn(const Grid& grid, const Dataset& data, const TrainConfig& cfg,
                            const TrainProgress& progress) {
  return run_training(grid, data, cfg, true, progress);
}

std::vector<double> TrainedModel::predict(std::span<const double> load) const {
  if (static_cast<Eigen::Index>(load.size()) != norm.in_shift.size())
    throw std::invalid_argument("predict: load length mismatch");
  const Eigen::MatrixXd g = predict(Eigen::MatrixXd(Eigen::Map<const Eigen::VectorXd>(load.data(), static_cast<Eigen::Index>(load.size()))));
  return column(g, 0);
}

Eigen::MatrixXd TrainedModel::predict(const Eigen::MatrixXd& loads) const {
  return norm.decode(net.forward(norm.encode(loads)));
}

void TrainedModel::check_grid(const Grid& grid) const {
  if (grid.fingerprint() != fingerprint)
    throw std::runtime_error("model was trained for grid fingerprint " + hex64(fingerprint) + ", not " +
                             grid.fingerprint_hex());
}

// ---------------------------------------------------------------- model IO

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd from_json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return as_vector(v);
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model " + path);
  json rows = json::array();
  for (const auto& r : model.constraints.rows)
    rows.push_back({{"kind", to_string(r.kind)}, {"index", r.index}, {"contingency", r.contingency}, {"lambda", r.lambda}});
  json log = json::array();
  for (const auto& l : model.log)
    log.push_back({{"iteration", l.iteration}, {"loss", l.loss}, {"balance_median", l.balance_median},
                   {"nominal_median_max", l.nominal_median_max}, {"phi_median", l.phi_median},
                   {"counts", l.counts}, {"added", l.added}});
  const auto& c = model.config;
  json header = {
      {"format", kModelFormat},
      {"grid", model.grid_name},
      {"fingerprint", hex64(model.fingerprint)},
      {"widths", model.net.widths()},
      {"activation", "softplus"},
      {"parameters", model.net.num_parameters()},
      {"scaling", model.norm.scaling == Scaling::ZScore ? "zscore" : "nominal"},
      {"in_shift", to_std(model.norm.in_shift)},
      {"in_scale", to_std(model.norm.in_scale)},
      {"out_shift", to_std(model.norm.out_shift)},
      {"out_scale", to_std(model.norm.out_scale)},
      {"states", model.constraints.states},
      {"constraints", rows},
      {"config",
       {{"hidden_layers", c.hidden_layers}, {"hidden_factor", c.hidden_factor}, {"inner_steps", c.inner_steps},
        {"batch_size", c.batch_size}, {"lr_start", c.lr_start}, {"lr_end", c.lr_end}, {"rho", c.rho},
        {"dual_passes", c.dual_passes}, {"optimizer", c.optimizer == Optimizer::Sgd ? "sgd" : "adam"},
        {"seed", c.seed}, {"epsilon", c.epsilon}, {"beta1", c.beta1}, {"beta_c", c.beta_c},
        {"max_outer", c.max_outer}}},
      {"log", log},
      {"converged", model.converged},
      {"message", model.message}};
  out << header.dump() << '\n';
  const Eigen::VectorXd theta = model.net.parameters();
  out.write(reinterpret_cast<const char*>(theta.data()), static_cast<std::streamsize>(theta.size() * sizeof(double)));
  if (!out) throw std::runtime_error("error writing model " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty model file " + path);
  TrainedModel m;
  std::size_t count = 0;
  try {
    const json h = json::parse(line);
    if (h.at("format") != kModelFormat) throw std::runtime_error("unsupported model format " + h.at("format").dump());
    m.grid_name = h.at("grid");
    m.fingerprint = std::stoull(h.at("fingerprint").get<std::string>(), nullptr, 16);
    const auto widths = h.at("widths").get<std::vector<int>>();
    m.net = Mlp(widths, 0);
    count = h.at("parameters");
    m.norm.scaling = h.at("scaling") == "zscore" ? Scaling::ZScore : Scaling::Nominal;
    m.norm.in_shift = from_json_vec(h.at("in_shift"));
    m.norm.in_scale = from_json_vec(h.at("in_scale"));
    m.norm.out_shift = from_json_vec(h.at("out_shift"));
    m.norm.out_scale = from_json_vec(h.at("out_scale"));
    m.constraints.states = h.at("states").get<std::vector<std::size_t>>();
    for (const auto& r : h.at("constraints"))
      m.constraints.rows.push_back({penalty_kind(r.at("kind")), r.at("index"), r.at("contingency"), r.at("lambda")});
    const auto& c = h.at("config");
    auto& cfg = m.config;
    cfg.hidden_layers = c.at("hidden_layers");
    cfg.hidden_factor = c.at("hidden_factor");
    cfg.inner_steps = c.at("inner_steps");
    cfg.batch_size = c.at("batch_size");
    cfg.lr_start = c.at("lr_start");
    cfg.lr_end = c.at("lr_end");
    cfg.rho = c.at("rho");
    cfg.dual_passes = c.at("dual_passes");
    cfg.optimizer = c.at("optimizer") == "adam" ? Optimizer::Adam : Optimizer::Sgd;
    cfg.scaling = m.norm.scaling;
    cfg.seed = c.at("seed");
    cfg.epsilon = c.at("epsilon");
    cfg.beta1 = c.at("beta1");
    cfg.beta_c = c.at("beta_c");
    cfg.max_outer = c.at("max_outer");
    for (const auto& l : h.at("log")) {
      OuterLog o;
      o.iteration = l.at("iteration");
      o.loss = l.at("loss");
      o.balance_median = l.at("balance_median");
      o.nominal_median_max = l.at("nominal_median_max");
      o.phi_median = l.at("phi_median");
      o.counts = l.at("counts").get<std::vector<int>>();
      o.added = l.at("added").get<std::vector<int>>();
      m.log.push_back(std::move(o));
    }
    m.converged = h.at("converged");
    m.message = h.value("message", "");
  } catch (const json::exception& e) {
    throw std::runtime_error("bad model header in " + path + ": " + e.what());
  }
  if (count != m.net.num_parameters()) throw std::runtime_error("model parameter count disagrees with widths");
  Eigen::VectorXd theta(static_cast<Eigen::Index>(count));
  in.read(reinterpret_cast<char*>(theta.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("model payload truncated in " + path);
  m.net.set_parameters(theta);
  return m;
}

}  // namespace scopf
