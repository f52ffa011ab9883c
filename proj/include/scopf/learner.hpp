#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scopf/datagen.hpp"
#include "scopf/grid.hpp"
#include "scopf/ptdf.hpp"

namespace scopf {

/// ln(1 + eˣ) without overflow.
double softplus(double x);
/// d/dx softplus = logistic(x).
double softplus_grad(double x);

/// Fully connected net: softplus after every layer but the last.
class Mlp {
public:
  Mlp() = default;
  /// widths = {inputs, hidden..., outputs}; weights ~ U(−1/√fan_in, 1/√fan_in).
  Mlp(std::vector<int> widths, std::uint64_t seed);

  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;

  const std::vector<int>& widths() const { return widths_; }
  std::size_t num_layers() const { return W.size(); }
  std::size_t num_parameters() const;

  /// Flattened as W₁, b₁, W₂, b₂, ... with W column-major.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);

  struct Tape {
    std::vector<Eigen::MatrixXd> z;  // pre-activations per layer
    std::vector<Eigen::MatrixXd> a;  // a[0] = input, a[k] = output of layer k
  };

  /// X is inputs × batch; returns outputs × batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Tape& tape) const;
  /// Gradient of Σ dY ⊙ output w.r.t. the flattened parameters.
  Eigen::VectorXd backward(const Tape& tape, const Eigen::MatrixXd& dY) const;

private:
  std::vector<int> widths_;
};

enum class Scaling { ZScore, Nominal };

/// Affine maps between physical units and network units.
struct Normalizer {
  Eigen::VectorXd in_shift, in_scale;    // x = (d − shift) / scale
  Eigen::VectorXd out_shift, out_scale;  // ġ = shift + scale ⊙ y
  Scaling scaling = Scaling::ZScore;

  static Normalizer fit(const Grid& grid, const Dataset& data, Scaling scaling);
  Eigen::MatrixXd encode(const Eigen::MatrixXd& loads) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& outputs) const;
};

enum class PenaltyKind { Balance, GenUpper, GenLower, FlowUpper, FlowLower, CutUpper, CutLower };

const char* to_string(PenaltyKind kind);

/// One dualized constraint row. Violations are relative: balance to total
/// load, lines to f̄, generator bounds to max(ḡ, 1 MW).
struct Penalty {
  PenaltyKind kind = PenaltyKind::Balance;
  std::size_t index = 0;        // line or generator index
  std::size_t contingency = 0;  // generator index, cut rows only
  double lambda = 0.0;

  bool nominal() const { return kind != PenaltyKind::CutUpper && kind != PenaltyKind::CutLower; }
};

struct ConstraintSet {
  std::vector<Penalty> rows;
  std::vector<std::size_t> states;  // contingencies with cut rows, ascending

  /// Balance, both flow sides per line, both bounds per generator.
  static ConstraintSet nominal(const Grid& grid);
  bool has_state(std::size_t s) const;
  /// Appends both cut sides for every line under contingency s, λ = 0.
  void add_state(const Grid& grid, std::size_t s);
  std::size_t num_nominal() const;
};

/// Dense per-instance data in network-friendly layout.
struct TrainingSet {
  Eigen::MatrixXd loads;     // buses × T
  Eigen::MatrixXd labels;    // generators × T
  Eigen::MatrixXd base_flow; // lines × T, K0·d
  Eigen::VectorXd total;     // T

  std::size_t size() const { return static_cast<std::size_t>(loads.cols()); }
};

/// Worst post-contingency line violation of a prediction over all contingencies.
struct PredictionScan {
  double phi = 0.0;        // MW
  double phi_rel = 0.0;    // φ / f̄ of its line
  std::optional<std::size_t> contingency, line;
  bool upper = true;
};

class ViolationModel {
public:
  explicit ViolationModel(const Grid& grid);

  const Grid& grid() const { return grid_; }
  const Eigen::MatrixXd& gen_flow() const { return pg_; }  // lines × generators, K0·B

  TrainingSet training_set(const Dataset& data) const;
  TrainingSet training_set(const std::vector<std::vector<double>>& loads) const;

  /// APR signal ṅ_s from bisection on the prediction, one per cs.states entry.
  std::vector<double> signals(const ConstraintSet& cs, std::span<const double> g, double total_load) const;

  /// ν for every row of cs. If grad is given it receives Σ_c λ_c ∂ν_c/∂ġ.
  /// Signals are held fixed (not differentiated).
  Eigen::VectorXd violations(const ConstraintSet& cs, std::span<const double> g, const TrainingSet& ts,
                             std::size_t t, std::span<const double> signals, Eigen::VectorXd* grad = nullptr) const;

  PredictionScan scan(std::span<const double> g, const TrainingSet& ts, std::size_t t) const;

private:
  const Grid& grid_;
  PtdfModel ptdf_;
  Eigen::MatrixXd pg_;
  Eigen::VectorXd cap_, gmin_, gmax_, gscale_, resp_;
};

struct LossResult {
  double loss = 0.0;     // Σ_t 𝕃₀ + Σ_t Σ_c λ_c ν_c
  double l0 = 0.0;
  double penalty = 0.0;
  Eigen::VectorXd grad;  // w.r.t. Mlp::parameters(); empty unless requested
};

/// Signals per instance and state; computed by bisection when not supplied.
using SignalTable = std::vector<std::vector<double>>;

LossResult penalized_loss(const Mlp& net, const Normalizer& norm, const ViolationModel& vm, const ConstraintSet& cs,
                          const TrainingSet& ts, std::span<const std::size_t> batch, bool want_grad,
                          const SignalTable* fixed_signals = nullptr);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  int hidden_layers = 4;
  double hidden_factor = 2.0;   // hidden width = factor·|G|
  int inner_steps = 20000;      // per Lagrangian relaxation solve
  int batch_size = 32;
  double lr_start = 1e-4;
  double lr_end = 1e-10;
  double rho = 1e5;
  int dual_passes = 1;          // relaxation solves per train_lagrangian call
  Optimizer optimizer = Optimizer::Sgd;
  Scaling scaling = Scaling::ZScore;
  std::uint64_t seed = 1;
  double epsilon = 1.0;         // MW, counts a contingency as violated
  double beta1 = 0.05;          // state-frequency threshold
  double beta_c = 1.5e-2;       // nominal median relative violation tolerance
  int max_outer = 10;

  void validate() const;
};

struct OuterLog {
  int iteration = 0;
  double seconds = 0.0;
  double loss = 0.0;              // mean penalized loss over the last steps
  double balance_median = 0.0;    // relative
  double nominal_median_max = 0.0;
  double phi_median = 0.0;        // MW
  std::vector<int> counts;        // p, by contingency position
  std::vector<int> added;         // generator ids added this iteration
};

using TrainProgress = std::function<void(const std::string&)>;

/// Algorithm-2 relaxation loop: dual_passes × (inner_steps minibatch steps,
/// then λ_c += ρ·median_t ν_c).
void train_lagrangian(Mlp& net, ConstraintSet& cs, const Normalizer& norm, const ViolationModel& vm,
                      const TrainingSet& ts, const TrainConfig& cfg, std::mt19937_64& rng, double* last_loss = nullptr);

struct TrainedModel {
  std::string grid_name;
  std::uint64_t fingerprint = 0;
  Mlp net;
  Normalizer norm;
  ConstraintSet constraints;
  TrainConfig config;
  std::vector<OuterLog> log;
  bool converged = false;
  std::string message;

  std::vector<double> predict(std::span<const double> load) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& loads) const;  // buses × T → generators × T
  void check_grid(const Grid& grid) const;
};

/// Pure supervised regression on 𝕃₀ (no constraints).
TrainedModel train_baseline(const Grid& grid, const Dataset& data, const TrainConfig& cfg,
                            const TrainProgress& progress = {});

/// Algorithm 3: Lagrangian training with contingency states added on demand.
TrainedModel train_ccga_dnn(const Grid& grid, const Dataset& data, const TrainConfig& cfg,
                            const TrainProgress& progress = {});

/// First line: JSON header (`scopf-model/v1`); then the raw little-endian float64 parameters.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace scopf
