#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "scopf/ccga.hpp"
#include "scopf/grid.hpp"
#include "scopf/milp.hpp"

namespace scopf {

/// Instance t gets  nominal · (base + t·step) · (1 + u),  u ~ U(−noise, noise) per bus.
struct LoadGenConfig {
  double base = 0.82;
  double step = 0.00002;
  double noise = 0.005;
};

/// Deterministic in (grid, count, seed, cfg). Stops early, returning fewer
/// vectors, at the first instance whose total exceeds total generator capability.
std::vector<LoadVector> generate_loads(const Grid& grid, std::size_t count, std::uint64_t seed,
                                       const LoadGenConfig& cfg = {});

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit_uniform(std::uint64_t bits);

struct Instance {
  std::size_t index = 0;                     // position in the generated load sequence
  std::vector<double> load;                  // d, per bus
  std::vector<double> dispatch;              // g, per generator
  std::vector<double> signal;                // n_s, per contingency (grid order)
  std::vector<std::vector<double>> contingency_dispatch;       // g_s
  std::vector<std::vector<std::uint8_t>> below_limit;          // x_s
  double objective = 0.0;
  double cost = 0.0;
  double phi = 0.0;
  int iterations = 0;
  std::vector<int> added_states;             // generator ids in S at termination

  double total_load() const;
};

struct Exclusion {
  std::size_t index = 0;
  std::string status;
  std::string message;
};

struct Dataset {
  std::string grid_name;
  std::uint64_t fingerprint = 0;
  std::size_t num_buses = 0;
  std::size_t num_generators = 0;
  std::vector<int> contingencies;            // generator ids
  std::uint64_t seed = 0;
  std::size_t requested = 0;
  LoadGenConfig generation;
  double epsilon = 0.05;
  double rel_gap = 0.0025;
  std::vector<Instance> instances;           // sorted by index
  std::vector<Exclusion> excluded;           // sorted by index

  std::size_t size() const { return instances.size(); }
  void check_grid(const Grid& grid) const;   // throws on fingerprint mismatch
};

using BackendFactory = std::function<std::unique_ptr<SolverBackend>()>;
using LabelProgress = std::function<void(std::size_t done, std::size_t total)>;

struct LabelConfig {
  CcgaConfig ccga;
  unsigned workers = 1;
};

/// Labels every load with run_ccga. Master infeasibility, solver failures and
/// failed audits are recorded in `excluded`, never thrown.
Dataset label_instances(const Grid& grid, const std::vector<LoadVector>& loads, const LabelConfig& cfg,
                        const BackendFactory& backends, const LabelProgress& progress = {});

/// Seeded shuffle, then the first floor(fraction·n) instances train and the rest test.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

/// `path` holds one JSON header line and one JSON record per instance;
/// dense vectors go to the little-endian sidecar `path + ".bin"`.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace scopf
