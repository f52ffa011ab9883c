#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scopf {

/// Raised by parse_grid / validate. `kind` distinguishes the failure class so
/// callers (and tests) can react without parsing the message.
class GridError : public std::runtime_error {
public:
  enum class Kind { Schema, Disconnected, NonconvexCost, MissingRefBus, Capacity, Invalid };

  GridError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

struct Bus {
  int id = 0;
  double load_mw = 0.0;  // nominal net load
};

struct Line {
  int id = 0;
  int from_bus = 0;      // bus ids, not indices
  int to_bus = 0;
  double susceptance = 0.0;  // p.u.
  double capacity_mw = 0.0;
};

/// Convex piecewise-linear cost h(g); breakpoints in MW, cost in $/h.
struct CostBreakpoint {
  double mw = 0.0;
  double cost = 0.0;
};

struct Generator {
  int id = 0;
  int bus = 0;
  double p_min = 0.0;     // g_
  double p_max = 0.0;     // ḡ, operating limit
  double capacity = 0.0;  // ĝ
  double gamma = 0.0;     // APR participation, (0, 1]
  std::vector<CostBreakpoint> cost;

  /// Primary-response limit r̄ = γ·ĝ.
  double response_limit() const { return gamma * capacity; }
};

/// Static network. Buses, lines and generators are stored in file order;
/// everything downstream addresses them by index. Immutable after parse.
class Grid {
public:
  Grid(std::string name, std::vector<Bus> buses, std::vector<Line> lines,
       std::vector<Generator> generators, int ref_bus, std::vector<int> contingencies);

  const std::string& name() const { return name_; }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<Generator>& generators() const { return generators_; }

  std::size_t num_buses() const { return buses_.size(); }
  std::size_t num_lines() const { return lines_.size(); }
  std::size_t num_generators() const { return generators_.size(); }

  int ref_bus() const { return ref_bus_; }
  std::size_t ref_bus_index() const { return bus_index(ref_bus_); }

  /// Contingencies as generator indices, sorted by generator id.
  const std::vector<std::size_t>& contingencies() const { return contingencies_; }

  std::size_t bus_index(int bus_id) const;
  std::size_t generator_index(int generator_id) const;
  std::size_t line_from(std::size_t l) const { return line_from_[l]; }
  std::size_t line_to(std::size_t l) const { return line_to_[l]; }
  std::size_t generator_bus(std::size_t i) const { return gen_bus_[i]; }

  std::vector<double> nominal_load() const;
  std::vector<double> p_min() const;
  std::vector<double> p_max() const;
  std::vector<double> response_limits() const;
  std::vector<double> line_capacities() const;
  double total_p_max() const;

  /// Cost of a full dispatch, Σ hᵢ(gᵢ). Points outside a generator's
  /// breakpoint range are extrapolated along the end segment.
  double cost(std::span<const double> dispatch) const;

  /// Stable 64-bit fingerprint of the canonical JSON form.
  std::uint64_t fingerprint() const;
  std::string fingerprint_hex() const;

  /// Canonical JSON text (the parse_grid schema).
  std::string to_json() const;

  /// Returns a copy with a different reference bus.
  Grid with_ref_bus(int ref_bus) const;

private:
  void validate() const;

  std::string name_;
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> generators_;
  int ref_bus_ = 0;
  std::vector<std::size_t> contingencies_;
  std::vector<std::size_t> line_from_, line_to_, gen_bus_;
};

double piecewise_cost(const std::vector<CostBreakpoint>& curve, double mw);

/// Samples `segments` equal-width linear pieces of c2·p² + c1·p + c0 over
/// [p_min, p_max]. Used when source data only carries polynomial costs.
std::vector<CostBreakpoint> sample_quadratic_cost(double c2, double c1, double c0, double p_min,
                                                  double p_max, int segments = 5);

Grid parse_grid(std::string_view text);
Grid load_grid_file(const std::string& path);

/// Per-bus net load d. `exceeds_capacity` is set at construction when
/// e᷀ᵀd > Σ ḡ; such instances are infeasible before any solve.
struct LoadVector {
  std::vector<double> mw;
  bool exceeds_capacity = false;

  LoadVector() = default;
  LoadVector(const Grid& grid, std::vector<double> values);

  double total() const;
  std::size_t size() const { return mw.size(); }
};

}  // namespace scopf
