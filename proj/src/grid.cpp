#include "scopf/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace scopf {

using json = nlohmann::json;

namespace {

constexpr double kCoverTol = 1e-9;

[[noreturn]] void fail(GridError::Kind kind, const std::string& msg) { throw GridError(kind, msg); }

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

template <class T>
T field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(GridError::Kind::Schema, where + ": missing key '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    fail(GridError::Kind::Schema, where + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

double piecewise_cost(const std::vector<CostBreakpoint>& curve, double mw) {
  if (curve.size() == 1) return curve.front().cost;
  // locate segment; extrapolate on the end pieces
  std::size_t k = 0;
  while (k + 2 < curve.size() && mw > curve[k + 1].mw) ++k;
  const auto& a = curve[k];
  const auto& b = curve[k + 1];
  const double slope = (b.cost - a.cost) / (b.mw - a.mw);
  return a.cost + slope * (mw - a.mw);
}

std::vector<CostBreakpoint> sample_quadratic_cost(double c2, double c1, double c0, double p_min,
                                                  double p_max, int segments) {
  std::vector<CostBreakpoint> out;
  double hi = p_max;
  if (hi <= p_min) hi = p_min + 1.0;
  for (int k = 0; k <= segments; ++k) {
    const double p = p_min + (hi - p_min) * k / segments;
    out.push_back({p, c2 * p * p + c1 * p + c0});
  }
  return out;
}

Grid::Grid(std::string name, std::vector<Bus> buses, std::vector<Line> lines,
           std::vector<Generator> generators, int ref_bus, std::vector<int> contingencies)
    : name_(std::move(name)),
      buses_(std::move(buses)),
      lines_(std::move(lines)),
      generators_(std::move(generators)),
      ref_bus_(ref_bus) {
  if (buses_.empty()) fail(GridError::Kind::Schema, "grid has no buses");
  std::set<int> ids;
  for (const auto& b : buses_)
    if (!ids.insert(b.id).second)
      fail(GridError::Kind::Schema, "duplicate bus id " + std::to_string(b.id));
  if (!ids.count(ref_bus_))
    fail(GridError::Kind::MissingRefBus, "ref_bus " + std::to_string(ref_bus_) + " is not a bus");

  for (const auto& l : lines_) {
    if (!ids.count(l.from_bus) || !ids.count(l.to_bus))
      fail(GridError::Kind::Schema, "line " + std::to_string(l.id) + " references an unknown bus");
    line_from_.push_back(bus_index(l.from_bus));
    line_to_.push_back(bus_index(l.to_bus));
  }
  std::set<int> gen_ids;
  for (const auto& g : generators_) {
    if (!ids.count(g.bus))
      fail(GridError::Kind::Schema, "generator " + std::to_string(g.id) + " references an unknown bus");
    if (!gen_ids.insert(g.id).second)
      fail(GridError::Kind::Schema, "duplicate generator id " + std::to_string(g.id));
    gen_bus_.push_back(bus_index(g.bus));
  }
  std::sort(contingencies.begin(), contingencies.end());
  contingencies.erase(std::unique(contingencies.begin(), contingencies.end()), contingencies.end());
  for (int id : contingencies) {
    if (!gen_ids.count(id))
      fail(GridError::Kind::Schema, "contingency references unknown generator " + std::to_string(id));
    contingencies_.push_back(generator_index(id));
  }
  validate();
}

void Grid::validate() const {
  for (const auto& l : lines_) {
    const std::string tag = "line " + std::to_string(l.id);
    if (l.from_bus == l.to_bus) fail(GridError::Kind::Invalid, tag + " is a self-loop");
    if (!(l.capacity_mw > 0.0)) fail(GridError::Kind::Invalid, tag + " capacity must be > 0");
    if (!(l.susceptance > 0.0)) fail(GridError::Kind::Invalid, tag + " susceptance must be > 0");
  }
  for (const auto& g : generators_) {
    const std::string tag = "generator " + std::to_string(g.id);
    if (g.p_min > g.p_max)
      fail(GridError::Kind::Capacity, tag + ": lower limit exceeds upper operating limit");
    if (g.p_max > g.capacity)
      fail(GridError::Kind::Capacity, tag + ": upper operating limit exceeds capacity");
    if (!(g.gamma > 0.0 && g.gamma <= 1.0))
      fail(GridError::Kind::Invalid, tag + ": gamma must lie in (0, 1]");
    if (g.response_limit() < 0.0) fail(GridError::Kind::Invalid, tag + ": negative response limit");
    if (g.cost.size() < 2) fail(GridError::Kind::Schema, tag + ": cost needs at least 2 breakpoints");
    double prev_slope = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < g.cost.size(); ++k) {
      const double dx = g.cost[k].mw - g.cost[k - 1].mw;
      if (!(dx > 0.0))
        fail(GridError::Kind::NonconvexCost, tag + ": cost breakpoints must be strictly increasing in MW");
      const double slope = (g.cost[k].cost - g.cost[k - 1].cost) / dx;
      if (slope < prev_slope - 1e-9 * std::max(1.0, std::abs(prev_slope)))
        fail(GridError::Kind::NonconvexCost, tag + ": cost slopes must be nondecreasing (convex)");
      prev_slope = slope;
    }
    if (g.cost.front().mw > g.p_min + kCoverTol || g.cost.back().mw < g.p_max - kCoverTol)
      fail(GridError::Kind::Schema, tag + ": cost breakpoints must span [p_min, p_max]");
  }

  // connectivity
  std::vector<std::vector<std::size_t>> adj(buses_.size());
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    adj[line_from_[l]].push_back(line_to_[l]);
    adj[line_to_[l]].push_back(line_from_[l]);
  }
  std::vector<char> seen(buses_.size(), 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
  }
  if (count != buses_.size())
    fail(GridError::Kind::Disconnected, "network is disconnected: " + std::to_string(buses_.size() - count) +
                                            " bus(es) unreachable from bus " + std::to_string(buses_[0].id));
}

std::size_t Grid::bus_index(int bus_id) const {
  for (std::size_t k = 0; k < buses_.size(); ++k)
    if (buses_[k].id == bus_id) return k;
  throw std::out_of_range("unknown bus id " + std::to_string(bus_id));
}

std::size_t Grid::generator_index(int generator_id) const {
  for (std::size_t k = 0; k < generators_.size(); ++k)
    if (generators_[k].id == generator_id) return k;
  throw std::out_of_range("unknown generator id " + std::to_string(generator_id));
}

std::vector<double> Grid::nominal_load() const {
  std::vector<double> d;
  for (const auto& b : buses_) d.push_back(b.load_mw);
  return d;
}

std::vector<double> Grid::p_min() const {
  std::vector<double> v;
  for (const auto& g : generators_) v.push_back(g.p_min);
  return v;
}

std::vector<double> Grid::p_max() const {
  std::vector<double> v;
  for (const auto& g : generators_) v.push_back(g.p_max);
  return v;
}

std::vector<double> Grid::response_limits() const {
  std::vector<double> v;
  for (const auto& g : generators_) v.push_back(g.response_limit());
  return v;
}

std::vector<double> Grid::line_capacities() const {
  std::vector<double> v;
  for (const auto& l : lines_) v.push_back(l.capacity_mw);
  return v;
}

double Grid::total_p_max() const {
  double s = 0.0;
  for (const auto& g : generators_) s += g.p_max;
  return s;
}

double Grid::cost(std::span<const double> dispatch) const {
  if (dispatch.size() != generators_.size())
    throw std::invalid_argument("cost: dispatch length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < generators_.size(); ++i) total += piecewise_cost(generators_[i].cost, dispatch[i]);
  return total;
}

std::string Grid::to_json() const {
  json doc;
  doc["name"] = name_;
  doc["ref_bus"] = ref_bus_;
  doc["buses"] = json::array();
  for (const auto& b : buses_) doc["buses"].push_back({{"id", b.id}, {"load", b.load_mw}});
  doc["lines"] = json::array();
  for (const auto& l : lines_)
    doc["lines"].push_back({{"id", l.id},
                            {"from", l.from_bus},
                            {"to", l.to_bus},
                            {"susceptance", l.susceptance},
                            {"capacity", l.capacity_mw}});
  doc["generators"] = json::array();
  for (const auto& g : generators_) {
    json cost = json::array();
    for (const auto& p : g.cost) cost.push_back({p.mw, p.cost});
    doc["generators"].push_back({{"id", g.id},
                                 {"bus", g.bus},
                                 {"p_min", g.p_min},
                                 {"p_max", g.p_max},
                                 {"capacity", g.capacity},
                                 {"gamma", g.gamma},
                                 {"cost", cost}});
  }
  json cont = json::array();
  for (auto i : contingencies_) cont.push_back(generators_[i].id);
  doc["contingencies"] = cont;
  return doc.dump(1);
}

std::uint64_t Grid::fingerprint() const { return fnv1a(to_json()); }

std::string Grid::fingerprint_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint()));
  return buf;
}

Grid Grid::with_ref_bus(int ref_bus) const {
  std::vector<int> cont;
  for (auto i : contingencies_) cont.push_back(generators_[i].id);
  return Grid(name_, buses_, lines_, generators_, ref_bus, cont);
}

Grid parse_grid(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(GridError::Kind::Schema, std::string("grid document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(GridError::Kind::Schema, "grid document must be a JSON object");
  for (const char* key : {"buses", "lines", "generators", "contingencies"})
    if (!doc.contains(key)) fail(GridError::Kind::Schema, std::string("missing top-level key '") + key + "'");

  std::vector<Bus> buses;
  for (const auto& b : doc["buses"]) {
    const std::string where = "bus entry";
    Bus bus;
    bus.id = field<int>(b, "id", where);
    bus.load_mw = b.contains("load") ? field<double>(b, "load", where) : 0.0;
    buses.push_back(bus);
  }
  std::vector<Line> lines;
  int next_line = 1;
  for (const auto& l : doc["lines"]) {
    const std::string where = "line entry";
    Line line;
    line.id = l.contains("id") ? field<int>(l, "id", where) : next_line;
    next_line = line.id + 1;
    line.from_bus = field<int>(l, "from", where);
    line.to_bus = field<int>(l, "to", where);
    line.susceptance = field<double>(l, "susceptance", where);
    line.capacity_mw = field<double>(l, "capacity", where);
    lines.push_back(line);
  }
  std::vector<Generator> gens;
  for (const auto& g : doc["generators"]) {
    const std::string where = "generator entry";
    Generator gen;
    gen.id = field<int>(g, "id", where);
    gen.bus = field<int>(g, "bus", where);
    gen.p_min = field<double>(g, "p_min", where);
    gen.p_max = field<double>(g, "p_max", where);
    gen.capacity = g.contains("capacity") ? field<double>(g, "capacity", where) : gen.p_max;
    gen.gamma = field<double>(g, "gamma", where);
    const auto& cost = g.at("cost");
    if (!cost.is_array()) fail(GridError::Kind::Schema, "generator cost must be an array of [mw, $/h] pairs");
    for (const auto& p : cost) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        fail(GridError::Kind::Schema, "generator cost breakpoint must be [mw, $/h]");
      gen.cost.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    gens.push_back(std::move(gen));
  }

  int ref = 0;
  if (doc.contains("ref_bus") && !doc["ref_bus"].is_null()) {
    if (!doc["ref_bus"].is_number_integer()) fail(GridError::Kind::Schema, "ref_bus must be an integer bus id");
    ref = doc["ref_bus"].get<int>();
  } else if (!buses.empty()) {
    ref = std::min_element(buses.begin(), buses.end(), [](auto& a, auto& b) { return a.id < b.id; })->id;
  }

  std::vector<int> cont;
  const auto& c = doc["contingencies"];
  if (c.is_string() && c.get<std::string>() == "all") {
    for (const auto& g : gens) cont.push_back(g.id);
  } else if (c.is_array()) {
    for (const auto& id : c) {
      if (!id.is_number_integer()) fail(GridError::Kind::Schema, "contingencies must list generator ids");
      cont.push_back(id.get<int>());
    }
  } else {
    fail(GridError::Kind::Schema, "contingencies must be an array of generator ids or \"all\"");
  }

  return Grid(doc.value("name", std::string("grid")), std::move(buses), std::move(lines), std::move(gens), ref,
              std::move(cont));
}

Grid load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

LoadVector::LoadVector(const Grid& grid, std::vector<double> values) : mw(std::move(values)) {
  if (mw.size() != grid.num_buses()) throw std::invalid_argument("load vector length does not match bus count");
  exceeds_capacity = total() > grid.total_p_max();
}

double LoadVector::total() const { return std::accumulate(mw.begin(), mw.end(), 0.0); }

}  // namespace scopf
