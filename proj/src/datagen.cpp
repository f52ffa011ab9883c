#include "scopf/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace scopf {

static_assert(std::endian::native == std::endian::little, "dataset sidecar assumes a little-endian host");

namespace {

using json = nlohmann::json;

constexpr const char* kFormat = "scopf-dataset/v1";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

/// Unbiased integer in [0, n) by rejection.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

Instance make_instance(std::size_t index, const LoadVector& load, const CcgaResult& r, const Grid& grid) {
  Instance inst;
  inst.index = index;
  inst.load = load.mw;
  inst.dispatch = r.dispatch;
  for (const auto& st : r.states) {
    inst.signal.push_back(st.signal);
    inst.contingency_dispatch.push_back(st.dispatch);
    inst.below_limit.push_back(st.below_limit);
  }
  inst.objective = r.objective;
  inst.cost = r.cost;
  inst.phi = r.phi;
  inst.iterations = r.iterations;
  for (std::size_t s : r.cuts.states()) inst.added_states.push_back(grid.generators()[s].id);
  return inst;
}

template <class T>
void write_raw(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> read_raw(std::istream& in, std::size_t n) {
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw std::runtime_error("dataset sidecar truncated");
  return v;
}

std::size_t record_bytes(std::size_t buses, std::size_t gens, std::size_t conts) {
  return (buses + gens + conts + conts * gens) * sizeof(double) + conts * gens;
}

std::string sidecar_name(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return (slash == std::string::npos ? path : path.substr(slash + 1)) + ".bin";
}

}  // namespace

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::vector<LoadVector> generate_loads(const Grid& grid, std::size_t count, std::uint64_t seed,
                                       const LoadGenConfig& cfg) {
  if (count < 1) throw std::invalid_argument("generate_loads: count must be >= 1");
  if (!(cfg.noise >= 0.0) || !(cfg.base > 0.0)) throw std::invalid_argument("generate_loads: bad distribution");
  std::mt19937_64 rng(seed);
  const auto nominal = grid.nominal_load();
  std::vector<LoadVector> out;
  out.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    const double scale = cfg.base + static_cast<double>(t) * cfg.step;
    std::vector<double> d(nominal.size());
    for (std::size_t b = 0; b < d.size(); ++b) {
      const double u = cfg.noise * (2.0 * unit_uniform(rng()) - 1.0);
      d[b] = nominal[b] * scale * (1.0 + u);
    }
    LoadVector lv(grid, std::move(d));
    if (lv.exceeds_capacity) break;
    out.push_back(std::move(lv));
  }
  return out;
}

double Instance::total_load() const { return std::accumulate(load.begin(), load.end(), 0.0); }

void Dataset::check_grid(const Grid& grid) const {
  if (grid.fingerprint() != fingerprint)
    throw std::runtime_error("dataset was generated for grid fingerprint " + hex64(fingerprint) + ", not " +
                             grid.fingerprint_hex());
}

Dataset label_instances(const Grid& grid, const std::vector<LoadVector>& loads, const LabelConfig& cfg,
                        const BackendFactory& backends, const LabelProgress& progress) {
  cfg.ccga.validate();
  const PtdfModel ptdf = build_ptdf(grid);
  const std::size_t n = loads.size();
  std::vector<std::optional<Instance>> done(n);
  std::vector<std::optional<Exclusion>> failed(n);
  std::atomic<std::size_t> next{0}, finished{0};
  std::mutex progress_mu;

  auto work = [&] {
    auto backend = backends();
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        const CcgaProblem problem(grid, ptdf, loads[k]);
        const CcgaResult r = run_ccga(problem, cfg.ccga, *backend);
        if (r.ok() && r.audit_passed)
          done[k] = make_instance(k, loads[k], r, grid);
        else
          failed[k] = Exclusion{k, r.ok() ? "audit_failed" : to_string(r.status), r.message};
      } catch (const std::exception& e) {
        failed[k] = Exclusion{k, "error", e.what()};
      }
      const std::size_t f = ++finished;
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(f, n);
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  Dataset data;
  data.grid_name = grid.name();
  data.fingerprint = grid.fingerprint();
  data.num_buses = grid.num_buses();
  data.num_generators = grid.num_generators();
  for (std::size_t s : grid.contingencies()) data.contingencies.push_back(grid.generators()[s].id);
  data.requested = n;
  data.epsilon = cfg.ccga.epsilon;
  data.rel_gap = cfg.ccga.rel_gap;
  for (std::size_t k = 0; k < n; ++k) {
    if (done[k]) data.instances.push_back(std::move(*done[k]));
    if (failed[k]) data.excluded.push_back(std::move(*failed[k]));
  }
  return data;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_dataset: fraction must be in (0, 1)");
  std::vector<std::size_t> order(data.instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(order.size())));

  Dataset train = data, test = data;
  train.instances.clear();
  test.instances.clear();
  train.excluded.clear();
  test.excluded.clear();
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (auto k : a) train.instances.push_back(data.instances[k]);
  for (auto k : b) test.instances.push_back(data.instances[k]);
  return {std::move(train), std::move(test)};
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  std::ofstream bin(path + ".bin", std::ios::binary);
  if (!out || !bin) throw std::runtime_error("cannot write dataset " + path);

  json header = {{"format", kFormat},
                 {"grid", data.grid_name},
                 {"fingerprint", hex64(data.fingerprint)},
                 {"buses", data.num_buses},
                 {"generators", data.num_generators},
                 {"contingencies", data.contingencies},
                 {"seed", data.seed},
                 {"requested", data.requested},
                 {"generation", {{"base", data.generation.base}, {"step", data.generation.step},
                                 {"noise", data.generation.noise}}},
                 {"labeling", {{"epsilon", data.epsilon}, {"rel_gap", data.rel_gap}}},
                 {"instances", data.instances.size()},
                 {"excluded", data.excluded.size()},
                 {"sidecar", sidecar_name(path)}};
  out << header.dump() << '\n';

  const std::size_t S = data.contingencies.size(), G = data.num_generators;
  std::uint64_t offset = 0;
  for (const auto& inst : data.instances) {
    if (inst.load.size() != data.num_buses || inst.dispatch.size() != G || inst.signal.size() != S)
      throw std::runtime_error("save_dataset: instance dimensions disagree with header");
    json rec = {{"t", inst.index},        {"offset", offset},         {"objective", inst.objective},
                {"cost", inst.cost},      {"phi", inst.phi},          {"iterations", inst.iterations},
                {"added_states", inst.added_states}};
    out << rec.dump() << '\n';
    write_raw(bin, inst.load);
    write_raw(bin, inst.dispatch);
    write_raw(bin, inst.signal);
    for (const auto& v : inst.contingency_dispatch) write_raw(bin, v);
    for (const auto& v : inst.below_limit) write_raw(bin, v);
    offset += record_bytes(data.num_buses, G, S);
  }
  for (const auto& ex : data.excluded)
    out << json{{"t", ex.index}, {"excluded", ex.status}, {"message", ex.message}}.dump() << '\n';
  if (!out || !bin) throw std::runtime_error("error writing dataset " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path);
  Dataset data;
  std::string sidecar;
  try {
    const json h = json::parse(line);
    if (h.at("format") != kFormat) throw std::runtime_error("unsupported dataset format " + h.at("format").dump());
    data.grid_name = h.at("grid");
    data.fingerprint = parse_hex64(h.at("fingerprint"));
    data.num_buses = h.at("buses");
    data.num_generators = h.at("generators");
    data.contingencies = h.at("contingencies").get<std::vector<int>>();
    data.seed = h.at("seed");
    data.requested = h.at("requested");
    const auto& g = h.at("generation");
    data.generation = {g.at("base"), g.at("step"), g.at("noise")};
    data.epsilon = h.at("labeling").at("epsilon");
    data.rel_gap = h.at("labeling").at("rel_gap");
    sidecar = h.at("sidecar");
  } catch (const json::exception& e) {
    throw std::runtime_error("bad dataset header in " + path + ": " + e.what());
  }
  const auto slash = path.find_last_of('/');
  std::ifstream bin((slash == std::string::npos ? std::string() : path.substr(0, slash + 1)) + sidecar,
                    std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open dataset sidecar " + sidecar);

  const std::size_t N = data.num_buses, G = data.num_generators, S = data.contingencies.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      if (r.contains("excluded")) {
        data.excluded.push_back({r.at("t"), r.at("excluded"), r.value("message", "")});
        continue;
      }
      Instance inst;
      inst.index = r.at("t");
      inst.objective = r.at("objective");
      inst.cost = r.at("cost");
      inst.phi = r.at("phi");
      inst.iterations = r.at("iterations");
      inst.added_states = r.at("added_states").get<std::vector<int>>();
      bin.seekg(static_cast<std::streamoff>(r.at("offset").get<std::uint64_t>()));
      inst.load = read_raw<double>(bin, N);
      inst.dispatch = read_raw<double>(bin, G);
      inst.signal = read_raw<double>(bin, S);
      for (std::size_t k = 0; k < S; ++k) inst.contingency_dispatch.push_back(read_raw<double>(bin, G));
      for (std::size_t k = 0; k < S; ++k) inst.below_limit.push_back(read_raw<std::uint8_t>(bin, G));
      data.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw std::runtime_error("bad dataset record in " + path + ": " + e.what());
    }
  }
  return data;
}

}  // namespace scopf
