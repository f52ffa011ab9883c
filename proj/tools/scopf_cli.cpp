#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <toml.hpp>

#include "scopf/apr.hpp"
#include "scopf/ccga.hpp"
#include "scopf/datagen.hpp"
#include "scopf/formulations.hpp"
#include "scopf/grid.hpp"
#include "scopf/learner.hpp"
#include "scopf/metrics.hpp"
#include "scopf/ptdf.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scopf;

namespace {

constexpr int kOk = 0;
constexpr int kAlgorithmic = 1;
constexpr int kUsage = 2;

/// Exit 1: the computation ran but did not reach its goal.
struct AlgorithmicFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exit 2: bad flags, unreadable or unwritable files.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// TOML sections name subcommands; keys are long option names (`_` or `-`).
class TomlConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items;
    try {
      const toml::table tbl = toml::parse(input);
      collect(tbl, {}, items);
    } catch (const toml::parse_error& e) {
      throw CLI::ConversionError(std::string("config: ") + std::string(e.description()));
    }
    return items;
  }

private:
  static std::string scalar(const toml::node& n) {
    if (auto s = n.value<std::string>(); n.is_string()) return *s;
    if (n.is_boolean()) return *n.value<bool>() ? "true" : "false";
    if (n.is_integer()) return std::to_string(*n.value<std::int64_t>());
    if (n.is_floating_point()) {
      std::ostringstream os;
      os.precision(17);
      os << *n.value<double>();
      return os.str();
    }
    throw CLI::ConversionError("config: unsupported TOML value");
  }

  static void collect(const toml::table& tbl, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, node] : tbl) {
      std::string name(key.str());
      std::replace(name.begin(), name.end(), '_', '-');
      if (const auto* sub = node.as_table()) {
        auto p = parents;
        p.push_back(name);
        collect(*sub, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = name;
      if (const auto* arr = node.as_array())
        for (const auto& el : *arr) item.inputs.push_back(scalar(el));
      else
        item.inputs.push_back(scalar(node));
      out.push_back(std::move(item));
    }
  }
};

struct Common {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  bool quiet = false;

  std::string output(const std::string& name) const {
    const fs::path p(name);
    if (p.is_absolute()) return name;
    fs::create_directories(out_dir);
    return (fs::path(out_dir) / p).string();
  }
};

Grid read_grid(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("grid file not found: " + path);
  try {
    return load_grid_file(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot load grid " + path + ": " + e.what());
  }
}

Dataset read_dataset(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("dataset file not found: " + path);
  try {
    return load_dataset(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot load dataset " + path + ": " + e.what());
  }
}

TrainedModel read_model(const std::string& path, const Grid& grid) {
  if (!fs::exists(path)) throw UsageError("model file not found: " + path);
  TrainedModel m;
  try {
    m = load_model(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot load model " + path + ": " + e.what());
  }
  try {
    m.check_grid(grid);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return m;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  return out;
}

/// A JSON array of per-bus MW, or an object with a "load" array.
std::vector<double> read_load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open load file " + path);
  try {
    const json j = json::parse(in);
    return (j.is_object() ? j.at("load") : j).get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw UsageError("bad load file " + path + ": " + e.what());
  }
}

void log(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << '\n';
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string grid, out = "dataset.jsonl";
  std::size_t count = 5000;
  unsigned workers = 1;
  double epsilon = 0.05, rel_gap = 0.0025, split = 0.0;
  LoadGenConfig gen;
};

int cmd_gen_data(const Common& c, const GenDataArgs& a) {
  const Grid grid = read_grid(a.grid);
  if (a.count < 1) throw UsageError("--count must be >= 1");
  if (a.split != 0.0 && !(a.split > 0.0 && a.split < 1.0)) throw UsageError("--split must be in (0, 1)");
  const auto loads = generate_loads(grid, a.count, c.seed, a.gen);
  if (loads.size() < a.count)
    log(c, "load scaling reaches generation capacity after " + std::to_string(loads.size()) + " instances");

  LabelConfig cfg;
  cfg.ccga.epsilon = a.epsilon;
  cfg.ccga.rel_gap = a.rel_gap;
  cfg.workers = a.workers;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t last = 0;
  Dataset data = label_instances(grid, loads, cfg, [] { return make_highs_backend(); },
                                 [&](std::size_t done, std::size_t total) {
                                   if (c.quiet || (done - last < 50 && done != total)) return;
                                   last = done;
                                   const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                                   std::cerr << "labeled " << done << "/" << total << " (" << s << " s)\n";
                                 });
  data.seed = c.seed;
  data.generation = a.gen;
  data.requested = a.count;
  const std::string path = c.output(a.out);
  save_dataset(data, path);
  std::cout << "wrote " << path << ": " << data.size() << " instances, " << data.excluded.size() << " excluded\n";
  for (const auto& e : data.excluded) log(c, "  excluded " + std::to_string(e.index) + ": " + e.status + " " + e.message);

  if (a.split > 0.0) {
    auto [train, test] = split_dataset(data, a.split, c.seed);
    const fs::path base = fs::path(path).replace_extension();
    const std::string tp = base.string() + ".train.jsonl", vp = base.string() + ".test.jsonl";
    save_dataset(train, tp);
    save_dataset(test, vp);
    std::cout << "split " << train.size() << " train -> " << tp << ", " << test.size() << " test -> " << vp << '\n';
  }
  return data.instances.empty() ? kAlgorithmic : kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string grid, dataset, out = "model.bin";
  bool baseline = false;
  std::string optimizer = "sgd", scaling = "zscore";
  TrainConfig cfg;
};

void write_train_log(const std::string& path, const TrainedModel& m, const Grid& grid) {
  auto out = open_out(path);
  out << "iteration,seconds,loss,balance_median,nominal_median_max,phi_median_MW,states_added,violation_counts\n";
  for (const auto& l : m.log) {
    out << l.iteration << ',' << l.seconds << ',' << l.loss << ',' << l.balance_median << ',' << l.nominal_median_max
        << ',' << l.phi_median << ',';
    for (std::size_t k = 0; k < l.added.size(); ++k) out << (k ? ";" : "") << l.added[k];
    out << ',';
    bool first = true;
    const auto& cont = grid.contingencies();
    for (std::size_t k = 0; k < l.counts.size(); ++k)
      if (l.counts[k]) {
        out << (first ? "" : ";") << grid.generators()[cont[k]].id << ':' << l.counts[k];
        first = false;
      }
    out << '\n';
  }
}

int cmd_train(const Common& c, TrainArgs a) {
  const Grid grid = read_grid(a.grid);
  const Dataset data = read_dataset(a.dataset);
  try {
    data.check_grid(grid);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  a.cfg.seed = c.seed;
  if (a.optimizer == "sgd")
    a.cfg.optimizer = Optimizer::Sgd;
  else if (a.optimizer == "adam")
    a.cfg.optimizer = Optimizer::Adam;
  else
    throw UsageError("--optimizer must be sgd or adam");
  if (a.scaling == "zscore")
    a.cfg.scaling = Scaling::ZScore;
  else if (a.scaling == "nominal")
    a.cfg.scaling = Scaling::Nominal;
  else
    throw UsageError("--scaling must be zscore or nominal");
  try {
    a.cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const TrainProgress progress = [&](const std::string& msg) { log(c, msg); };
  TrainedModel m;
  try {
    m = a.baseline ? train_baseline(grid, data, a.cfg, progress) : train_ccga_dnn(grid, data, a.cfg, progress);
  } catch (const std::runtime_error& e) {
    throw AlgorithmicFailure(e.what());
  }
  const std::string path = c.output(a.out);
  save_model(m, path);
  write_train_log(path + ".log.csv", m, grid);
  const auto& last = m.log.back();
  std::cout << "wrote " << path << ": " << m.log.size() << " outer iteration(s), states {";
  for (std::size_t k = 0; k < m.constraints.states.size(); ++k)
    std::cout << (k ? "," : "") << grid.generators()[m.constraints.states[k]].id;
  std::cout << "}, balance median " << last.balance_median << ", phi median " << last.phi_median << " MW, "
            << (m.converged ? "converged" : "NOT converged: " + m.message) << '\n';
  return m.converged ? kOk : kAlgorithmic;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string grid, model, load, dataset, out;
  std::size_t index = 0;
};

std::vector<double> pick_load(const Grid& grid, const std::string& load_file, const std::string& dataset,
                              std::size_t index, std::optional<double> scale) {
  if (!load_file.empty()) {
    auto d = read_load_file(load_file);
    if (d.size() != grid.num_buses()) throw UsageError("load file has " + std::to_string(d.size()) + " entries, grid has " + std::to_string(grid.num_buses()) + " buses");
    return d;
  }
  if (!dataset.empty()) {
    const Dataset data = read_dataset(dataset);
    for (const auto& inst : data.instances)
      if (inst.index == index) return inst.load;
    throw UsageError("dataset has no instance with index " + std::to_string(index));
  }
  auto d = grid.nominal_load();
  for (double& v : d) v *= scale.value_or(0.82);
  return d;
}

int cmd_predict(const Common& c, const PredictArgs& a) {
  const Grid grid = read_grid(a.grid);
  const TrainedModel m = read_model(a.model, grid);
  const auto d = pick_load(grid, a.load, a.dataset, a.index, std::nullopt);
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = m.predict(d);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const ViolationModel vm(grid);
  const TrainingSet ts = vm.training_set(std::vector<std::vector<double>>{d});
  const PredictionScan sc = vm.scan(g, ts, 0);
  json out = {{"prediction", g},
              {"total_load", ts.total(0)},
              {"balance_pct", balance_violation_pct(g, ts.total(0))},
              {"phi_MW", sc.phi},
              {"rlv_pct", sc.phi_rel * 100.0},
              {"seconds", secs}};
  if (sc.contingency) out["phi_contingency"] = grid.generators()[*sc.contingency].id;
  if (sc.line) out["phi_line"] = grid.lines()[*sc.line].id;
  if (a.out.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    const std::string path = c.output(a.out);
    open_out(path) << out.dump(2) << '\n';
    std::cout << "wrote " << path << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- solve

struct SolveArgs {
  std::string grid, mode = "ccga", model, load, dataset, out = "solution.json", trace, lp;
  std::size_t index = 0;
  std::optional<double> scale;
  double epsilon = 0.05, rel_gap = 0.0025, time_limit = 0.0;
};

json result_json(const Grid& grid, const CcgaResult& r) {
  std::vector<int> states;
  for (std::size_t s : r.cuts.states()) states.push_back(grid.generators()[s].id);
  return {{"status", to_string(r.status)}, {"message", r.message}, {"dispatch", r.dispatch},
          {"cost", r.cost},               {"objective", r.objective}, {"bound", r.bound},
          {"distance", r.distance},       {"phi_MW", r.audit.phi}, {"iterations", r.iterations},
          {"states", states},             {"cuts", r.cuts.num_pairs()}, {"solve_seconds", r.solve_seconds()},
          {"audit_passed", r.audit_passed}};
}

int cmd_solve(const Common& c, const SolveArgs& a) {
  const bool needs_model = a.mode == "repair" || a.mode == "race";
  if (needs_model && a.model.empty()) throw UsageError("--mode " + a.mode + " requires --model");
  const Grid grid = read_grid(a.grid);
  std::optional<TrainedModel> model;
  if (!a.model.empty()) model = read_model(a.model, grid);
  const auto d = pick_load(grid, a.load, a.dataset, a.index, a.scale);
  const PtdfModel ptdf = build_ptdf(grid);
  const CcgaProblem problem(grid, ptdf, LoadVector(grid, d));
  if (problem.load.exceeds_capacity) {
    std::cerr << "total load exceeds total generator capacity\n";
    return kAlgorithmic;
  }
  CcgaConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.rel_gap = a.rel_gap;
  if (a.time_limit > 0) cfg.time_limit = a.time_limit;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  if (!a.lp.empty()) {
    const std::string path = c.output(a.lp);
    const Formulation f = a.mode == "extensive" ? build_extensive(grid, problem.cuts, problem.load)
                          : a.mode == "repair"  ? build_fr_master(grid, problem.cuts, problem.load, CutSet{}, model->predict(d))
                                                : build_master(grid, problem.cuts, problem.load, CutSet{});
    auto out = open_out(path);
    f.model.write_lp(out);
    log(c, "wrote " + path);
  }

  auto backend = make_highs_backend();
  json out;
  bool ok = false;
  if (a.mode == "extensive") {
    const Formulation f = build_extensive(grid, problem.cuts, problem.load);
    SolveOptions opts;
    opts.rel_gap = cfg.rel_gap;
    opts.time_limit = cfg.time_limit;
    const SolveResult r = backend->solve(f.model, opts);
    out = {{"status", to_string(r.status)}, {"objective", r.objective}, {"bound", r.best_bound},
           {"solve_seconds", r.seconds}, {"binaries", f.model.num_binaries()}};
    if (r.has_solution()) {
      const auto g = f.nominal_dispatch(r.x);
      const SecurityAudit audit =
          audit_dispatch(grid, problem.cuts, g, problem.load.total(), default_balance_tol(problem.load.total()));
      out["dispatch"] = g;
      out["cost"] = grid.cost(g);
      out["phi_MW"] = audit.phi;
      ok = r.status == SolveStatus::Optimal && audit.secure(cfg.epsilon, default_balance_tol(problem.load.total()));
    }
  } else if (a.mode == "ccga" || a.mode == "repair") {
    std::vector<double> prediction;
    if (a.mode == "repair") prediction = model->predict(d);
    const CcgaResult r = a.mode == "ccga" ? run_ccga(problem, cfg, *backend) : run_fr_ccga(problem, prediction, cfg, *backend);
    out = result_json(grid, r);
    if (a.mode == "repair") out["prediction"] = prediction;
    ok = r.ok() && r.audit_passed;
    if (!a.trace.empty()) {
      const std::string path = c.output(a.trace);
      auto t = open_out(path);
      write_trace_csv(t, r);
      log(c, "wrote " + path);
    }
  } else if (a.mode == "race") {
    auto upper = make_highs_backend();
    const auto prediction = model->predict(d);
    const GapTrace g = run_bounds_race(problem, prediction, cfg, *backend, *upper);
    out = {{"lower", g.lower}, {"upper", g.upper}, {"gap", g.gap}, {"gap_closed", g.gap_closed},
           {"ccga", result_json(grid, g.lower_run)}, {"fr_ccga", result_json(grid, g.upper_run)}};
    ok = g.upper_run.ok() || g.lower_run.ok();
    const std::string path = c.output(a.trace.empty() ? "gap_trace.csv" : a.trace);
    auto t = open_out(path);
    write_gap_csv(t, g);
    log(c, "wrote " + path);
  } else {
    throw UsageError("--mode must be extensive, ccga, repair or race");
  }
  const std::string path = c.output(a.out);
  open_out(path) << out.dump(2) << '\n';
  std::cout << a.mode << ": " << out.value("status", ok ? "ok" : "failed");
  if (out.contains("cost")) std::cout << ", cost " << out["cost"].get<double>();
  if (out.contains("phi_MW")) std::cout << ", phi " << out["phi_MW"].get<double>() << " MW";
  if (out.contains("gap")) std::cout << ", gap " << out["gap"].get<double>();
  std::cout << " -> " << path << '\n';
  return ok ? kOk : kAlgorithmic;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string grid, model, dataset, csv = "bench.csv", report = "bench_report.txt";
  std::size_t count = 200;
  double epsilon = 0.05, rel_gap = 0.0025;
};

int cmd_bench(const Common& c, const BenchArgs& a) {
  if (a.count == 0) throw UsageError("bench: 0 instances requested, nothing to report");
  const Grid grid = read_grid(a.grid);
  const TrainedModel model = read_model(a.model, grid);
  Dataset data = read_dataset(a.dataset);
  try {
    data.check_grid(grid);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (data.instances.empty()) throw UsageError("bench: dataset is empty");

  // seeded sample without replacement, kept in index order
  std::vector<std::size_t> pick(data.instances.size());
  std::iota(pick.begin(), pick.end(), 0);
  if (a.count < pick.size()) {
    std::mt19937_64 rng(c.seed);
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(a.count);
    std::sort(pick.begin(), pick.end());
  }

  const PtdfModel ptdf = build_ptdf(grid);
  const ViolationModel vm(grid);
  auto backend = make_highs_backend();
  CcgaConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.rel_gap = a.rel_gap;

  std::vector<BenchRow> rows;
  std::vector<std::vector<double>> labels, preds;
  for (std::size_t n = 0; n < pick.size(); ++n) {
    const Instance& inst = data.instances[pick[n]];
    BenchRow row;
    row.index = inst.index;
    const auto g = model.predict(inst.load);
    const TrainingSet ts = vm.training_set(std::vector<std::vector<double>>{inst.load});
    row.total_load = ts.total(0);
    row.balance_pct = balance_violation_pct(g, row.total_load);
    row.rlv_pct = vm.scan(g, ts, 0).phi_rel * 100.0;
    labels.push_back(inst.dispatch);
    preds.push_back(g);
    try {
      const CcgaProblem problem(grid, ptdf, LoadVector(grid, inst.load));
      const CcgaResult cc = run_ccga(problem, cfg, *backend);
      const CcgaResult fr = run_fr_ccga(problem, g, cfg, *backend);
      row.ccga_ok = cc.ok() && cc.audit_passed;
      row.fr_ok = fr.ok() && fr.audit_passed;
      row.ccga_cost = cc.cost;
      row.fr_cost = fr.cost;
      row.ccga_seconds = cc.solve_seconds();
      row.fr_seconds = fr.solve_seconds();
      row.ccga_iterations = cc.iterations;
      row.fr_iterations = fr.iterations;
      row.fr_phi = fr.audit.phi;
      if (!fr.dispatch.empty()) row.distance_pct = distance_pct(g, fr.dispatch);
      if (row.ccga_ok && row.fr_ok) row.cost_increase_pct = (fr.cost - cc.cost) / cc.cost * 100.0;
      if (!row.ccga_ok) row.note = std::string("ccga ") + to_string(cc.status) + " " + cc.message;
      if (!row.fr_ok) row.note += std::string(" fr ") + to_string(fr.status) + " " + fr.message;
    } catch (const std::exception& e) {
      row.note = e.what();
    }
    if (!row.note.empty()) log(c, "instance " + std::to_string(row.index) + " failed: " + row.note);
    if (!c.quiet && (n + 1) % 20 == 0) std::cerr << "bench " << n + 1 << "/" << pick.size() << '\n';
    rows.push_back(std::move(row));
  }

  const BenchReport rep = aggregate(rows, cfg.epsilon, band_errors(labels, preds));
  const std::string csv = c.output(a.csv), txt = c.output(a.report);
  {
    auto out = open_out(csv);
    write_bench_csv(out, rows);
  }
  {
    auto out = open_out(txt);
    write_report_table(out, rep);
  }
  write_report_table(std::cout, rep);
  std::cout << "wrote " << csv << " and " << txt << '\n';
  return rep.failed == 0 ? kOk : kAlgorithmic;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DC security-constrained OPF with automatic primary response"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<TomlConfig>());
  app.set_config("--config", "", "TOML file; [section] names a subcommand, keys are long option names");

  Common common;
  app.add_option("--seed", common.seed, "RNG seed")->capture_default_str();
  app.add_option("--out-dir", common.out_dir, "Directory for relative output paths")->capture_default_str();
  app.add_flag("-q,--quiet", common.quiet, "Suppress progress output");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate and label a dataset with CCGA");
  gen->add_option("grid", gd.grid, "Grid JSON")->required();
  gen->add_option("--count", gd.count, "Instances to generate")->capture_default_str();
  gen->add_option("-o,--out", gd.out, "Dataset file (JSON lines + .bin sidecar)")->capture_default_str();
  gen->add_option("--workers", gd.workers, "Labeling threads, one solver each")->capture_default_str();
  gen->add_option("--epsilon", gd.epsilon, "Line violation tolerance (MW)")->capture_default_str();
  gen->add_option("--rel-gap", gd.rel_gap, "MILP relative gap")->capture_default_str();
  gen->add_option("--base", gd.gen.base, "Load scale of instance 0")->capture_default_str();
  gen->add_option("--step", gd.gen.step, "Load scale increment per instance")->capture_default_str();
  gen->add_option("--noise", gd.gen.noise, "Per-bus uniform noise half-width")->capture_default_str();
  gen->add_option("--split", gd.split, "Also write .train/.test files with this train fraction");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the dispatch predictor");
  train->add_option("grid", tr.grid, "Grid JSON")->required();
  train->add_option("dataset", tr.dataset, "Training dataset")->required();
  train->add_option("-o,--out", tr.out, "Model file; the log goes to <out>.log.csv")->capture_default_str();
  train->add_flag("--baseline-only", tr.baseline, "Plain regression, one outer iteration");
  train->add_option("--hidden-layers", tr.cfg.hidden_layers)->capture_default_str();
  train->add_option("--hidden-factor", tr.cfg.hidden_factor, "Hidden width = factor * generators")->capture_default_str();
  train->add_option("--inner-steps", tr.cfg.inner_steps)->capture_default_str();
  train->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
  train->add_option("--lr-start", tr.cfg.lr_start)->capture_default_str();
  train->add_option("--lr-end", tr.cfg.lr_end)->capture_default_str();
  train->add_option("--rho", tr.cfg.rho, "Multiplier step")->capture_default_str();
  train->add_option("--dual-passes", tr.cfg.dual_passes, "Relaxation solves per outer iteration")->capture_default_str();
  train->add_option("--optimizer", tr.optimizer, "sgd or adam")->capture_default_str();
  train->add_option("--scaling", tr.scaling, "zscore or nominal")->capture_default_str();
  train->add_option("--epsilon", tr.cfg.epsilon, "Contingency violation threshold (MW)")->capture_default_str();
  train->add_option("--beta1", tr.cfg.beta1, "State frequency threshold")->capture_default_str();
  train->add_option("--beta-c", tr.cfg.beta_c, "Nominal median violation tolerance")->capture_default_str();
  train->add_option("--max-outer", tr.cfg.max_outer)->capture_default_str();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Predict a dispatch");
  predict->add_option("grid", pr.grid, "Grid JSON")->required();
  predict->add_option("-m,--model", pr.model, "Model file")->required();
  predict->add_option("--load", pr.load, "JSON array of per-bus MW");
  predict->add_option("--dataset", pr.dataset, "Take the load from this dataset");
  predict->add_option("--index", pr.index, "Instance index within --dataset")->capture_default_str();
  predict->add_option("-o,--out", pr.out, "Write JSON here instead of stdout");

  SolveArgs sv;
  auto* solve = app.add_subcommand("solve", "Solve one instance");
  solve->add_option("grid", sv.grid, "Grid JSON")->required();
  solve->add_option("--mode", sv.mode, "extensive, ccga, repair or race")
      ->check(CLI::IsMember({"extensive", "ccga", "repair", "race"}))
      ->capture_default_str();
  solve->add_option("-m,--model", sv.model, "Model file (repair, race)");
  solve->add_option("--load", sv.load, "JSON array of per-bus MW");
  solve->add_option("--dataset", sv.dataset, "Take the load from this dataset");
  solve->add_option("--index", sv.index, "Instance index within --dataset")->capture_default_str();
  solve->add_option("--scale", sv.scale, "Nominal load multiplier when no load is given (default 0.82)");
  solve->add_option("-o,--out", sv.out, "Solution JSON")->capture_default_str();
  solve->add_option("--trace", sv.trace, "Iteration (or gap) trace CSV");
  solve->add_option("--lp", sv.lp, "Write the extensive model (or the first master) in LP format");
  solve->add_option("--epsilon", sv.epsilon)->capture_default_str();
  solve->add_option("--rel-gap", sv.rel_gap)->capture_default_str();
  solve->add_option("--time-limit", sv.time_limit, "Seconds, 0 = none")->capture_default_str();

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "Compare FR-CCGA seeded by the model against CCGA");
  bench->add_option("grid", bn.grid, "Grid JSON")->required();
  bench->add_option("-m,--model", bn.model, "Model file")->required();
  bench->add_option("--dataset", bn.dataset, "Held-out dataset")->required();
  bench->add_option("--count", bn.count, "Instances sampled from the dataset")->capture_default_str();
  bench->add_option("--csv", bn.csv, "Per-instance CSV")->capture_default_str();
  bench->add_option("--report", bn.report, "Aligned-text report")->capture_default_str();
  bench->add_option("--epsilon", bn.epsilon)->capture_default_str();
  bench->add_option("--rel-gap", bn.rel_gap)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(common, gd);
    if (*train) return cmd_train(common, tr);
    if (*predict) return cmd_predict(common, pr);
    if (*solve) return cmd_solve(common, sv);
    if (*bench) return cmd_bench(common, bn);
  } catch (const AlgorithmicFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAlgorithmic;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAlgorithmic;
  }
  return kUsage;
}
