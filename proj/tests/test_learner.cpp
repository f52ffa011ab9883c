#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "learner_fixtures.hpp"
#include "oracles.hpp"
#include "scopf/apr.hpp"
#include "scopf/learner.hpp"

using namespace scopf;
namespace fs = std::filesystem;

TEST_CASE("softplus is stable at both tails") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(1000.0) == 1000.0);
  CHECK(softplus(-1000.0) >= 0.0);
  CHECK(softplus(-1000.0) < 1e-300);
  CHECK(softplus_grad(0.0) == 0.5);
  CHECK(softplus_grad(800.0) == 1.0);
  CHECK(softplus_grad(-800.0) >= 0.0);
  for (double x : {-3.0, -0.4, 0.2, 5.0})
    CHECK(softplus_grad(x) == doctest::Approx((softplus(x + 1e-6) - softplus(x - 1e-6)) / 2e-6).epsilon(1e-6));
}

TEST_CASE("forward pass agrees with an explicit loop evaluation") {
  const Mlp net({3, 4, 4, 2}, 7);
  CHECK(net.num_layers() == 3);
  CHECK(net.num_parameters() == 3 * 4 + 4 + 4 * 4 + 4 + 4 * 2 + 2);
  Eigen::MatrixXd X(3, 2);
  X << 0.1, -2, 0.5, 1, -0.3, 0.7;
  const Eigen::MatrixXd Y = net.forward(X);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> a{X(0, c), X(1, c), X(2, c)};
    for (std::size_t k = 0; k < net.W.size(); ++k) {
      std::vector<double> z(static_cast<std::size_t>(net.W[k].rows()));
      for (std::size_t i = 0; i < z.size(); ++i) {
        double s = net.b[k](static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < a.size(); ++j) s += net.W[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * a[j];
        z[i] = k + 1 < net.W.size() ? std::log1p(std::exp(s)) : s;
      }
      a = z;
    }
    for (int i = 0; i < 2; ++i) CHECK(Y(i, c) == doctest::Approx(a[static_cast<std::size_t>(i)]).epsilon(1e-13));
  }
}

TEST_CASE("initial weights respect the fan-in bound and the seed") {
  const Mlp a({10, 6, 3}, 1), b({10, 6, 3}, 1), c({10, 6, 3}, 2);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.parameters() != c.parameters());
  CHECK(a.W[0].cwiseAbs().maxCoeff() <= 1 / std::sqrt(10.0));
  CHECK(a.W[1].cwiseAbs().maxCoeff() <= 1 / std::sqrt(6.0));
  Mlp d = a;
  d.set_parameters(c.parameters());
  CHECK(d.parameters() == c.parameters());
  CHECK_THROWS(d.set_parameters(Eigen::VectorXd::Zero(3)));
  CHECK_THROWS(Mlp({3}, 1));
}

TEST_CASE("backward pass matches finite differences of a linear readout") {
  Mlp net({4, 5, 3, 2}, 13);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N(0, 1);
  Eigen::MatrixXd X(4, 3), R(2, 3);
  for (auto& v : X.reshaped()) v = N(rng);
  for (auto& v : R.reshaped()) v = N(rng);
  Mlp::Tape tape;
  net.forward(X, tape);
  const Eigen::VectorXd grad = net.backward(tape, R);
  const Eigen::VectorXd theta = net.parameters();
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(j) += 1e-6;
    tm(j) -= 1e-6;
    net.set_parameters(tp);
    const double fp = (net.forward(X).array() * R.array()).sum();
    net.set_parameters(tm);
    const double fm = (net.forward(X).array() * R.array()).sum();
    CHECK(grad(j) == doctest::Approx((fp - fm) / 2e-6).epsilon(1e-6).scale(1));
  }
}

TEST_CASE("normalizer encode and decode are inverse affine maps") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const Dataset d = fixtures::synthetic_dataset(g, 20, 3);
  for (Scaling sc : {Scaling::ZScore, Scaling::Nominal}) {
    const Normalizer n = Normalizer::fit(g, d, sc);
    Eigen::MatrixXd L(3, 2);
    L << 1, 2, 3, 4, 150, 160;
    const Eigen::MatrixXd X = n.encode(L);
    CHECK(((X.array().colwise() * n.in_scale.array()).colwise() + n.in_shift.array() - L.array()).abs().maxCoeff() <= 1e-12);
    CHECK((n.in_scale.array() > 0).all());
    CHECK((n.out_scale.array() > 0).all());
    const Eigen::MatrixXd G = n.decode(Eigen::MatrixXd::Zero(2, 1));
    CHECK((G.col(0) - n.out_shift).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("constraint set sizes and state bookkeeping") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/case118.json");
  ConstraintSet cs = ConstraintSet::nominal(g);
  CHECK(cs.rows.size() == 1 + 2 * 186 + 2 * 54);
  CHECK(cs.num_nominal() == cs.rows.size());
  cs.add_state(g, 7);
  cs.add_state(g, 3);
  cs.add_state(g, 7);
  CHECK(cs.states == std::vector<std::size_t>{3, 7});
  CHECK(cs.rows.size() == 1 + 2 * 186 + 2 * 54 + 2 * 2 * 186);
  CHECK(cs.has_state(3));
  CHECK_FALSE(cs.has_state(4));
  CHECK_THROWS(cs.add_state(g, 999));
}

TEST_CASE("violations vanish on an exactly secure dispatch and match a direct evaluation") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const ViolationModel vm(g);
  ConstraintSet cs = ConstraintSet::nominal(g);
  cs.add_state(g, 0);
  cs.add_state(g, 1);
  const TrainingSet ts = vm.training_set(std::vector<std::vector<double>>{{0, 0, 150}});
  const std::vector<double> ok{100, 50};
  const auto sig = vm.signals(cs, ok, 150);
  const Eigen::VectorXd nu = vm.violations(cs, ok, ts, 0, sig);
  CHECK(nu.maxCoeff() <= 1e-12);
  CHECK(nu.minCoeff() >= 0.0);

  // an insecure guess: all from unit 1, unit 2 alone must then cover 150 MW
  const std::vector<double> bad{160, 10};
  const auto sig2 = vm.signals(cs, bad, 150);
  const Eigen::VectorXd v = vm.violations(cs, bad, ts, 0, sig2);
  CHECK(v.minCoeff() >= 0.0);
  const auto expect = fixtures::direct_violations(g, cs, bad, {0, 0, 150}, sig2);
  REQUIRE(expect.size() == static_cast<std::size_t>(v.size()));
  for (std::size_t c = 0; c < expect.size(); ++c) CHECK(v(static_cast<Eigen::Index>(c)) == doctest::Approx(expect[c]).epsilon(1e-10).scale(1e-12));
  CHECK(v(0) == doctest::Approx(20.0 / 150.0));  // balance, relative to total load
}

TEST_CASE("prediction scan agrees with the angle-based worst overload") {
  std::mt19937_64 rng(77);
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const ViolationModel vm(g);
  const TrainingSet ts = vm.training_set(std::vector<std::vector<double>>{{0, 0, 150}});
  CHECK(vm.scan(std::vector<double>{100, 50}, ts, 0).phi <= 1e-9);
  for (int trial = 0; trial < 30; ++trial) {
    const double a = std::uniform_real_distribution<double>(0, 150)(rng);
    const std::vector<double> gd{a, 150 - a};
    double worst = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
      const auto st = bisect_balance(g, gd, s, 150, default_balance_tol(150));
      worst = std::max(worst, oracle::worst_overload(g, oracle::respond(g, gd, st.signal, s), {0, 0, 150}));
    }
    const auto sc = vm.scan(gd, ts, 0);
    CHECK(std::abs(sc.phi - std::max(0.0, worst)) <= 1e-9 * (1 + worst));
    if (sc.phi > 0) {
      REQUIRE(sc.line);
      CHECK(sc.phi_rel == doctest::Approx(sc.phi / 100));
    }
  }
}

TEST_CASE("analytic penalized-loss gradients match central differences") {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int attempt = 0; attempt < 400 && checked < 15; ++attempt) {
    const auto res = fixtures::gradient_check(rng, 1e-5);
    if (!res) continue;  // configuration sat on a kink
    ++checked;
    CHECK(res->rel_error <= 1e-4);
    CHECK(res->active_rows > 0);
  }
  CHECK(checked == 15);
}

TEST_CASE("saturated units pass no gradient through the post-contingency response") {
  const Grid g = parse_grid(R"({"ref_bus": 1, "buses": [{"id": 1}, {"id": 2}, {"id": 3, "load": 150}],
      "lines": [{"from": 1, "to": 2, "susceptance": 10, "capacity": 100},
                {"from": 1, "to": 3, "susceptance": 10, "capacity": 60},
                {"from": 2, "to": 3, "susceptance": 10, "capacity": 100}],
      "generators": [{"id": 1, "bus": 1, "p_min": 0, "p_max": 120, "gamma": 1, "cost": [[0, 0], [120, 120]]},
                     {"id": 2, "bus": 2, "p_min": 0, "p_max": 200, "gamma": 1, "cost": [[0, 0], [200, 400]]},
                     {"id": 3, "bus": 3, "p_min": 0, "p_max": 100, "gamma": 1, "cost": [[0, 0], [100, 400]]}],
      "contingencies": [3]})");
  const ViolationModel vm(g);
  ConstraintSet cs;
  cs.add_state(g, 2);
  for (auto& r : cs.rows) r.lambda = 1.0;
  const TrainingSet ts = vm.training_set(std::vector<std::vector<double>>{{0, 0, 150}});
  // unit 1 is pushed past its 120 MW limit by the response, unit 2 is not
  const std::vector<double> gd{110, 10, 30};
  const auto sig = vm.signals(cs, gd, 150);
  Eigen::VectorXd grad;
  const Eigen::VectorXd nu = vm.violations(cs, gd, ts, 0, sig, &grad);
  REQUIRE(nu.maxCoeff() > 0);
  auto penalty = [&](std::vector<double> x) {
    const Eigen::VectorXd v = vm.violations(cs, x, ts, 0, sig);
    return v.sum();
  };
  for (std::size_t i = 0; i < 3; ++i) {
    auto p = gd, m = gd;
    p[i] += 1e-5;
    m[i] -= 1e-5;
    const double fd = (penalty(p) - penalty(m)) / 2e-5;
    CHECK(grad(static_cast<Eigen::Index>(i)) == doctest::Approx(fd).epsilon(1e-6).scale(1e-9));
  }
  CHECK(gd[0] + sig[0] * g.generators()[0].response_limit() > 120);
  CHECK(grad(0) == 0.0);  // saturated
  CHECK(grad(1) != 0.0);
  CHECK(grad(2) == 0.0);  // the failed unit
}

TEST_CASE("unconstrained regression lowers the loss within 100 steps") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const Dataset d = fixtures::synthetic_dataset(g, 10, 4);
  const ViolationModel vm(g);
  const TrainingSet ts = vm.training_set(d);
  TrainConfig cfg;
  cfg.inner_steps = 100;
  cfg.batch_size = 5;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  Mlp net({3, 4, 4, 2}, 3);
  const Normalizer norm = Normalizer::fit(g, d, Scaling::ZScore);
  ConstraintSet cs;
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  const double before = penalized_loss(net, norm, vm, cs, ts, all, false).loss;
  std::mt19937_64 rng(1);
  train_lagrangian(net, cs, norm, vm, ts, cfg, rng);
  const double after = penalized_loss(net, norm, vm, cs, ts, all, false).loss;
  CHECK(after < before);
}

TEST_CASE("exactly feasible predictions leave the multipliers unchanged") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  Dataset d = fixtures::synthetic_dataset(g, 4, 1);
  for (auto& inst : d.instances) {
    inst.load = {0, 0, 150};
    inst.dispatch = {100, 50};
  }
  const ViolationModel vm(g);
  const TrainingSet ts = vm.training_set(d);
  Mlp net({3, 3, 2}, 1);
  net.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_parameters())));
  Normalizer norm = Normalizer::fit(g, d, Scaling::ZScore);
  norm.out_shift = Eigen::Vector2d(100, 50);
  ConstraintSet cs = ConstraintSet::nominal(g);
  cs.add_state(g, 0);
  cs.add_state(g, 1);
  for (std::size_t c = 0; c < cs.rows.size(); ++c) cs.rows[c].lambda = 0.5 + static_cast<double>(c);
  const auto before = cs.rows;
  TrainConfig cfg;
  cfg.inner_steps = 10;
  cfg.dual_passes = 2;
  std::mt19937_64 rng(1);
  train_lagrangian(net, cs, norm, vm, ts, cfg, rng);
  for (std::size_t c = 0; c < cs.rows.size(); ++c) CHECK(cs.rows[c].lambda == before[c].lambda);
}

TEST_CASE("divergent training is reported instead of producing NaN weights") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const Dataset d = fixtures::synthetic_dataset(g, 10, 2);
  TrainConfig cfg;
  cfg.inner_steps = 200;
  cfg.lr_start = cfg.lr_end = 1e200;
  cfg.max_outer = 1;
  CHECK_THROWS_AS(train_baseline(g, d, cfg), std::runtime_error);
}

TEST_CASE("training configuration is validated") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beta1 = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.inner_steps = 0;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.dual_passes = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("the first outer iteration reproduces the baseline weights") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const Dataset d = fixtures::synthetic_dataset(g, 16, 8);
  TrainConfig cfg;
  cfg.inner_steps = 300;
  cfg.batch_size = 4;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-4;
  cfg.max_outer = 1;
  const TrainedModel base = train_baseline(g, d, cfg);
  const TrainedModel ccga = train_ccga_dnn(g, d, cfg);
  CHECK(base.log.size() == 1);
  CHECK(base.constraints.rows.empty());
  CHECK(base.net.parameters() == ccga.net.parameters());
  CHECK(ccga.constraints.num_nominal() == 1 + 2 * 3 + 2 * 2);
}

TEST_CASE("loose tolerances stop after one outer iteration with no states") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const Dataset d = fixtures::synthetic_dataset(g, 12, 9);
  TrainConfig cfg;
  cfg.inner_steps = 50;
  cfg.beta1 = 1.0;
  cfg.beta_c = 1e9;
  const TrainedModel m = train_ccga_dnn(g, d, cfg);
  CHECK(m.converged);
  CHECK(m.log.size() == 1);
  CHECK(m.constraints.states.empty());
}

TEST_CASE("tight tolerances add contingency states and bump their multipliers") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  Dataset d = fixtures::synthetic_dataset(g, 12, 9);
  for (auto& inst : d.instances) inst.dispatch = {150 * inst.load[2] / 150, 0};  // everything on unit 1
  TrainConfig cfg;
  cfg.inner_steps = 200;
  cfg.lr_start = 1e-2;
  cfg.lr_end = 1e-3;
  cfg.max_outer = 2;
  cfg.epsilon = 1e-3;
  cfg.beta1 = 0.0;
  const TrainedModel m = train_ccga_dnn(g, d, cfg);
  REQUIRE(m.log.size() >= 1);
  CHECK(!m.constraints.states.empty());
  CHECK(m.log[0].added.size() == m.constraints.states.size());
  bool bumped = false;
  for (const auto& r : m.constraints.rows)
    if (!r.nominal() && r.lambda > 0) bumped = true;
  CHECK(bumped);
}

TEST_CASE("training and model files are deterministic and round-trip") {
  const Grid g = load_grid_file(SCOPF_DATA_DIR "/toy3.json");
  const Dataset d = fixtures::synthetic_dataset(g, 16, 6);
  TrainConfig cfg;
  cfg.inner_steps = 200;
  cfg.max_outer = 2;
  cfg.beta1 = 0.0;
  cfg.epsilon = 1e-3;
  const TrainedModel a = train_ccga_dnn(g, d, cfg), b = train_ccga_dnn(g, d, cfg);
  CHECK(a.net.parameters() == b.net.parameters());
  const fs::path dir = fs::temp_directory_path() / "scopf_unit";
  fs::create_directories(dir);
  save_model(a, (dir / "a.model").string());
  save_model(b, (dir / "b.model").string());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir / "a.model") == slurp(dir / "b.model"));

  const TrainedModel r = load_model((dir / "a.model").string());
  CHECK(r.net.parameters() == a.net.parameters());
  CHECK(r.constraints.rows.size() == a.constraints.rows.size());
  CHECK(r.constraints.states == a.constraints.states);
  CHECK(r.log.size() == a.log.size());
  CHECK(r.fingerprint == g.fingerprint());
  CHECK_NOTHROW(r.check_grid(g));
  CHECK_THROWS(r.check_grid(load_grid_file(SCOPF_DATA_DIR "/case118.json")));
  const std::vector<double> load{0, 0, 140};
  CHECK(r.predict(load) == a.predict(load));
  CHECK_THROWS(r.predict(std::vector<double>{1.0}));
}
