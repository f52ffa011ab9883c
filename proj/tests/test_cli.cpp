#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kGrid = SCOPF_DATA_DIR "/toy3.json";

int run(const std::string& args) {
  const std::string cmd = std::string(SCOPF_CLI) + " -q " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "scopf_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage and input errors exit with code 2") {
  const fs::path dir = scratch("errors");
  CHECK(run("solve /nonexistent/grid.json") == 2);
  CHECK(run("solve " + kGrid + " --mode repair") == 2);
  CHECK(run("solve " + kGrid + " --mode bogus") == 2);
  CHECK(run("frobnicate") == 2);
  REQUIRE(run("gen-data " + kGrid + " --count 6 --seed 3 -o " + (dir / "d.jsonl").string()) == 0);
  CHECK(run("train " + kGrid + " " + (dir / "d.jsonl").string() + " --beta1 -0.1 -o " + (dir / "m.bin").string()) == 2);
  REQUIRE(run("train " + kGrid + " " + (dir / "d.jsonl").string() +
              " --inner-steps 50 --beta1 1 --beta-c 1e9 -o " + (dir / "m.bin").string()) == 0);
  CHECK(run("bench " + kGrid + " -m " + (dir / "m.bin").string() + " --dataset " + (dir / "d.jsonl").string() +
            " --count 0") == 2);
  CHECK(run(std::string("predict ") + SCOPF_DATA_DIR "/case118.json -m " + (dir / "m.bin").string()) == 2);
}

TEST_CASE("solve writes the toy optimum") {
  const fs::path dir = scratch("solve");
  std::ofstream(dir / "load.json") << "[0, 0, 150]";
  std::ofstream(dir / "over.json") << "[0, 0, 390]";
  REQUIRE(run("solve " + kGrid + " --load " + (dir / "load.json").string() + " -o " + (dir / "s.json").string()) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "s.json"));
  CHECK(j["cost"].get<double>() == doctest::Approx(2000).epsilon(0.0025));
  REQUIRE(run("solve " + kGrid + " --mode ccga --load " + (dir / "load.json").string() + " --trace " + (dir / "t.csv").string() + " -o " +
              (dir / "c.json").string()) == 0);
  CHECK(fs::exists(dir / "t.csv"));
  CHECK(run("solve " + kGrid + " --load " + (dir / "over.json").string() + " -o " + (dir / "x.json").string()) == 1);
}

TEST_CASE("gen-data and train are reproducible byte for byte") {
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(run("gen-data " + kGrid + " --count 8 --seed 11 --split 0.75 --out-dir " + dir.string() + " -o d.jsonl") == 0);
    REQUIRE(run("train " + kGrid + " " + (dir / "d.train.jsonl").string() + " --seed 5 --inner-steps 200 --max-outer 2"
                " --beta1 0 --epsilon 1e-3 --out-dir " + dir.string() + " -o m.bin") <= 1);
  }
  for (const char* f : {"d.jsonl.bin", "d.train.jsonl.bin", "d.test.jsonl.bin", "m.bin"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  for (const char* f : {"d.jsonl", "d.train.jsonl", "d.test.jsonl"}) CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
}

TEST_CASE("TOML config supplies subcommand options") {
  const fs::path dir = scratch("config");
  std::ofstream(dir / "run.toml") << "seed = 4\n\n[gen-data]\ncount = 3\nnoise = 0.0\n";
  REQUIRE(run("--config " + (dir / "run.toml").string() + " gen-data " + kGrid + " -o " + (dir / "d.jsonl").string()) == 0);
  std::ifstream in(dir / "d.jsonl");
  std::string header;
  std::getline(in, header);
  const auto h = nlohmann::json::parse(header);
  CHECK(h["instances"].get<int>() == 3);
  CHECK(h["seed"].get<int>() == 4);
  CHECK(h["generation"]["noise"].get<double>() == 0.0);
  std::ofstream(dir / "bad.toml") << "[solve]\nmode = \"bogus\"\n";
  CHECK(run("--config " + (dir / "bad.toml").string() + " solve " + kGrid) == 2);
}
