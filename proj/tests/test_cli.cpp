#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"
#include "gridfield/experiments.hpp"

using namespace gridfield;
using namespace gridfield::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gridfield_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gridfield");
  return run(args);
}

const std::vector<std::string> small = {"--set", "grid.n=16", "--set", "grid.n_s=32"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

TEST_CASE("empty config file gives the defaults") {
  const auto dir = scratch("empty");
  fs::create_directories(dir);
  std::ofstream(dir / "empty.json") << "";
  const auto c = parse_config(dir / "empty.json");
  const RunConfig d;
  CHECK(c.grid.n == 64);
  CHECK(c.grid.n_s == 64);
  CHECK(c.grid.s_max == 1.3);
  CHECK(c.kernel.amplitude == doctest::Approx(81.92));
  CHECK(c.kernel.offset == 10.0);
  CHECK(c.kernel.steepness == 50.0);
  CHECK(c.solver.tau == d.solver.tau);
  CHECK(c.solver.alpha == 0.3);
  CHECK(c.activation.kind == "sigmoid");
  CHECK(to_json(c) == to_json(d));

  std::ofstream(dir / "obj.json") << "{}";
  CHECK(to_json(parse_config(dir / "obj.json")) == to_json(d));
}

TEST_CASE("config errors name the offending key") {
  auto key_of = [](nlohmann::json j, std::vector<std::string> ov = {}) -> std::string {
    try {
      parse_config_json(std::move(j), ov);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  CHECK(key_of({}, {"solver.tau=-1"}) == "solver.tau");
  CHECK(key_of({{"solver", {{"tau", -1}}}}) == "solver.tau");
  CHECK(key_of({{"solver", {{"sigma", "big"}}}}) == "solver.sigma");
  CHECK(key_of({{"grid", {{"n", 15}}}}) == "grid.n");
  CHECK(key_of({{"grid", {{"colour", 1}}}}) == "grid.colour");
  CHECK(key_of({{"nonsense", 1}}) == "nonsense");
  CHECK(key_of({}, {"sweep.direction=up"}) == "sweep.direction");
  CHECK(key_of({}, {"activation.kind=tanh"}) == "activation.kind");
  CHECK(key_of({}, {"no_equals_sign"}) != "");
  CHECK(key_of({}, {"solver.sigma=0.02"}) == "");

  const auto dir = scratch("badjson");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ grid: ";
  CHECK_THROWS_AS(parse_config(dir / "bad.json"), ConfigError);
}

TEST_CASE("overrides win over the file and are echoed") {
  const auto dir = scratch("override");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"solver": {"sigma": 0.03}, "grid": {"n": 32}})";
  const auto c = parse_config(dir / "c.json", {"solver.sigma=0.02", "activation.kind=relu"});
  CHECK(c.solver.sigma == 0.02);
  CHECK(c.grid.n == 32);
  CHECK(c.activation.kind == "relu");

  REQUIRE(invoke({"--config", (dir / "c.json").string(), "--set", "solver.sigma=0.025", "-o", (dir / "out").string(),
               "stationary"}) == ok);
  const auto echo = nlohmann::json::parse(slurp(dir / "out" / "config.json"));
  CHECK(echo["solver"]["sigma"].get<double>() == 0.025);
  CHECK(echo["grid"]["n"].get<int>() == 32);
  CHECK(echo["output_dir"].get<std::string>() == (dir / "out").string());
  // The echo parses back to the same configuration.
  CHECK(to_json(parse_config_json(echo)) == echo);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  CHECK(invoke({"-o", dir.string(), "--set", "solver.tau=-1", "stationary"}) == config_error);
  CHECK(invoke({"-o", dir.string(), "--set", "mystery=1", "stationary"}) == config_error);
  CHECK(invoke({"-o", dir.string(), "nosuchcommand"}) == config_error);
  CHECK(invoke({"-o", dir.string()}) == config_error);
  CHECK(invoke({"--config", (dir / "missing.json").string(), "stationary"}) == config_error);
  CHECK(invoke({"-o", dir.string(), "stationary", "--sigmas", "0.01,-0.02"}) == config_error);
  CHECK(invoke({"-o", dir.string(), "particles", "--columns", "7"}) == config_error);
  CHECK(invoke({"-o", dir.string(), "--set", "activation.kind=constant", "stationary"}) == config_error);
  // A bracket without a sign change of the indicator.
  CHECK(invoke(with(small, {"-o", dir.string(), "stability", "--sigma-lo", "0.1", "--sigma-hi", "0.2"})) ==
        non_convergence);
  // Not stationary by t_max.
  CHECK(invoke(with(small, {"-o", dir.string(), "--set", "solver.t_min=1", "--set", "solver.t_max=2", "simulate",
                         "--to-stationary"})) == non_convergence);
  CHECK(invoke({"--help"}) == ok);
}

TEST_CASE("stationary writes one row per sigma and a manifest") {
  const auto dir = scratch("stationary");
  REQUIRE(invoke({"-o", dir.string(), "stationary", "--sigmas", "0.01,0.02,0.03"}) == ok);
  CHECK(lines(dir / "stationary.csv") == 4);
  CHECK(slurp(dir / "stationary.csv").rfind("sigma,w0,phi0,mean,Z,log_Z,m_inf,", 0) == 0);
  const auto manifest = slurp(dir / "manifest.csv");
  CHECK(manifest.rfind("file,description\n", 0) == 0);
  CHECK(manifest.find("config.json,") != std::string::npos);
  CHECK(manifest.find("stationary.csv,") != std::string::npos);
}

TEST_CASE("outputs are byte-identical across repeated runs") {
  const auto a = scratch("repro_a");
  const auto b = scratch("repro_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(invoke(with(small, {"-o", dir.string(), "--set", "seed=7", "simulate", "--t-end", "20"})) == ok);
    REQUIRE(invoke({"-o", (dir / "p").string(), "--set", "seed=7", "--threads", "2", "particles", "--M", "500", "--T",
                 "10"}) == ok);
  }
  for (const char* f : {"simulate_means.csv", "final_mean_field.csv", "final_slice_s0.csv", "final.gcnf"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  CHECK(slurp(a / "p" / "particle_means.csv") == slurp(b / "p" / "particle_means.csv"));
  CHECK(slurp(a / "p" / "particle_histogram.csv") == slurp(b / "p" / "particle_histogram.csv"));
}

TEST_CASE("simulate dumps at the requested cadence") {
  const auto dir = scratch("dumps");
  REQUIRE(invoke(with(small, {"-o", dir.string(), "simulate", "--t-end", "30", "--dump-every", "10", "--sample-every",
                           "5"})) == ok);
  CHECK(fs::exists(dir / "dump_00000.gcnf"));
  CHECK(fs::exists(dir / "dump_00002.gcnf"));
  CHECK_FALSE(fs::exists(dir / "dump_00003.gcnf"));
  const auto times = {10.0, 20.0, 30.0};
  std::size_t i = 0;
  for (double t : times) {
    std::ostringstream name;
    name << "dump_0000" << i++ << ".gcnf";
    const auto s = read_state(dir / name.str());
    CHECK(s.t == doctest::Approx(t).epsilon(1e-9));
    CHECK(s.grid().n == 16);
  }
  CHECK(lines(dir / "simulate_means.csv") == 1 + 7);
}

TEST_CASE("bifurcate writes the branch, dumps and transition") {
  const auto dir = scratch("bifurcate");
  REQUIRE(invoke(with(small, {"-o", dir.string(), "--set", "solver.t_min=20", "--set", "solver.t_max=40", "bifurcate",
                           "--direction", "r2l", "--points", "3"})) == ok);
  const auto branch = read_branch_csv(dir / "branch_r2l.csv");
  REQUIRE(branch.size() == 3);
  CHECK(branch.front().sigma == doctest::Approx(0.05));
  CHECK(branch.back().sigma == doctest::Approx(0.01));
  for (int i = 0; i < 3; ++i) CHECK(fs::exists(dir / ("branch_r2l_00" + std::to_string(i) + ".gcnf")));
  CHECK(lines(dir / "homogeneous_reference.csv") == 4);
  CHECK(lines(dir / "transition_r2l.csv") == 2);
  CHECK(slurp(dir / "manifest.csv").find("branch_r2l_002.gcnf") != std::string::npos);
}
