#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = GTV_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gtv_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = "\"" + kCli + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string without_wall_time(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  j.erase("wall_time_seconds");
  return j.dump();
}

}  // namespace

TEST_CASE("reconstruct writes both artifacts") {
  const fs::path out = fresh_dir("rec");
  CHECK(run("reconstruct --order 2 --cutoff 3 --grid 16 --lambda 1e-7 --seed 1 --out-dir " + out.string()) == 0);
  REQUIRE(fs::exists(out / "summary.json"));
  REQUIRE(fs::exists(out / "profile.csv"));
  const std::string csv = slurp(out / "profile.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8193);
  CHECK(csv.rfind("x,f_reconstructed,f_ground_truth,f_lowpass\n", 0) == 0);
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(j["config"]["grid"] == nlohmann::json::array({16}));
  CHECK(j["knots"]["raw"].get<int>() >= 2);
  CHECK(j["solver"]["converged"] == true);
  for (const auto& e : fs::directory_iterator(out)) CHECK(e.path().extension() != ".tmp");
  fs::remove_all(out);
}

TEST_CASE("outputs are reproducible") {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  const std::string args = "noisy-demo --seed 3 --grid 64 --out-dir ";
  REQUIRE(run(args + a.string()) == 0);
  REQUIRE(run(args + b.string()) == 0);
  CHECK(slurp(a / "profile.csv") == slurp(b / "profile.csv"));
  CHECK(without_wall_time(slurp(a / "summary.json")) == without_wall_time(slurp(b / "summary.json")));

  const std::string conv = "convergence --grid 16,32,64 --trials 3 --seed 5 --out-dir ";
  REQUIRE(run(conv + a.string() + " --threads 1") == 0);
  REQUIRE(run(conv + b.string() + " --threads 2") == 0);
  CHECK(slurp(a / "convergence.csv") == slurp(b / "convergence.csv"));
  auto strip = [](const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    j.erase("wall_time_seconds");
    j["config"].erase("threads");
    return j.dump();
  };
  CHECK(strip(slurp(a / "summary.json")) == strip(slurp(b / "summary.json")));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("convergence artifacts") {
  const fs::path out = fresh_dir("conv");
  REQUIRE(run("convergence --grid 16,32,64,128 --trials 2 --out-dir " + out.string()) == 0);
  const std::string csv = slurp(out / "convergence.csv");
  CHECK(csv.rfind("P,mean_error,std_error,n_ok_trials\n16,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(j.contains("slope"));
  CHECK(j["points"].size() == 4);
  fs::remove_all(out);
}

TEST_CASE("configuration errors exit with 2 and write nothing") {
  const fs::path out = fresh_dir("bad");
  const std::string dir = " --out-dir " + out.string();
  CHECK(run("reconstruct --solver simplex" + dir) == 2);
  CHECK(run("reconstruct --grid 16,x" + dir) == 2);
  CHECK(run("reconstruct --grid 16,32" + dir) == 2);
  CHECK(run("convergence --grid 16,32" + dir) == 2);
  CHECK(run("convergence --grid 64,32,128" + dir) == 2);
  CHECK(run("reconstruct --order 0" + dir) == 2);
  CHECK(run("reconstruct --lambda -1" + dir) == 2);
  CHECK(run("reconstruct --knots 1" + dir) == 2);
  CHECK(run("reconstruct --no-such-flag" + dir) == 2);
  CHECK(run("" + dir) == 2);
  CHECK(run("reconstruct --config /nonexistent/gtv.json" + dir) == 2);

  const fs::path cfg = fresh_dir("cfg_bad");
  fs::create_directories(cfg);
  std::ofstream(cfg / "unknown.json") << R"({"order": 2, "colour": "blue"})";
  std::ofstream(cfg / "broken.json") << R"({"order": 2,)";
  std::ofstream(cfg / "typed.json") << R"({"order": "two"})";
  CHECK(run("reconstruct --config " + (cfg / "unknown.json").string() + dir) == 2);
  CHECK(run("reconstruct --config " + (cfg / "broken.json").string() + dir) == 2);
  CHECK(run("reconstruct --config " + (cfg / "typed.json").string() + dir) == 2);
  CHECK_FALSE(fs::exists(out));
  fs::remove_all(cfg);
}

TEST_CASE("non-convergence exits with 3 and still reports") {
  const fs::path out = fresh_dir("nc");
  CHECK(run("reconstruct --solver fw --max-iters 1 --seed 2 --out-dir " + out.string()) == 3);
  REQUIRE(fs::exists(out / "summary.json"));
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(j["solver"]["converged"] == false);
  CHECK(j["solver"]["name"] == "fw");
  fs::remove_all(out);
}

TEST_CASE("flags override the config file") {
  const fs::path out = fresh_dir("cfg");
  fs::create_directories(out);
  std::ofstream(out / "run.json") << R"({"cutoff": 4, "grid": [32], "seed": 9, "lambda": 1e-6})";
  REQUIRE(run("reconstruct --config " + (out / "run.json").string() + " --grid 48 --out-dir " + out.string()) == 0);
  const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(j["config"]["cutoff"] == 4);
  CHECK(j["config"]["seed"] == 9);
  CHECK(j["config"]["lambda"].get<double>() == 1e-6);
  CHECK(j["config"]["grid"] == nlohmann::json::array({48}));

  // The echoed config reproduces the run.
  std::ofstream(out / "echo.json") << j["config"].dump();
  const fs::path again = out / "again";
  REQUIRE(run("reconstruct --config " + (out / "echo.json").string() + " --out-dir " + again.string()) == 0);
  CHECK(slurp(again / "profile.csv") == slurp(out / "profile.csv"));
  CHECK(run("noisy-demo --config " + (out / "echo.json").string() + " --out-dir " + again.string()) == 2);
  fs::remove_all(out);
}
