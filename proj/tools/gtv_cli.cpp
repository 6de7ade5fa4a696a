// gtv: reconstruction experiments for periodic D^M-splines from low-frequency
// Fourier data.
//
//   gtv reconstruct --order 2 --cutoff 3 --grid 16 --lambda 1e-7 --seed 1
//   gtv convergence --grid 16,32,64,128,256,512 --trials 20
//   gtv noisy-demo  --order 1 --cutoff 20 --grid 256 --lambda 1e-2 --sigma 1e-3 --knots 7

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gtv/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNotConverged = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::optional<int> order, cutoff, knots, trials, eval_points, threads, max_iters;
  std::optional<std::string> grid, solver, out_dir, config;
  std::optional<double> lambda, sigma;
  std::optional<std::uint64_t> seed;
};

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int p = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(p);
    } catch (const std::exception&) {
      throw ConfigError("invalid grid size '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty --grid");
  return out;
}

gtv::SolverKind parse_solver(const std::string& s) {
  if (s == "admm") return gtv::SolverKind::admm;
  if (s == "fw") return gtv::SolverKind::frank_wolfe;
  throw ConfigError("unknown solver '" + s + "' (expected admm or fw)");
}

gtv::ExperimentConfig defaults_for(gtv::ExperimentKind kind) {
  gtv::ExperimentConfig c;
  c.experiment = kind;
  if (kind == gtv::ExperimentKind::convergence) {
    c.grid_points = {16, 32, 64, 128, 256, 512};
    c.n_trials = 20;
  } else if (kind == gtv::ExperimentKind::noisy_demo) {
    c.order = 1;
    c.cutoff = 20;
    c.grid_points = {256};
    c.lambda = 1e-2;
    c.noise_sigma = 1e-3;
    c.n_knots = 7;
  }
  return c;
}

// ADMM iterations, or Frank-Wolfe outer iterations.
void set_max_iters(gtv::ExperimentConfig& c, int n) {
  c.admm.max_iters = n;
  c.fw.max_outer_iters = n;
}

// Keys mirror the long flag names, so a summary's "config" block can be fed back.
void apply_file(gtv::ExperimentConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "experiment") {
        if (v.get<std::string>() != gtv::to_string(c.experiment))
          throw ConfigError("config file is for '" + v.get<std::string>() + "', not '" + gtv::to_string(c.experiment) + "'");
      } else if (key == "order") c.order = v.get<int>();
      else if (key == "cutoff") c.cutoff = v.get<int>();
      else if (key == "grid") c.grid_points = v.is_array() ? v.get<std::vector<int>>()
                                                            : v.is_string() ? parse_grid(v.get<std::string>())
                                                                            : std::vector<int>{v.get<int>()};
      else if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "sigma") c.noise_sigma = v.get<double>();
      else if (key == "knots") c.n_knots = v.get<int>();
      else if (key == "trials") c.n_trials = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "solver") c.solver = parse_solver(v.get<std::string>());
      else if (key == "out-dir") c.out_dir = v.get<std::string>();
      else if (key == "eval-points") c.eval_points = v.get<int>();
      else if (key == "threads") c.threads = v.get<int>();
      else if (key == "max-iters") set_max_iters(c, v.get<int>());
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

gtv::ExperimentConfig build_config(gtv::ExperimentKind kind, const Flags& f) {
  gtv::ExperimentConfig c = defaults_for(kind);
  if (f.config) apply_file(c, *f.config);
  if (f.order) c.order = *f.order;
  if (f.cutoff) c.cutoff = *f.cutoff;
  if (f.grid) c.grid_points = parse_grid(*f.grid);
  if (f.lambda) c.lambda = *f.lambda;
  if (f.sigma) c.noise_sigma = *f.sigma;
  if (f.knots) c.n_knots = *f.knots;
  if (f.trials) c.n_trials = *f.trials;
  if (f.seed) c.seed = *f.seed;
  if (f.solver) c.solver = parse_solver(*f.solver);
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.eval_points) c.eval_points = *f.eval_points;
  if (f.threads) c.threads = *f.threads;
  if (f.max_iters) set_max_iters(c, *f.max_iters);
  if (kind != gtv::ExperimentKind::convergence && c.grid_points.size() != 1)
    throw ConfigError("--grid takes a single size for this experiment");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void add_flags(CLI::App* app, Flags& f) {
  app->add_option("--order", f.order, "Spline order M (operator D^M)");
  app->add_option("--cutoff", f.cutoff, "Cutoff frequency K_c");
  app->add_option("--grid", f.grid, "Grid size P, or a comma-separated list for convergence");
  app->add_option("--lambda", f.lambda, "Regularization weight");
  app->add_option("--sigma", f.sigma, "Noise standard deviation");
  app->add_option("--knots", f.knots, "Number of ground-truth knots");
  app->add_option("--trials", f.trials, "Monte-Carlo trials");
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--solver", f.solver, "admm or fw");
  app->add_option("--out-dir", f.out_dir, "Output directory");
  app->add_option("--config", f.config, "JSON file with the same keys as the flags; flags win");
  app->add_option("--eval-points", f.eval_points, "Points of the L-infinity evaluation grid");
  app->add_option("--threads", f.threads, "Parallel trials");
  app->add_option("--max-iters", f.max_iters, "Iteration limit (ADMM iterations or Frank-Wolfe outer iterations)");
}

int run_single_mode(const gtv::ExperimentConfig& config) {
  const gtv::SingleRunReport report = gtv::run_single(config);
  const nlohmann::json summary = gtv::summary_json(config, report);
  gtv::write_artifacts(config.out_dir, {{"summary.json", summary.dump(2) + "\n"},
                                        {"profile.csv", gtv::profile_csv(config, report)}});
  const auto& r = report.result;
  std::printf("%s: knots raw %zu merged %zu, linf error %.6g (low-pass %.6g), %d iterations%s\n",
              gtv::to_string(config.experiment).c_str(), r.raw_knots.size(), r.clusters.size(),
              report.linf_error, report.lowpass_linf_error, r.iterations,
              r.converged ? "" : " [not converged]");
  return r.converged ? kExitOk : kExitNotConverged;
}

int run_convergence_mode(const gtv::ExperimentConfig& config) {
  const gtv::ConvergenceReport report = gtv::convergence_study(config);
  const nlohmann::json summary = gtv::summary_json(config, report);
  gtv::write_artifacts(config.out_dir, {{"summary.json", summary.dump(2) + "\n"},
                                        {"convergence.csv", gtv::convergence_csv(report)}});
  for (const auto& p : report.points)
    std::printf("P=%-5d mean %.6g  std %.3g  (%d trials)\n", p.grid_points, p.mean_error, p.std_error,
                p.n_ok_trials);
  std::printf("slope %.4f%s, failed trials %d\n", report.fit.slope,
              report.fit.excluded_smallest ? " (smallest P excluded)" : "", report.failed_trials);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic spline reconstruction from Fourier samples"};
  app.require_subcommand(1);
  Flags rec_flags, conv_flags, demo_flags;
  auto* rec = app.add_subcommand("reconstruct", "Noiseless single reconstruction");
  auto* conv = app.add_subcommand("convergence", "Monte-Carlo grid-convergence study");
  auto* demo = app.add_subcommand("noisy-demo", "Noisy reconstruction against the low-pass baseline");
  add_flags(rec, rec_flags);
  add_flags(conv, conv_flags);
  add_flags(demo, demo_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (rec->parsed()) return run_single_mode(build_config(gtv::ExperimentKind::reconstruct, rec_flags));
    if (demo->parsed()) return run_single_mode(build_config(gtv::ExperimentKind::noisy_demo, demo_flags));
    return run_convergence_mode(build_config(gtv::ExperimentKind::convergence, conv_flags));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
