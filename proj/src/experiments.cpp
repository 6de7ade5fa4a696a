#include "gtv/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace gtv {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Ordinary least squares y = a + b x; returns (a, b).
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b = sxy / sxx;
  return {my - b * mx, b};
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::reconstruct: return "reconstruct";
    case ExperimentKind::convergence: return "convergence";
    case ExperimentKind::noisy_demo: return "noisy-demo";
  }
  return "unknown";
}

std::string to_string(SolverKind kind) {
  return kind == SolverKind::admm ? "admm" : "fw";
}

void ExperimentConfig::validate() const {
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  if (cutoff < 0) throw std::invalid_argument("cutoff must be >= 0");
  if (grid_points.empty()) throw std::invalid_argument("at least one grid size is required");
  for (int p : grid_points)
    if (p < 1) throw std::invalid_argument("grid sizes must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (noise_sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (n_knots < 2) throw std::invalid_argument("ground truth needs at least two knots");
  if (n_trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (eval_points < 2) throw std::invalid_argument("evaluation grid needs at least two points");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (experiment == ExperimentKind::convergence) {
    if (grid_points.size() < 3) throw std::invalid_argument("convergence study needs at least three grid sizes");
    for (std::size_t i = 1; i < grid_points.size(); ++i)
      if (grid_points[i] <= grid_points[i - 1])
        throw std::invalid_argument("convergence grid sizes must be increasing");
  }
  admm.validate();
  fw.validate();
}

// --- random numbers ------------------------------------------------------------

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream & 0xffffffffu), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Rng trial_rng(std::uint64_t seed, int trial_id, Stream stream) {
  return Rng(seed, (static_cast<std::uint64_t>(trial_id) << 8) | static_cast<std::uint64_t>(stream));
}

// --- signals -------------------------------------------------------------------

PeriodicSpline generate_ground_truth(int order, int n_knots, Rng& rng) {
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  if (n_knots < 2) throw std::invalid_argument("ground truth needs at least two knots");
  PeriodicSpline s;
  s.order = order;
  const double width = kTwoPi / n_knots;
  for (int n = 0; n < n_knots; ++n) s.knots.push_back(wrap_to_torus(width * (n + rng.uniform())));
  for (int n = 0; n < n_knots; ++n) s.amplitudes.push_back(rng.normal());
  const double mean = std::accumulate(s.amplitudes.begin(), s.amplitudes.end(), 0.0) / n_knots;
  for (auto& a : s.amplitudes) a -= mean;
  return s;
}

PeriodicSpline generate_ground_truth(int order, int n_knots, std::uint64_t seed) {
  Rng rng = trial_rng(seed, 0, Stream::ground_truth);
  return generate_ground_truth(order, n_knots, rng);
}

MeasurementVector add_noise(const MeasurementVector& y, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  MeasurementVector out = y;
  if (sigma == 0.0) return out;
  out.mean() += sigma * rng.normal();
  for (int k = 0; k < y.cutoff(); ++k) {
    const double re = sigma * rng.normal();
    const double im = sigma * rng.normal();
    out.coeffs()[k] += Complex(re, im);
  }
  return out;
}

MeasurementVector add_noise(const MeasurementVector& y, double sigma, std::uint64_t seed) {
  Rng rng = trial_rng(seed, 0, Stream::noise);
  return add_noise(y, sigma, rng);
}

TrigPolynomial lowpass_baseline(const MeasurementVector& y_clean) {
  return {y_clean.mean(), y_clean.coeffs()};
}

std::vector<double> evaluation_grid(int n_points, int order) {
  if (n_points < 2) throw std::invalid_argument("evaluation grid needs at least two points");
  const double h = kTwoPi / n_points;
  const double offset = order == 1 ? 0.5 : 0.0;
  std::vector<double> xs(n_points);
  for (int i = 0; i < n_points; ++i) xs[i] = (i + offset) * h;
  return xs;
}

SlopeFit fit_convergence_slope(const std::vector<int>& grid_points, const std::vector<double>& errors) {
  if (grid_points.size() != errors.size() || grid_points.size() < 2)
    throw std::invalid_argument("slope fit needs matching vectors with at least two points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!(errors[i] > 0.0)) throw std::invalid_argument("slope fit needs positive errors");
    lx.push_back(std::log(static_cast<double>(grid_points[i])));
    ly.push_back(std::log(errors[i]));
  }
  SlopeFit fit;
  const auto [a_all, b_all] = line_fit(lx, ly);
  fit.slope_all_points = -b_all;
  fit.slope = -b_all;
  fit.log_constant = a_all;
  if (lx.size() < 4) return fit;

  const auto smallest = static_cast<std::size_t>(
      std::min_element(grid_points.begin(), grid_points.end()) - grid_points.begin());
  std::vector<double> residuals;
  for (std::size_t i = 0; i < lx.size(); ++i) residuals.push_back(ly[i] - (a_all + b_all * lx[i]));
  const double med = median(residuals);
  std::vector<double> dev;
  for (double r : residuals) dev.push_back(std::fabs(r - med));
  const double mad = median(dev);
  // The smallest P is an end point with high leverage, so its deviation is
  // measured from the line through the remaining points.
  std::vector<double> lx2, ly2;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    if (i == smallest) continue;
    lx2.push_back(lx[i]);
    ly2.push_back(ly[i]);
  }
  const auto [a, b] = line_fit(lx2, ly2);
  const double deviation = ly[smallest] - (a + b * lx[smallest]);
  if (mad > 0.0 && std::fabs(deviation) > 3.0 * mad) {
    fit.slope = -b;
    fit.log_constant = a;
    fit.excluded_smallest = true;
  }
  return fit;
}

// --- reconstruction ------------------------------------------------------------

Reconstruction reconstruct(const MeasurementVector& y, const ExperimentConfig& config, int grid_points) {
  Reconstruction out;
  const GridSpec grid{config.order, grid_points, y.cutoff()};
  if (config.solver == SolverKind::admm) {
    const AdmmResult res = solve_discrete(y, grid, config.lambda, config.admm);
    out.spline = synthesize(res.c_star);
    out.objective = res.objective;
    out.iterations = res.iterations;
    out.converged = res.converged;
    out.raw_knots = extract_knots({grid, res.sparse_innovation});
    out.measurement = solution_measurement(res);
  } else {
    const FwResult res = fw_solve(y, config.lambda, config.order, config.fw);
    out.spline = res.spline;
    out.objective = res.state.history.empty() ? 0.0 : res.state.history.back().objective;
    out.iterations = res.state.iterations;
    out.converged = res.state.converged;
    for (const auto& a : res.state.w.atoms()) out.raw_knots.push_back({a.location, a.weight});
    out.measurement = measure(res.spline, y.cutoff());
    out.certificate_oscillation = res.state.history.empty() ? 0.0 : res.state.history.back().oscillation;
  }
  const double merge_distance =
      config.solver == SolverKind::admm ? default_merge_distance(grid) : kGridlessMergeDistance;
  out.clusters = merge_knots(out.raw_knots, merge_distance, kClusterAmpTol);
  return out;
}

ConvergenceReport convergence_study(const ExperimentConfig& config) {
  config.validate();
  const std::vector<int>& sizes = config.grid_points;

  std::vector<std::vector<TrialRecord>> per_trial(config.n_trials);
  auto run_trial = [&](int trial) {
    Rng gt_rng = trial_rng(config.seed, trial, Stream::ground_truth);
    const PeriodicSpline truth = generate_ground_truth(config.order, config.n_knots, gt_rng);
    MeasurementVector y = measure(truth, config.cutoff);
    if (config.noise_sigma > 0.0) {
      Rng noise_rng = trial_rng(config.seed, trial, Stream::noise);
      y = add_noise(y, config.noise_sigma, noise_rng);
    }
    for (int p : sizes) {
      const auto start = Clock::now();
      const Reconstruction rec = reconstruct(y, config, p);
      TrialRecord r;
      r.trial_id = trial;
      r.grid_points = p;
      r.linf_error = linf_error([&](double x) { return spline_eval(rec.spline, x).value; },
                                [&](double x) { return spline_eval(truth, x).value; },
                                config.eval_points, config.order);
      r.raw_knots = static_cast<int>(rec.raw_knots.size());
      r.merged_knots = static_cast<int>(rec.clusters.size());
      r.objective = rec.objective;
      r.solver_iterations = rec.iterations;
      r.converged = rec.converged;
      r.wall_time_seconds = seconds_since(start);
      per_trial[trial].push_back(r);
    }
  };

  const int workers = std::min(config.threads, config.n_trials);
  if (workers <= 1) {
    for (int t = 0; t < config.n_trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int t = w; t < config.n_trials; t += workers) run_trial(t);
      });
    for (auto& th : pool) th.join();
  }

  ConvergenceReport report;
  std::vector<bool> trial_ok(config.n_trials, true);
  for (int t = 0; t < config.n_trials; ++t) {
    for (const auto& r : per_trial[t]) {
      report.records.push_back(r);
      if (!r.converged) trial_ok[t] = false;
    }
  }
  report.failed_trials = static_cast<int>(std::count(trial_ok.begin(), trial_ok.end(), false));

  std::vector<double> means;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::vector<double> errs;
    for (int t = 0; t < config.n_trials; ++t)
      if (trial_ok[t]) errs.push_back(per_trial[t][i].linf_error);
    ConvergencePoint pt;
    pt.grid_points = sizes[i];
    pt.n_ok_trials = static_cast<int>(errs.size());
    if (!errs.empty()) {
      pt.mean_error = std::accumulate(errs.begin(), errs.end(), 0.0) / errs.size();
      double var = 0.0;
      for (double e : errs) var += (e - pt.mean_error) * (e - pt.mean_error);
      pt.std_error = errs.size() > 1 ? std::sqrt(var / (errs.size() - 1)) : 0.0;
    }
    means.push_back(pt.mean_error);
    report.points.push_back(pt);
  }
  if (report.failed_trials < config.n_trials) report.fit = fit_convergence_slope(sizes, means);
  return report;
}

SingleRunReport run_single(const ExperimentConfig& config) {
  config.validate();
  const auto start = Clock::now();
  SingleRunReport report;
  Rng gt_rng = trial_rng(config.seed, 0, Stream::ground_truth);
  report.ground_truth = generate_ground_truth(config.order, config.n_knots, gt_rng);
  report.clean_data = measure(report.ground_truth, config.cutoff);
  Rng noise_rng = trial_rng(config.seed, 0, Stream::noise);
  report.data = add_noise(report.clean_data, config.noise_sigma, noise_rng);
  report.result = reconstruct(report.data, config, config.grid_points.front());
  report.lowpass = lowpass_baseline(report.clean_data);

  auto truth = [&](double x) { return spline_eval(report.ground_truth, x).value; };
  report.linf_error = linf_error([&](double x) { return spline_eval(report.result.spline, x).value; },
                                 truth, config.eval_points, config.order);
  report.lowpass_linf_error = linf_error(report.lowpass, truth, config.eval_points, config.order);
  report.ground_truth_linf_norm = linf_error(truth, [](double) { return 0.0; }, config.eval_points, config.order);
  report.wall_time_seconds = seconds_since(start);
  return report;
}

// --- artifacts -----------------------------------------------------------------

nlohmann::json config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["experiment"] = to_string(config.experiment);
  j["order"] = config.order;
  j["cutoff"] = config.cutoff;
  j["grid"] = config.grid_points;
  j["lambda"] = config.lambda;
  j["sigma"] = config.noise_sigma;
  j["knots"] = config.n_knots;
  j["trials"] = config.n_trials;
  j["seed"] = config.seed;
  j["solver"] = to_string(config.solver);
  j["eval-points"] = config.eval_points;
  return j;
}

namespace {

nlohmann::json knots_json(const std::vector<double>& locations, const std::vector<double>& weights) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < locations.size(); ++i)
    arr.push_back({{"location", locations[i]}, {"weight", weights[i]}});
  return arr;
}

}  // namespace

nlohmann::json summary_json(const ExperimentConfig& config, const SingleRunReport& report) {
  nlohmann::json j;
  j["config"] = config_to_json(config);
  j["ground_truth_proxy"] =
      "the ground truth stands in for the continuous-domain solution; errors are measured against it";
  const auto& rec = report.result;
  j["solver"] = {{"name", to_string(config.solver)},
                 {"objective", rec.objective},
                 {"iterations", rec.iterations},
                 {"converged", rec.converged}};
  if (config.solver == SolverKind::frank_wolfe) j["solver"]["certificate_oscillation"] = rec.certificate_oscillation;
  j["knots"] = {{"raw", rec.raw_knots.size()},
                {"merged", rec.clusters.size()},
                {"ground_truth", report.ground_truth.num_knots()}};
  {
    std::vector<double> loc, wt;
    for (const auto& c : rec.clusters) {
      loc.push_back(c.location);
      wt.push_back(c.weight);
    }
    j["clusters"] = knots_json(loc, wt);
    std::vector<double> gt_weights;
    for (double amp : report.ground_truth.amplitudes) gt_weights.push_back(amp / kDiracStreamCoeff);
    j["ground_truth_knots"] = knots_json(report.ground_truth.knots, gt_weights);
  }
  j["errors"] = {{"linf", report.linf_error},
                 {"lowpass_linf", report.lowpass_linf_error},
                 {"ground_truth_linf_norm", report.ground_truth_linf_norm},
                 {"relative_linf", report.ground_truth_linf_norm > 0.0
                                       ? report.linf_error / report.ground_truth_linf_norm
                                       : 0.0}};
  const double ynorm = std::sqrt(report.data.squared_norm());
  j["measurement_residual_relative"] =
      ynorm > 0.0 ? std::sqrt((rec.measurement - report.data).squared_norm()) / ynorm : 0.0;
  j["wall_time_seconds"] = report.wall_time_seconds;
  return j;
}

nlohmann::json summary_json(const ExperimentConfig& config, const ConvergenceReport& report) {
  nlohmann::json j;
  j["config"] = config_to_json(config);
  j["ground_truth_proxy"] =
      "the ground truth stands in for the continuous-domain solution; errors are measured against it";
  j["slope"] = report.fit.slope;
  j["slope_all_points"] = report.fit.slope_all_points;
  j["excluded_smallest_grid"] = report.fit.excluded_smallest;
  j["failed_trials"] = report.failed_trials;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : report.points)
    pts.push_back({{"P", p.grid_points},
                   {"mean_error", p.mean_error},
                   {"std_error", p.std_error},
                   {"n_ok_trials", p.n_ok_trials}});
  j["points"] = pts;
  nlohmann::json trials = nlohmann::json::array();
  double total_time = 0.0;
  for (const auto& r : report.records) {
    trials.push_back({{"trial_id", r.trial_id},
                      {"P", r.grid_points},
                      {"linf_error", r.linf_error},
                      {"raw_knots", r.raw_knots},
                      {"merged_knots", r.merged_knots},
                      {"objective", r.objective},
                      {"solver_iterations", r.solver_iterations},
                      {"converged", r.converged}});
    total_time += r.wall_time_seconds;
  }
  j["trials"] = trials;
  j["wall_time_seconds"] = total_time;
  return j;
}

std::string profile_csv(const ExperimentConfig& config, const SingleRunReport& report) {
  std::string out = "x,f_reconstructed,f_ground_truth,f_lowpass\n";
  for (double x : evaluation_grid(config.eval_points, config.order)) {
    out += format_number(x);
    out += ',';
    out += format_number(spline_eval(report.result.spline, x).value);
    out += ',';
    out += format_number(spline_eval(report.ground_truth, x).value);
    out += ',';
    out += format_number(report.lowpass(x));
    out += '\n';
  }
  return out;
}

std::string convergence_csv(const ConvergenceReport& report) {
  std::string out = "P,mean_error,std_error,n_ok_trials\n";
  for (const auto& p : report.points) {
    out += std::to_string(p.grid_points) + ',' + format_number(p.mean_error) + ',' +
           format_number(p.std_error) + ',' + std::to_string(p.n_ok_trials) + '\n';
  }
  return out;
}

void write_artifacts(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& files) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
  try {
    for (const auto& [name, contents] : files) {
      const auto target = dir / name;
      auto tmp = target;
      tmp += ".tmp";
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw std::runtime_error("cannot open " + tmp.string());
      os << contents;
      os.close();
      if (!os) throw std::runtime_error("failed writing " + tmp.string());
      staged.emplace_back(tmp, target);
    }
  } catch (...) {
    for (const auto& [tmp, target] : staged) std::filesystem::remove(tmp);
    throw;
  }
  std::size_t renamed = 0;
  try {
    for (; renamed < staged.size(); ++renamed) std::filesystem::rename(staged[renamed].first, staged[renamed].second);
  } catch (...) {
    std::error_code ec;
    for (std::size_t i = 0; i < staged.size(); ++i)
      std::filesystem::remove(i < renamed ? staged[i].second : staged[i].first, ec);
    throw;
  }
}

}  // namespace gtv
