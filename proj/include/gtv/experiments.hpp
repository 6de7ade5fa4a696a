#pragma once

// Experiment harness: ground-truth generation, noise, reconstruction with
// either solver, the low-pass baseline, error metrics, the Monte-Carlo grid
// convergence study and artifact output.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "gtv/admm.hpp"
#include "gtv/bspline.hpp"
#include "gtv/fourier.hpp"
#include "gtv/frank_wolfe.hpp"

namespace gtv {

enum class ExperimentKind { reconstruct, convergence, noisy_demo };
enum class SolverKind { admm, frank_wolfe };

std::string to_string(ExperimentKind kind);
std::string to_string(SolverKind kind);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::reconstruct;
  int order = 2;
  int cutoff = 3;
  std::vector<int> grid_points{16};
  double lambda = 1e-7;
  double noise_sigma = 0.0;
  int n_knots = 2;
  int n_trials = 1;
  std::uint64_t seed = 1;
  SolverKind solver = SolverKind::admm;
  std::filesystem::path out_dir = ".";
  int eval_points = 8192;
  /// Worker threads for trial-parallel studies (results do not depend on it).
  int threads = 1;
  AdmmParams admm;
  FwParams fw;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct TrialRecord {
  int trial_id = 0;
  int grid_points = 0;
  double linf_error = 0.0;
  int raw_knots = 0;
  int merged_knots = 0;
  double objective = 0.0;
  int solver_iterations = 0;
  double wall_time_seconds = 0.0;
  bool converged = false;
};

/// Seedable generator with independent substreams: stream s of seed k is
/// mt19937_64 seeded by seed_seq{k_lo, k_hi, s_lo, s_hi}. Uniform and normal
/// draws are computed here rather than by <random> distributions so the
/// sequence is identical across standard libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Substream tags for a trial.
enum class Stream : std::uint64_t { ground_truth = 0, noise = 1 };
Rng trial_rng(std::uint64_t seed, int trial_id, Stream stream);

/// Knot n uniform in [2pi n/N, 2pi (n+1)/N); amplitudes i.i.d. standard
/// normal projected onto the zero-sum subspace; mean zero.
PeriodicSpline generate_ground_truth(int order, int n_knots, Rng& rng);
PeriodicSpline generate_ground_truth(int order, int n_knots, std::uint64_t seed);

/// Adds N(0, sigma^2) to the mean and to both parts of every coefficient.
MeasurementVector add_noise(const MeasurementVector& y, double sigma, Rng& rng);
MeasurementVector add_noise(const MeasurementVector& y, double sigma, std::uint64_t seed);

/// Truncated Fourier series y_0 + sum_k 2 Re(y_k e^{ikx}).
TrigPolynomial lowpass_baseline(const MeasurementVector& y_clean);

/// Equispaced torus points, shifted by half a sample for order-1 splines.
std::vector<double> evaluation_grid(int n_points, int order);

/// max_i |f(x_i) - g(x_i)| over evaluation_grid(n_points, order).
template <typename F, typename G>
double linf_error(F&& f, G&& g, int n_points, int order = 2) {
  double err = 0.0;
  for (double x : evaluation_grid(n_points, order)) {
    const double d = std::fabs(f(x) - g(x));
    if (d > err) err = d;
  }
  return err;
}

struct SlopeFit {
  double slope = 0.0;        // s in error ~ C / P^s
  double log_constant = 0.0;
  double slope_all_points = 0.0;
  bool excluded_smallest = false;
};

/// Least-squares fit of log(error) against log(P). The smallest P is left out
/// when it lies more than three median absolute deviations (of the all-points
/// residuals) off the line through the other points. Needs at least 4 points.
SlopeFit fit_convergence_slope(const std::vector<int>& grid_points, const std::vector<double>& errors);

/// Clusters whose net weight is below this fraction of the largest knot
/// weight are not reported.
inline constexpr double kClusterAmpTol = 1e-3;
/// Frank-Wolfe atoms are off-grid; only nearly coincident ones form a cluster.
inline constexpr double kGridlessMergeDistance = 1e-6;

struct Reconstruction {
  PeriodicSpline spline;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<Knot> raw_knots;
  std::vector<KnotCluster> clusters;
  MeasurementVector measurement;
  /// Frank-Wolfe only: final certificate oscillation.
  double certificate_oscillation = 0.0;
};

/// Solves the reconstruction problem for data y with the configured solver;
/// grid_points selects the ADMM grid and its knot merge distance.
Reconstruction reconstruct(const MeasurementVector& y, const ExperimentConfig& config, int grid_points);

struct ConvergencePoint {
  int grid_points = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  int n_ok_trials = 0;
};

struct ConvergenceReport {
  std::vector<ConvergencePoint> points;
  SlopeFit fit;
  int failed_trials = 0;
  std::vector<TrialRecord> records;  // sorted by (trial_id, grid_points)
};

ConvergenceReport convergence_study(const ExperimentConfig& config);

struct SingleRunReport {
  PeriodicSpline ground_truth;
  MeasurementVector clean_data;
  MeasurementVector data;
  Reconstruction result;
  TrigPolynomial lowpass;
  double linf_error = 0.0;
  double lowpass_linf_error = 0.0;
  double ground_truth_linf_norm = 0.0;
  double wall_time_seconds = 0.0;
};

/// The single-run experiments (reconstruct, noisy-demo) at grid_points[0].
SingleRunReport run_single(const ExperimentConfig& config);

nlohmann::json config_to_json(const ExperimentConfig& config);
nlohmann::json summary_json(const ExperimentConfig& config, const SingleRunReport& report);
nlohmann::json summary_json(const ExperimentConfig& config, const ConvergenceReport& report);

std::string profile_csv(const ExperimentConfig& config, const SingleRunReport& report);
std::string convergence_csv(const ConvergenceReport& report);

/// Writes every (file name, contents) pair into dir through temporary files
/// that are renamed only after all writes succeeded.
void write_artifacts(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, std::string>>& files);

}  // namespace gtv
