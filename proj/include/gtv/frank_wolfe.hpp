#pragma once

// Gridless Frank-Wolfe solver for
//
//   min_{w zero-mean measure} 1/2 ||y~ - nu_L(w)||^2 + lambda ||w||_TV
//
// run on the epigraph set C = {(w, t) : ||w||_TV <= t <= B} with
// B = ||y~||^2 / (2 lambda), where y~ is y with its mean slot zeroed. The
// reconstruction is f = y_0 + L^dagger w.

#include <vector>

#include "gtv/fourier.hpp"

namespace gtv {

enum class StepRule { harmonic, exact_line_search };

struct FwParams {
  /// <= 0 selects 10 (2 K_c + 1).
  int max_outer_iters = 0;
  /// Slack on the certificate criterion max(eta) - min(eta) <= 2.
  double stop_tol = 1e-6;
  StepRule step_rule = StepRule::exact_line_search;
  /// Coarse certificate samples per unit of degree.
  int grid_density = 16;
  /// Re-optimize all weights on the current support after every step.
  bool refit = true;
  /// Refit with the l1 penalty (otherwise zero-sum least squares).
  bool refit_l1 = true;
  /// After the refit, move atoms and weights jointly (signs fixed) by
  /// damped Gauss-Newton steps.
  bool slide = true;

  void validate() const;
};

struct FwHistoryEntry {
  int iteration = 0;
  double objective = 0.0;
  double oscillation = 0.0;
};

struct FwState {
  ZeroMeanMeasure w;
  double t = 0.0;
  double bound = 0.0;
  std::vector<FwHistoryEntry> history;
  int iterations = 0;
  bool converged = false;
};

struct Extrema {
  double x_max = 0.0;
  double eta_max = 0.0;
  double x_min = 0.0;
  double eta_min = 0.0;
  bool degenerate = false;

  double oscillation() const { return eta_max - eta_min; }
};

struct GreedyCandidate {
  ZeroMeanMeasure w;
  double t = 0.0;
};

struct FwResult {
  PeriodicSpline spline;
  FwState state;
};

/// y with the mean slot set to zero.
MeasurementVector zero_mean_data(const MeasurementVector& y);

/// ||y~||^2 / (2 lambda).
double epigraph_bound(const MeasurementVector& y, double lambda);

/// T(w, t) = 1/2 ||y~ - nu_L(w)||^2 + lambda t.
double lifted_objective(const ZeroMeanMeasure& w, double t, const MeasurementVector& y,
                        double lambda, int order);

/// eta = (1/lambda) nu_L^*(y~ - nu_L(w)).
TrigPolynomial certificate(const FwState& state, const MeasurementVector& y, double lambda,
                           int order);

/// Global max and min of a real trig polynomial on the torus: coarse scan at
/// grid_density * max(degree, 1) points, then safeguarded Newton on eta'.
/// Among equal extrema the smallest location wins.
Extrema extremize(const TrigPolynomial& eta, int grid_density = 16);

/// Linear minimization over C given the certificate's extrema.
GreedyCandidate greedy_candidate(const Extrema& ext, double bound);

GreedyCandidate greedy_step(const FwState& state, const MeasurementVector& y, double lambda,
                            int order, int grid_density = 16);

struct RefitResult {
  ZeroMeanMeasure w;
  bool rank_deficient = false;
};

/// Best zero-sum weights on a fixed support (l1-penalized or least squares).
RefitResult fully_corrective_refit(const std::vector<double>& support, const MeasurementVector& y,
                                   double lambda, int order, bool l1 = true);

/// Local descent on 1/2 ||y~ - nu_L(w)||^2 + lambda ||w||_TV over atom
/// locations and weights with the sign pattern and zero sum kept. Never
/// increases the objective.
ZeroMeanMeasure slide(const ZeroMeanMeasure& w, const MeasurementVector& y, double lambda, int order,
                      int max_steps = 200);

FwResult fw_solve(const MeasurementVector& y, double lambda, int order, const FwParams& params = {});

}  // namespace gtv
