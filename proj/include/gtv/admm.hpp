#pragma once

// ADMM for the grid-restricted problem
//
//   min_c 1/2 ||H c - y||^2 + lambda (P/2pi)^(M-1) ||d * c||_1
//
// with the splitting z = d * c. Both H^T H (restricted to real c) and the
// convolution with d are circulant, so the c-update is a pointwise division
// in the DFT domain.

#include <optional>

#include <Eigen/Dense>

#include "gtv/bspline.hpp"
#include "gtv/fourier.hpp"

namespace gtv {

struct AdmmParams {
  /// Augmented-Lagrangian parameter; <= 0 selects lambda * (P/2pi)^(M-1).
  double rho = 0.0;
  int max_iters = 50000;
  double abs_tol = 1e-9;
  double rel_tol = 1e-7;
  double over_relaxation = 1.8;
  /// Residual balancing (rho doubled/halved when one residual dominates).
  bool adaptive_rho = true;
  /// Use the materialized system matrix even when the FFT path applies.
  bool force_dense = false;
  /// Every `polish_every` iterations, solve the problem exactly on the
  /// support and signs of the sparse iterate; stop if that point is
  /// certified optimal. 0 disables.
  int polish_every = 50;

  void validate() const;
};

struct AdmmResult {
  SplineCoefficients c_star;
  /// Split variable scaled to Dirac weights; exactly sparse.
  Eigen::VectorXd sparse_innovation;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double final_rho = 0.0;
  bool converged = false;
  /// Set when P < 2 K_c + 1 forced the dense normal-equation solve.
  bool dense_fallback = false;
  /// c_star came from the exact support solve.
  bool polished = false;
};

/// 1/2 ||Hc - y||^2 + lambda (P/2pi)^(M-1) ||d * c||_1.
double objective(const SplineCoefficients& c, const MeasurementVector& y, double lambda);

/// Componentwise soft thresholding sign(v) max(|v| - tau, 0).
Eigen::VectorXd prox_l1(const Eigen::VectorXd& v, double tau);

AdmmResult solve_discrete(const MeasurementVector& y, const GridSpec& grid, double lambda,
                          const AdmmParams& params = {},
                          const std::optional<SplineCoefficients>& warm_start = std::nullopt);

/// Real (2 K_c) x P matrix mapping grid Dirac weights a to the stacked
/// (Re, Im) Fourier coefficients 1..K_c of the spline they generate.
Eigen::MatrixXd innovation_matrix(const GridSpec& grid);

/// The coefficients c with mean(c) = mean and innovation(c) = a (sum(a) = 0).
SplineCoefficients coefficients_from_innovation(const GridSpec& grid, double mean,
                                                const Eigen::VectorXd& a);

/// H c* of a solve.
MeasurementVector solution_measurement(const AdmmResult& result);

struct ZeroSumLassoResult {
  Eigen::VectorXd weights;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Final answer came from the exact sign-pattern solve.
  bool polished = false;
  bool rank_deficient = false;
};

/// Exact active-set solve of the zero-sum lasso below, started from the
/// support and signs of `guess`. Returns nothing if it did not terminate
/// within max_steps support changes.
std::optional<Eigen::VectorXd> active_set_zero_sum_lasso(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                                         double lambda, const Eigen::VectorXd& guess,
                                                         int max_steps = 1000);

/// min_a 1/2 ||A a - b||^2 + lambda ||a||_1 subject to sum(a) = 0, by ADMM on
/// the dense system finished by the active-set solve.
ZeroSumLassoResult solve_zero_sum_lasso(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        double lambda, const AdmmParams& params = {});

/// min_a ||A a - b||^2 subject to sum(a) = 0; minimum-norm when singular.
ZeroSumLassoResult solve_zero_sum_least_squares(const Eigen::MatrixXd& a,
                                                const Eigen::VectorXd& b);

}  // namespace gtv
