#pragma once

// Uniform periodic B-spline discretization of the D^M-spline space on a
// P-point grid x_p = 2 pi p / P.

#include <vector>

#include <Eigen/Dense>

#include "gtv/fourier.hpp"

namespace gtv {

struct GridSpec {
  int order = 1;        // M
  int grid_points = 1;  // P
  int cutoff = 0;       // K_c

  double step() const { return kTwoPi / grid_points; }
  double node(int p) const { return step() * p; }
  /// (P / 2pi)^(M-1), the scale between d * c and Dirac weights.
  double innovation_scale() const;
  /// The FFT-diagonalized solver needs k and P - k distinct for k <= K_c.
  bool supports_fft_solve() const { return grid_points >= 2 * cutoff + 1; }

  void validate() const;
};

struct SplineCoefficients {
  GridSpec grid;
  Eigen::VectorXd c;
};

struct InnovationVector {
  GridSpec grid;
  Eigen::VectorXd a;  // Dirac weights at the grid nodes
};

struct Knot {
  double location = 0.0;
  double weight = 0.0;
};

struct KnotCluster {
  double location = 0.0;  // |weight|-weighted centroid on the torus
  double weight = 0.0;    // net weight
  int size = 0;
};

/// Fourier coefficient k of the periodic B-spline supported on [0, M h]:
/// P^(M-1) ((1 - e^{-ik 2pi/P}) / (2 pi i k))^M, and 1/P at k = 0.
Complex bspline_fourier_coeff(const GridSpec& grid, long k);

/// Length-P sequence with DFT (1 - e^{-ik 2pi/P})^M: the periodized
/// binomial coefficients (-1)^m C(M, m).
Eigen::VectorXd d_filter(int order, int grid_points);

/// Cyclic convolution (d * c)[p] = sum_m d[m] c[p - m].
Eigen::VectorXd cyclic_convolve(const Eigen::VectorXd& d, const Eigen::VectorXd& c);
/// Transpose of c -> d * c.
Eigen::VectorXd cyclic_correlate(const Eigen::VectorXd& d, const Eigen::VectorXd& v);

/// a = (P/2pi)^(M-1) (d * c).
InnovationVector innovation(const SplineCoefficients& c);

/// Continuous-domain spline sum_p c[p] beta(x - x_p) in Green's-function form.
/// Knots with |a[p]| <= amp_tol * max|a| are dropped; the dropped mass is
/// spread over the kept knots so the amplitudes still sum to zero.
PeriodicSpline synthesize(const SplineCoefficients& c, double amp_tol = 0.0);

/// Periodic B-spline value at x (exact, via its Green's-function expansion).
double bspline_eval(const GridSpec& grid, double x);
/// Periodic B-spline value from its Fourier series truncated at |k| <= truncation.
double bspline_eval_fourier(const GridSpec& grid, double x, long truncation);

/// The measurement operator restricted to the B-spline grid,
/// H_{k,l} = e^{-ik l 2pi/P} beta^[k] for k = 0..K_c, l = 0..P-1.
class SystemMatrix {
 public:
  explicit SystemMatrix(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  /// beta^[k] for k = 0..K_c.
  const Eigen::VectorXcd& bspline_coeffs() const { return beta_hat_; }

  /// H c through a length-P FFT.
  MeasurementVector apply(const Eigen::VectorXd& c) const;
  /// H c through the materialized matrix.
  MeasurementVector apply_dense(const Eigen::VectorXd& c) const;
  /// Re(H^H z) under the real pairing of MeasurementVector: the gradient of
  /// c -> <Hc, z>.
  Eigen::VectorXd apply_adjoint(const MeasurementVector& z) const;
  /// (K_c + 1) x P complex matrix.
  Eigen::MatrixXcd dense() const;
  /// Real (2 K_c + 1) x P matrix acting on c with output in the
  /// MeasurementVector::to_real stacking.
  Eigen::MatrixXd dense_real() const;

  /// Eigenvalues (DFT index j = 0..P-1) of the circulant Re(H^H H) when
  /// supports_fft_solve() holds.
  Eigen::VectorXd normal_eigenvalues() const;

 private:
  GridSpec grid_;
  Eigen::VectorXcd beta_hat_;
};

/// Grid locations with |a[p]| > amp_tol * max|a|.
std::vector<Knot> extract_knots(const InnovationVector& a, double amp_tol = 1e-8);

/// Merges knots within dist_tol of each other (transitively, torus metric).
/// Clusters with |net weight| <= amp_tol * max|knot weight| are dropped.
std::vector<KnotCluster> merge_knots(std::vector<Knot> knots, double dist_tol,
                                     double amp_tol = 1e-8);

/// Default merge distance for a grid: three grid steps.
inline double default_merge_distance(const GridSpec& grid) { return 3.0 * grid.step(); }

}  // namespace gtv
