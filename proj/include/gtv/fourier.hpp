#pragma once

// Fourier-series conventions, periodic Green's functions of D^M and
// periodic L-splines.
//
// Convention used throughout the library:
//   f^[k] = (1/2pi) * integral_0^{2pi} f(x) exp(-ikx) dx,   f = sum_k f^[k] e_k.
// With this pairing a unit Dirac comb has coefficients 1/(2pi)
// (kDiracStreamCoeff), and the Green's function
//   g(x) = sum_{k != 0} e^{ikx} / (ik)^M
// satisfies D^M g = 2pi * Sha - 1. A PeriodicSpline stores coefficients on g
// (f = a0 + sum a_n g(. - x_n)); a ZeroMeanMeasure stores true Dirac weights.
// The two are related by amplitude = kDiracStreamCoeff * weight.

#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace gtv {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDiracStreamCoeff = 1.0 / kTwoPi;

/// Absolute distance below which two torus locations are the same point.
inline constexpr double kLocationTol = 1e-12;

/// Maps x to [0, 2pi).
double wrap_to_torus(double x);

/// Geodesic distance on the torus, in [0, pi].
double torus_distance(double a, double b);

/// Observation vector y = (y_0, y_1, ..., y_Kc) in R x C^Kc.
class MeasurementVector {
 public:
  MeasurementVector() = default;
  explicit MeasurementVector(int cutoff);
  MeasurementVector(double mean, Eigen::VectorXcd coeffs);

  int cutoff() const { return static_cast<int>(coeffs_.size()); }
  double mean() const { return mean_; }
  double& mean() { return mean_; }
  const Eigen::VectorXcd& coeffs() const { return coeffs_; }
  Eigen::VectorXcd& coeffs() { return coeffs_; }

  /// Component k in 0..cutoff; k = 0 is the (real) mean.
  Complex operator[](int k) const;

  /// Squared norm: mean^2 + sum_{k>=1} |y_k|^2.
  double squared_norm() const;

  /// Real stacking (mean, Re y_1, Im y_1, ..., Re y_Kc, Im y_Kc).
  Eigen::VectorXd to_real() const;
  static MeasurementVector from_real(const Eigen::VectorXd& v);

  MeasurementVector operator-(const MeasurementVector& other) const;
  MeasurementVector operator+(const MeasurementVector& other) const;

 private:
  double mean_ = 0.0;
  Eigen::VectorXcd coeffs_;
};

/// Periodic D^M-spline f = mean + sum_n amplitudes[n] * g(x - knots[n]).
struct PeriodicSpline {
  int order = 1;
  double mean = 0.0;
  std::vector<double> knots;
  std::vector<double> amplitudes;

  /// Throws std::invalid_argument on broken invariants (order, sizes,
  /// knot range and distinctness, zero-sum amplitudes).
  void validate() const;

  std::size_t num_knots() const { return knots.size(); }
};

struct SplineValue {
  double value = 0.0;
  /// Set when an order-1 spline was evaluated exactly at a knot; the
  /// returned value is then the right limit.
  bool at_knot = false;
};

struct Atom {
  double location = 0.0;
  double weight = 0.0;
};

/// Finite zero-mean sum of Dirac masses on the torus. Always canonical:
/// locations wrapped, sorted and distinct, zero weights removed.
class ZeroMeanMeasure {
 public:
  ZeroMeanMeasure() = default;
  /// Canonicalizes `atoms`; weights within `drop_tol` of zero are removed.
  explicit ZeroMeanMeasure(std::vector<Atom> atoms, double drop_tol = 0.0);

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  double total_mass() const;

  ZeroMeanMeasure operator+(const ZeroMeanMeasure& other) const;
  ZeroMeanMeasure scaled(double factor) const;

 private:
  std::vector<Atom> atoms_;
};

/// Real trigonometric polynomial mean + sum_{k=1}^K 2 Re(c_k e^{ikx}).
class TrigPolynomial {
 public:
  TrigPolynomial() = default;
  TrigPolynomial(double mean, Eigen::VectorXcd coeffs);

  int degree() const { return static_cast<int>(coeffs_.size()); }
  double mean() const { return mean_; }
  const Eigen::VectorXcd& coeffs() const { return coeffs_; }

  double operator()(double x) const { return derivative(x, 0); }
  /// n-th derivative at x.
  double derivative(double x, int n) const;
  /// Largest |coefficient|-based bound on sup |p - mean|.
  double coefficient_bound() const;

  TrigPolynomial scaled(double factor) const;

 private:
  double mean_ = 0.0;
  Eigen::VectorXcd coeffs_;
};

/// Truncated Green's function sum_{0<|k|<=truncation} e^{ikx}/(ik)^M.
double green_eval(int order, double x, int truncation);

/// Exact Green's function via the Bernoulli-polynomial closed form
/// g(x) = -(2pi)^M / M! * B_M(x / 2pi) on [0, 2pi). For M = 1 the value at
/// 0 is the right limit pi.
double green_value(int order, double x);

/// Truncation level K with 2 * sum_{k>K} k^{-M} <= tol (M >= 2).
int green_truncation_for(int order, double tol);

SplineValue spline_eval(const PeriodicSpline& s, double x);
/// Same, with the Green's function evaluated by truncated sums.
SplineValue spline_eval(const PeriodicSpline& s, double x, int truncation);

/// Closed-form Fourier coefficients (mean, f^[1], ..., f^[Kc]) of a spline.
MeasurementVector measure(const PeriodicSpline& s, int cutoff);

/// nu_L(w) = nu(L^dagger w): zero mean slot, then
/// kDiracStreamCoeff * sum_n w_n e^{-ikx_n} / (ik)^M.
MeasurementVector measure_innovation(const ZeroMeanMeasure& w, int order, int cutoff);

/// Adjoint of nu_L with respect to the real pairing
/// <v, z> = v_0 z_0 + sum_{k>=1} Re(conj(v_k) z_k): the function eta with
/// sum_n w_n eta(x_n) = <nu_L(w), z> for every discrete w. The mean slot of z
/// is ignored.
TrigPolynomial apply_adjoint(const MeasurementVector& z, int order);

/// l1 norm of the atom weights.
double tv_norm(const ZeroMeanMeasure& w);

/// f = mean + L^dagger w as a PeriodicSpline.
PeriodicSpline spline_from_innovation(const ZeroMeanMeasure& w, int order, double mean);

/// Innovation L f of a spline as a measure of true Dirac weights.
ZeroMeanMeasure innovation_of(const PeriodicSpline& s);

}  // namespace gtv
