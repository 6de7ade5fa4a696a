#include "gtv/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace gtv {

namespace {

// (ik)^M for integer k != 0.
Complex ik_power(int k, int order) {
  return std::pow(Complex(0.0, static_cast<double>(k)), order);
}

// Bernoulli numbers B_0..B_n (B_1 = -1/2) from sum_{j<=m} C(m+1, j) B_j = 0.
std::vector<double> bernoulli_numbers(int n) {
  std::vector<double> b(n + 1, 0.0);
  b[0] = 1.0;
  for (int m = 1; m <= n; ++m) {
    double acc = 0.0;
    double binom = 1.0;  // C(m+1, j)
    for (int j = 0; j < m; ++j) {
      acc += binom * b[j];
      binom = binom * (m + 1 - j) / (j + 1);
    }
    b[m] = -acc / (m + 1);
  }
  return b;
}

// Monomial coefficients of B_n, highest degree first.
std::vector<double> bernoulli_polynomial_terms(int n) {
  static const std::vector<double> numbers = bernoulli_numbers(32);
  std::vector<double> terms(n + 1);
  double binom = 1.0;  // C(n, j)
  for (int j = 0; j <= n; ++j) {
    terms[j] = binom * numbers[j];
    binom = binom * (n - j) / (j + 1);
  }
  return terms;
}

constexpr int kMaxGreenOrder = 32;

double bernoulli_polynomial(int n, double t) {
  if (n > kMaxGreenOrder) throw std::invalid_argument("green_value: order above 32 is not supported");
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> tab;
    for (int m = 0; m <= kMaxGreenOrder; ++m) tab.push_back(bernoulli_polynomial_terms(m));
    return tab;
  }();
  double value = 0.0;
  for (double c : table[n]) value = value * t + c;
  return value;
}

void check_order(int order) {
  if (order < 1) throw std::invalid_argument("spline order must be >= 1");
}

}  // namespace

double wrap_to_torus(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double torus_distance(double a, double b) {
  const double d = std::fabs(wrap_to_torus(a) - wrap_to_torus(b));
  return std::min(d, kTwoPi - d);
}

// --- MeasurementVector -------------------------------------------------------

MeasurementVector::MeasurementVector(int cutoff) {
  if (cutoff < 0) throw std::invalid_argument("cutoff must be >= 0");
  coeffs_ = Eigen::VectorXcd::Zero(cutoff);
}

MeasurementVector::MeasurementVector(double mean, Eigen::VectorXcd coeffs)
    : mean_(mean), coeffs_(std::move(coeffs)) {}

Complex MeasurementVector::operator[](int k) const {
  if (k < 0 || k > cutoff()) throw std::out_of_range("measurement index out of range");
  return k == 0 ? Complex(mean_, 0.0) : coeffs_[k - 1];
}

double MeasurementVector::squared_norm() const {
  return mean_ * mean_ + coeffs_.squaredNorm();
}

Eigen::VectorXd MeasurementVector::to_real() const {
  Eigen::VectorXd v(2 * cutoff() + 1);
  v[0] = mean_;
  for (int k = 0; k < cutoff(); ++k) {
    v[2 * k + 1] = coeffs_[k].real();
    v[2 * k + 2] = coeffs_[k].imag();
  }
  return v;
}

MeasurementVector MeasurementVector::from_real(const Eigen::VectorXd& v) {
  if (v.size() % 2 != 1) throw std::invalid_argument("real measurement stacking must have odd length");
  const int kc = static_cast<int>(v.size() / 2);
  Eigen::VectorXcd c(kc);
  for (int k = 0; k < kc; ++k) c[k] = Complex(v[2 * k + 1], v[2 * k + 2]);
  return {v[0], c};
}

MeasurementVector MeasurementVector::operator-(const MeasurementVector& other) const {
  if (other.cutoff() != cutoff()) throw std::invalid_argument("cutoff mismatch");
  return {mean_ - other.mean_, coeffs_ - other.coeffs_};
}

MeasurementVector MeasurementVector::operator+(const MeasurementVector& other) const {
  if (other.cutoff() != cutoff()) throw std::invalid_argument("cutoff mismatch");
  return {mean_ + other.mean_, coeffs_ + other.coeffs_};
}

// --- PeriodicSpline ----------------------------------------------------------

void PeriodicSpline::validate() const {
  check_order(order);
  if (knots.size() != amplitudes.size())
    throw std::invalid_argument("knots and amplitudes differ in length");
  double sum = 0.0;
  double l1 = 0.0;
  for (std::size_t n = 0; n < knots.size(); ++n) {
    if (!(knots[n] >= 0.0 && knots[n] < kTwoPi))
      throw std::invalid_argument("knot outside [0, 2pi): " + std::to_string(knots[n]));
    if (amplitudes[n] == 0.0) throw std::invalid_argument("zero spline amplitude");
    for (std::size_t m = 0; m < n; ++m)
      if (torus_distance(knots[n], knots[m]) <= kLocationTol)
        throw std::invalid_argument("spline knots are not pairwise distinct");
    sum += amplitudes[n];
    l1 += std::fabs(amplitudes[n]);
  }
  if (std::fabs(sum) > 1e-12 * std::max(l1, 1.0))
    throw std::invalid_argument("spline amplitudes do not sum to zero");
}

// --- ZeroMeanMeasure ---------------------------------------------------------

ZeroMeanMeasure::ZeroMeanMeasure(std::vector<Atom> atoms, double drop_tol) {
  for (auto& a : atoms) a.location = wrap_to_torus(a.location);
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& l, const Atom& r) { return l.location < r.location; });
  for (const auto& a : atoms) {
    if (!atoms_.empty() && a.location - atoms_.back().location <= kLocationTol) {
      atoms_.back().weight += a.weight;
    } else {
      atoms_.push_back(a);
    }
  }
  // Wraparound: an atom just below 2pi coincides with one at 0.
  if (atoms_.size() > 1 &&
      torus_distance(atoms_.front().location, atoms_.back().location) <= kLocationTol) {
    atoms_.front().weight += atoms_.back().weight;
    atoms_.pop_back();
  }
  std::erase_if(atoms_, [drop_tol](const Atom& a) { return std::fabs(a.weight) <= drop_tol; });
}

double ZeroMeanMeasure::total_mass() const {
  return std::accumulate(atoms_.begin(), atoms_.end(), 0.0,
                         [](double acc, const Atom& a) { return acc + a.weight; });
}

ZeroMeanMeasure ZeroMeanMeasure::operator+(const ZeroMeanMeasure& other) const {
  std::vector<Atom> all = atoms_;
  all.insert(all.end(), other.atoms_.begin(), other.atoms_.end());
  return ZeroMeanMeasure(std::move(all));
}

ZeroMeanMeasure ZeroMeanMeasure::scaled(double factor) const {
  std::vector<Atom> all = atoms_;
  for (auto& a : all) a.weight *= factor;
  return ZeroMeanMeasure(std::move(all));
}

// --- TrigPolynomial ----------------------------------------------------------

TrigPolynomial::TrigPolynomial(double mean, Eigen::VectorXcd coeffs)
    : mean_(mean), coeffs_(std::move(coeffs)) {}

double TrigPolynomial::derivative(double x, int n) const {
  double value = n == 0 ? mean_ : 0.0;
  // d^n/dx^n e^{ikx} = (ik)^n e^{ikx}; the rotation e^{ix} is advanced
  // incrementally and renormalized to keep the phase accurate.
  const Complex step(std::cos(x), std::sin(x));
  Complex phase = step;
  for (int k = 1; k <= degree(); ++k) {
    if (k % 64 == 0) phase = Complex(std::cos(k * x), std::sin(k * x));
    Complex term = coeffs_[k - 1] * phase;
    if (n > 0) term *= ik_power(k, n);
    value += 2.0 * term.real();
    phase *= step;
  }
  return value;
}

double TrigPolynomial::coefficient_bound() const {
  return 2.0 * coeffs_.cwiseAbs().sum();
}

TrigPolynomial TrigPolynomial::scaled(double factor) const {
  return {mean_ * factor, coeffs_ * factor};
}

// --- Green's functions and splines -------------------------------------------

double green_eval(int order, double x, int truncation) {
  check_order(order);
  if (truncation < 1) throw std::invalid_argument("green_eval: truncation must be >= 1");
  const double xw = wrap_to_torus(x);
  if (order == 1 && xw == 0.0) throw std::domain_error("green_eval: evaluation at discontinuity");
  // sum over +-k is 2 Re(e^{ikx} / (ik)^M); summed from the tail for accuracy.
  double acc = 0.0;
  for (int k = truncation; k >= 1; --k) {
    const Complex term = Complex(std::cos(k * xw), std::sin(k * xw)) / ik_power(k, order);
    acc += 2.0 * term.real();
  }
  return acc;
}

double green_value(int order, double x) {
  check_order(order);
  const double t = wrap_to_torus(x) / kTwoPi;
  double scale = 1.0;
  for (int j = 1; j <= order; ++j) scale *= kTwoPi / j;
  return -scale * bernoulli_polynomial(order, t);
}

int green_truncation_for(int order, double tol) {
  if (order < 2) throw std::invalid_argument("tail bound requires order >= 2");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  // 2 sum_{k>K} k^{-M} <= 2 K^{1-M} / (M - 1).
  const double k = std::pow(2.0 / ((order - 1) * tol), 1.0 / (order - 1));
  return static_cast<int>(std::ceil(k));
}

namespace {

template <typename GreenFn>
SplineValue spline_eval_with(const PeriodicSpline& s, double x, GreenFn&& green) {
  SplineValue out{s.mean, false};
  for (std::size_t n = 0; n < s.knots.size(); ++n) {
    const double u = wrap_to_torus(x - s.knots[n]);
    if (s.order == 1 && u == 0.0) out.at_knot = true;
    out.value += s.amplitudes[n] * green(u);
  }
  return out;
}

}  // namespace

SplineValue spline_eval(const PeriodicSpline& s, double x) {
  check_order(s.order);
  return spline_eval_with(s, x, [&](double u) { return green_value(s.order, u); });
}

SplineValue spline_eval(const PeriodicSpline& s, double x, int truncation) {
  check_order(s.order);
  return spline_eval_with(s, x, [&](double u) {
    // Right limit at the order-1 jump: the symmetric truncated sum gives the
    // midpoint 0 there, and g(0+) = pi.
    if (s.order == 1 && u == 0.0) return kPi;
    return green_eval(s.order, u, truncation);
  });
}

MeasurementVector measure(const PeriodicSpline& s, int cutoff) {
  MeasurementVector y(cutoff);
  y.mean() = s.mean;
  for (int k = 1; k <= cutoff; ++k) {
    Complex acc = 0.0;
    for (std::size_t n = 0; n < s.knots.size(); ++n)
      acc += s.amplitudes[n] * std::polar(1.0, -k * s.knots[n]);
    y.coeffs()[k - 1] = acc / ik_power(k, s.order);
  }
  return y;
}

MeasurementVector measure_innovation(const ZeroMeanMeasure& w, int order, int cutoff) {
  check_order(order);
  MeasurementVector y(cutoff);
  for (int k = 1; k <= cutoff; ++k) {
    Complex acc = 0.0;
    for (const auto& a : w.atoms()) acc += a.weight * std::polar(1.0, -k * a.location);
    y.coeffs()[k - 1] = kDiracStreamCoeff * acc / ik_power(k, order);
  }
  return y;
}

TrigPolynomial apply_adjoint(const MeasurementVector& z, int order) {
  check_order(order);
  // eta(x) = C sum_k Re(conj(z_k) e^{-ikx} / (ik)^M) = sum_k 2 Re(c_k e^{ikx})
  // with c_k = (C / 2) z_k / (-ik)^M.
  Eigen::VectorXcd c(z.cutoff());
  for (int k = 1; k <= z.cutoff(); ++k)
    c[k - 1] = 0.5 * kDiracStreamCoeff * z.coeffs()[k - 1] / ik_power(-k, order);
  return {0.0, c};
}

double tv_norm(const ZeroMeanMeasure& w) {
  return std::accumulate(w.atoms().begin(), w.atoms().end(), 0.0,
                         [](double acc, const Atom& a) { return acc + std::fabs(a.weight); });
}

PeriodicSpline spline_from_innovation(const ZeroMeanMeasure& w, int order, double mean) {
  check_order(order);
  PeriodicSpline s;
  s.order = order;
  s.mean = mean;
  for (const auto& a : w.atoms()) {
    s.knots.push_back(a.location);
    s.amplitudes.push_back(kDiracStreamCoeff * a.weight);
  }
  return s;
}

ZeroMeanMeasure innovation_of(const PeriodicSpline& s) {
  std::vector<Atom> atoms;
  for (std::size_t n = 0; n < s.knots.size(); ++n)
    atoms.push_back({s.knots[n], s.amplitudes[n] / kDiracStreamCoeff});
  return ZeroMeanMeasure(std::move(atoms));
}

}  // namespace gtv
