#include "gtv/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace gtv {

double GridSpec::innovation_scale() const {
  return std::pow(grid_points / kTwoPi, order - 1);
}

void GridSpec::validate() const {
  if (order < 1) throw std::invalid_argument("grid order must be >= 1");
  if (grid_points < 1) throw std::invalid_argument("grid must have at least one point");
  if (cutoff < 0) throw std::invalid_argument("cutoff must be >= 0");
}

Complex bspline_fourier_coeff(const GridSpec& grid, long k) {
  const int p = grid.grid_points;
  if (k == 0) return {1.0 / p, 0.0};
  if (k % p == 0) return {0.0, 0.0};
  const double omega_h = kTwoPi * static_cast<double>(k) / p;
  const Complex ratio = (1.0 - std::polar(1.0, -omega_h)) /
                        Complex(0.0, kTwoPi * static_cast<double>(k));
  return std::pow(static_cast<double>(p), grid.order - 1) * std::pow(ratio, grid.order);
}

Eigen::VectorXd d_filter(int order, int grid_points) {
  if (order < 1) throw std::invalid_argument("filter order must be >= 1");
  if (grid_points < 1) throw std::invalid_argument("grid must have at least one point");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(grid_points);
  double binom = 1.0;
  for (int m = 0; m <= order; ++m) {
    d[m % grid_points] += (m % 2 == 0 ? 1.0 : -1.0) * binom;
    binom = binom * (order - m) / (m + 1);
  }
  return d;
}

Eigen::VectorXd cyclic_convolve(const Eigen::VectorXd& d, const Eigen::VectorXd& c) {
  const Eigen::Index n = c.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    if (d[m] == 0.0) continue;
    for (Eigen::Index p = 0; p < n; ++p) out[(p + m) % n] += d[m] * c[p];
  }
  return out;
}

Eigen::VectorXd cyclic_correlate(const Eigen::VectorXd& d, const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    if (d[m] == 0.0) continue;
    for (Eigen::Index p = 0; p < n; ++p) out[p] += d[m] * v[(p + m) % n];
  }
  return out;
}

InnovationVector innovation(const SplineCoefficients& c) {
  c.grid.validate();
  if (c.c.size() != c.grid.grid_points)
    throw std::invalid_argument("coefficient vector length differs from grid size");
  const Eigen::VectorXd d = d_filter(c.grid.order, c.grid.grid_points);
  return {c.grid, c.grid.innovation_scale() * cyclic_convolve(d, c.c)};
}

PeriodicSpline synthesize(const SplineCoefficients& c, double amp_tol) {
  const InnovationVector inn = innovation(c);
  PeriodicSpline s;
  s.order = c.grid.order;
  s.mean = c.c.mean();
  const double amax = inn.a.cwiseAbs().maxCoeff();
  if (amax == 0.0) return s;
  double kept_sum = 0.0;
  for (int p = 0; p < c.grid.grid_points; ++p) {
    const double a = inn.a[p];
    if (a == 0.0 || std::fabs(a) <= amp_tol * amax) continue;
    s.knots.push_back(c.grid.node(p));
    s.amplitudes.push_back(kDiracStreamCoeff * a);
    kept_sum += s.amplitudes.back();
  }
  if (!s.amplitudes.empty()) {
    const double shift = kept_sum / static_cast<double>(s.amplitudes.size());
    for (auto& a : s.amplitudes) a -= shift;
  }
  return s;
}

double bspline_eval(const GridSpec& grid, double x) {
  SplineCoefficients impulse{grid, Eigen::VectorXd::Zero(grid.grid_points)};
  impulse.c[0] = 1.0;
  return spline_eval(synthesize(impulse), x).value;
}

double bspline_eval_fourier(const GridSpec& grid, double x, long truncation) {
  double value = 1.0 / grid.grid_points;
  for (long k = truncation; k >= 1; --k) {
    if (k % grid.grid_points == 0) continue;
    value += 2.0 * (bspline_fourier_coeff(grid, k) * std::polar(1.0, k * x)).real();
  }
  return value;
}

// --- SystemMatrix --------------------------------------------------------------

SystemMatrix::SystemMatrix(const GridSpec& grid) : grid_(grid) {
  grid_.validate();
  beta_hat_.resize(grid_.cutoff + 1);
  for (int k = 0; k <= grid_.cutoff; ++k) beta_hat_[k] = bspline_fourier_coeff(grid_, k);
}

MeasurementVector SystemMatrix::apply(const Eigen::VectorXd& c) const {
  const int p = grid_.grid_points;
  if (c.size() != p) throw std::invalid_argument("coefficient vector length differs from grid size");
  Eigen::FFT<double> fft;
  std::vector<Complex> in(c.data(), c.data() + p);
  std::vector<Complex> spectrum;
  fft.fwd(spectrum, in);
  MeasurementVector y(grid_.cutoff);
  y.mean() = (beta_hat_[0] * spectrum[0]).real();
  for (int k = 1; k <= grid_.cutoff; ++k) y.coeffs()[k - 1] = beta_hat_[k] * spectrum[k % p];
  return y;
}

MeasurementVector SystemMatrix::apply_dense(const Eigen::VectorXd& c) const {
  const Eigen::VectorXcd hc = dense() * c.cast<Complex>();
  return {hc[0].real(), hc.tail(grid_.cutoff)};
}

Eigen::VectorXd SystemMatrix::apply_adjoint(const MeasurementVector& z) const {
  const int p = grid_.grid_points;
  if (z.cutoff() != grid_.cutoff) throw std::invalid_argument("cutoff mismatch");
  // Re(sum_k conj(beta_k) z_k e^{ik l h}) folded onto DFT bins k mod P.
  std::vector<Complex> spectrum(p, Complex(0.0, 0.0));
  spectrum[0] += std::conj(beta_hat_[0]) * z.mean();
  for (int k = 1; k <= grid_.cutoff; ++k)
    spectrum[k % p] += std::conj(beta_hat_[k]) * z.coeffs()[k - 1];
  Eigen::FFT<double> fft;
  std::vector<Complex> out;
  fft.inv(out, spectrum);
  Eigen::VectorXd g(p);
  for (int l = 0; l < p; ++l) g[l] = p * out[l].real();
  return g;
}

Eigen::MatrixXcd SystemMatrix::dense() const {
  const int p = grid_.grid_points;
  Eigen::MatrixXcd h(grid_.cutoff + 1, p);
  for (int k = 0; k <= grid_.cutoff; ++k)
    for (int l = 0; l < p; ++l)
      h(k, l) = std::polar(1.0, -kTwoPi * static_cast<double>((static_cast<long>(k) * l) % p) / p) *
                beta_hat_[k];
  return h;
}

Eigen::MatrixXd SystemMatrix::dense_real() const {
  const Eigen::MatrixXcd h = dense();
  Eigen::MatrixXd r(2 * grid_.cutoff + 1, grid_.grid_points);
  r.row(0) = h.row(0).real();
  for (int k = 1; k <= grid_.cutoff; ++k) {
    r.row(2 * k - 1) = h.row(k).real();
    r.row(2 * k) = h.row(k).imag();
  }
  return r;
}

Eigen::VectorXd SystemMatrix::normal_eigenvalues() const {
  if (!grid_.supports_fft_solve())
    throw std::logic_error("normal operator is not diagonalized by the DFT when P < 2 K_c + 1");
  const int p = grid_.grid_points;
  // c^T Q c = |b_0|^2 |c^_0|^2 + sum_{k=1}^{Kc} |b_k|^2 |c^_k|^2 and
  // c^T Q c = (1/P) sum_j mu_j |c^_j|^2 for a circulant Q.
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(p);
  mu[0] = p * std::norm(beta_hat_[0]);
  for (int k = 1; k <= grid_.cutoff; ++k) {
    mu[k] += 0.5 * p * std::norm(beta_hat_[k]);
    mu[p - k] += 0.5 * p * std::norm(beta_hat_[k]);
  }
  return mu;
}

// --- knots -------------------------------------------------------------------

std::vector<Knot> extract_knots(const InnovationVector& a, double amp_tol) {
  if (amp_tol < 0.0) throw std::invalid_argument("amp_tol must be >= 0");
  std::vector<Knot> knots;
  if (a.a.size() == 0) return knots;
  const double amax = a.a.cwiseAbs().maxCoeff();
  if (amax == 0.0) return knots;
  for (int p = 0; p < a.a.size(); ++p)
    if (std::fabs(a.a[p]) > amp_tol * amax) knots.push_back({a.grid.node(p), a.a[p]});
  return knots;
}

std::vector<KnotCluster> merge_knots(std::vector<Knot> knots, double dist_tol, double amp_tol) {
  if (dist_tol < 0.0) throw std::invalid_argument("dist_tol must be >= 0");
  std::vector<KnotCluster> clusters;
  if (knots.empty()) return clusters;
  for (auto& k : knots) k.location = wrap_to_torus(k.location);
  std::sort(knots.begin(), knots.end(),
            [](const Knot& l, const Knot& r) { return l.location < r.location; });
  const std::size_t n = knots.size();

  // Start the sweep after the widest gap so no cluster straddles the seam.
  std::size_t start = 0;
  if (n > 1) {
    double widest = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = i + 1 < n ? knots[i + 1].location : knots[0].location + kTwoPi;
      if (next - knots[i].location > widest) {
        widest = next - knots[i].location;
        start = (i + 1) % n;
      }
    }
  }

  double max_weight = 0.0;
  for (const auto& k : knots) max_weight = std::max(max_weight, std::fabs(k.weight));

  std::vector<std::vector<std::pair<double, double>>> groups;  // (unwrapped location, weight)
  double prev = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t i = (start + j) % n;
    double loc = knots[i].location;
    if (j > 0) {
      while (loc < prev) loc += kTwoPi;
    }
    if (j == 0 || loc - prev > dist_tol) groups.emplace_back();
    groups.back().emplace_back(loc, knots[i].weight);
    prev = loc;
  }

  for (const auto& g : groups) {
    double net = 0.0, mass = 0.0, moment = 0.0;
    for (const auto& [loc, w] : g) {
      net += w;
      mass += std::fabs(w);
      moment += std::fabs(w) * loc;
    }
    if (std::fabs(net) <= amp_tol * max_weight) continue;
    clusters.push_back({wrap_to_torus(moment / mass), net, static_cast<int>(g.size())});
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const KnotCluster& l, const KnotCluster& r) { return l.location < r.location; });
  return clusters;
}

}  // namespace gtv
