#include "gtv/admm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace gtv {

void AdmmParams::validate() const {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  if (over_relaxation < 1.0 || over_relaxation > 1.9)
    throw std::invalid_argument("over_relaxation must lie in [1, 1.9]");
  if (polish_every < 0) throw std::invalid_argument("polish_every must be >= 0");
}

double objective(const SplineCoefficients& c, const MeasurementVector& y, double lambda) {
  if (c.grid.cutoff != y.cutoff()) throw std::invalid_argument("grid cutoff differs from data cutoff");
  if (c.c.size() != c.grid.grid_points)
    throw std::invalid_argument("coefficient vector length differs from grid size");
  const SystemMatrix h(c.grid);
  const double fidelity = 0.5 * (h.apply(c.c) - y).squared_norm();
  return fidelity + lambda * innovation(c).a.lpNorm<1>();
}

Eigen::VectorXd prox_l1(const Eigen::VectorXd& v, double tau) {
  if (tau < 0.0) throw std::invalid_argument("prox_l1: tau must be >= 0");
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::fabs(v[i]) - tau;
    out[i] = mag > 0.0 ? std::copysign(mag, v[i]) : 0.0;
  }
  return out;
}

namespace {

// Solves (Q + rho D^T D) c = rhs for the circulant normal operator.
class NormalSolver {
 public:
  NormalSolver(const SystemMatrix& h, const Eigen::VectorXd& d, bool dense)
      : p_(h.grid().grid_points), dense_(dense) {
    if (dense_) {
      const Eigen::MatrixXd r = h.dense_real();
      q_ = r.transpose() * r;
      Eigen::MatrixXd dm(p_, p_);
      for (int i = 0; i < p_; ++i)
        for (int j = 0; j < p_; ++j) dm(i, j) = d[((i - j) % p_ + p_) % p_];
      dtd_ = dm.transpose() * dm;
    } else {
      mu_ = h.normal_eigenvalues();
      std::vector<Complex> din(d.data(), d.data() + p_), dhat;
      fft_.fwd(dhat, din);
      dtd_eig_.resize(p_);
      for (int j = 0; j < p_; ++j) dtd_eig_[j] = std::norm(dhat[j]);
    }
  }

  void set_rho(double rho) {
    rho_ = rho;
    if (dense_) ldlt_.compute(q_ + rho_ * dtd_);
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) {
    if (dense_) return ldlt_.solve(rhs);
    std::vector<Complex> in(rhs.data(), rhs.data() + p_), spec, out;
    fft_.fwd(spec, in);
    for (int j = 0; j < p_; ++j) spec[j] /= (mu_[j] + rho_ * dtd_eig_[j]);
    fft_.inv(out, spec);
    Eigen::VectorXd c(p_);
    for (int j = 0; j < p_; ++j) c[j] = out[j].real();
    return c;
  }

 private:
  int p_;
  bool dense_;
  double rho_ = 1.0;
  Eigen::FFT<double> fft_;
  Eigen::VectorXd mu_, dtd_eig_;
  Eigen::MatrixXd q_, dtd_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

}  // namespace

Eigen::MatrixXd innovation_matrix(const GridSpec& grid) {
  grid.validate();
  Eigen::MatrixXd a(2 * grid.cutoff, grid.grid_points);
  for (int p = 0; p < grid.grid_points; ++p) {
    const double x = grid.node(p);
    for (int k = 1; k <= grid.cutoff; ++k) {
      const Complex v = kDiracStreamCoeff * std::exp(Complex(0.0, -k * x)) / std::pow(Complex(0.0, k), grid.order);
      a(2 * (k - 1), p) = v.real();
      a(2 * (k - 1) + 1, p) = v.imag();
    }
  }
  return a;
}

SplineCoefficients coefficients_from_innovation(const GridSpec& grid, double mean,
                                                const Eigen::VectorXd& a) {
  grid.validate();
  const int p = grid.grid_points;
  if (a.size() != p) throw std::invalid_argument("innovation length differs from grid size");
  const Eigen::VectorXd d = d_filter(grid.order, p);
  Eigen::FFT<double> fft;
  std::vector<Complex> ain(a.data(), a.data() + p), din(d.data(), d.data() + p), ahat, dhat, out;
  fft.fwd(ahat, ain);
  fft.fwd(dhat, din);
  const double scale = grid.innovation_scale();
  ahat[0] = 0.0;
  for (int j = 1; j < p; ++j) ahat[j] /= scale * dhat[j];
  fft.inv(out, ahat);
  Eigen::VectorXd c(p);
  for (int j = 0; j < p; ++j) c[j] = mean + out[j].real();
  return {grid, c};
}

AdmmResult solve_discrete(const MeasurementVector& y, const GridSpec& grid, double lambda,
                          const AdmmParams& params,
                          const std::optional<SplineCoefficients>& warm_start) {
  grid.validate();
  params.validate();
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (grid.cutoff != y.cutoff()) throw std::invalid_argument("grid cutoff differs from data cutoff");
  const int p = grid.grid_points;

  const SystemMatrix h(grid);
  const Eigen::VectorXd d = d_filter(grid.order, p);
  const double weight = lambda * grid.innovation_scale();
  const bool dense = params.force_dense || !grid.supports_fft_solve();

  NormalSolver normal(h, d, dense);
  double rho = params.rho > 0.0 ? params.rho : weight;
  normal.set_rho(rho);

  const Eigen::VectorXd b = h.apply_adjoint(y);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  if (warm_start) {
    if (warm_start->c.size() != p) throw std::invalid_argument("warm start has the wrong length");
    c = warm_start->c;
  }
  Eigen::VectorXd z = cyclic_convolve(d, c);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(p);

  AdmmResult result;
  result.dense_fallback = !grid.supports_fft_solve();
  const double sqrt_p = std::sqrt(static_cast<double>(p));
  const double alpha = params.over_relaxation;

  const bool try_polish = params.polish_every > 0 && grid.cutoff > 0;
  Eigen::MatrixXd a_mat;
  Eigen::VectorXd a_rhs;
  if (try_polish) {
    a_mat = innovation_matrix(grid);
    a_rhs = y.to_real().tail(2 * grid.cutoff);
  }
  auto attempt_polish = [&]() -> bool {
    const Eigen::VectorXd guess = grid.innovation_scale() * z;
    const auto exact = active_set_zero_sum_lasso(a_mat, a_rhs, lambda, guess);
    if (!exact) return false;
    const SplineCoefficients cp = coefficients_from_innovation(grid, y.mean(), *exact);
    const double current = objective({grid, c}, y, lambda);
    if (objective(cp, y, lambda) > current + 1e-12 * current) return false;
    c = cp.c;
    z = *exact / grid.innovation_scale();
    return true;
  };

  for (int it = 1; it <= params.max_iters; ++it) {
    c = normal.solve(b + rho * cyclic_correlate(d, z - u));
    const Eigen::VectorXd dc = cyclic_convolve(d, c);
    const Eigen::VectorXd dc_relaxed = alpha * dc + (1.0 - alpha) * z;
    const Eigen::VectorXd z_old = z;
    z = prox_l1(dc_relaxed + u, weight / rho);
    u += dc_relaxed - z;

    const double r_norm = (dc - z).norm();
    const double s_norm = rho * cyclic_correlate(d, z - z_old).norm();
    const double eps_pri = sqrt_p * params.abs_tol + params.rel_tol * std::max(dc.norm(), z.norm());
    const double eps_dual = sqrt_p * params.abs_tol + params.rel_tol * rho * cyclic_correlate(d, u).norm();

    result.iterations = it;
    result.primal_residual = r_norm;
    result.dual_residual = s_norm;
    if (r_norm <= eps_pri && s_norm <= eps_dual) {
      result.converged = true;
      break;
    }
    if (try_polish && it % params.polish_every == 0 && attempt_polish()) {
      result.converged = true;
      result.polished = true;
      break;
    }
    if (params.adaptive_rho && it % 10 == 0) {
      if (r_norm > 10.0 * s_norm) {
        rho *= 2.0;
        u /= 2.0;
        normal.set_rho(rho);
      } else if (s_norm > 10.0 * r_norm) {
        rho /= 2.0;
        u *= 2.0;
        normal.set_rho(rho);
      }
    }
  }

  if (try_polish && !result.polished && attempt_polish()) {
    result.converged = true;
    result.polished = true;
  }
  if (result.polished) result.primal_residual = (cyclic_convolve(d, c) - z).norm();
  result.final_rho = rho;
  result.c_star = {grid, c};
  result.sparse_innovation = grid.innovation_scale() * z;
  result.objective = objective(result.c_star, y, lambda);
  return result;
}

MeasurementVector solution_measurement(const AdmmResult& result) {
  return SystemMatrix(result.c_star.grid).apply(result.c_star.c);
}

// --- small dense zero-sum problems -------------------------------------------

namespace {

double lasso_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double lambda,
                       const Eigen::VectorXd& x) {
  return 0.5 * (a * x - b).squaredNorm() + lambda * x.lpNorm<1>();
}

// Solves [G 1; 1^T 0][x; mu] = [rhs; 0] in the least-norm sense.
Eigen::VectorXd zero_sum_kkt_solve(const Eigen::MatrixXd& g, const Eigen::VectorXd& rhs,
                                   bool* rank_deficient) {
  const Eigen::Index n = g.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + 1, n + 1);
  k.topLeftCorner(n, n) = g;
  k.topRightCorner(n, 1).setOnes();
  k.bottomLeftCorner(1, n).setOnes();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n + 1);
  r.head(n) = rhs;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(k);
  cod.setThreshold(1e-13);
  if (rank_deficient != nullptr) *rank_deficient = cod.rank() < n + 1;
  return cod.solve(r);
}

}  // namespace

std::optional<Eigen::VectorXd> active_set_zero_sum_lasso(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                                         double lambda, const Eigen::VectorXd& guess,
                                                         int max_steps) {
  const Eigen::Index n = a.cols();
  if (guess.size() != n) throw std::invalid_argument("guess length differs from column count");
  if (n < 2) return Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Index> support;
  std::vector<double> signs;
  const double gmax = guess.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i)
    if (gmax > 0.0 && std::fabs(guess[i]) > 1e-12 * gmax) {
      support.push_back(i);
      signs.push_back(guess[i] > 0.0 ? 1.0 : -1.0);
    }

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double slack_abs = 1e-12 * std::max(1.0, (a.transpose() * b).cwiseAbs().maxCoeff());

  for (int step = 0; step < max_steps; ++step) {
    if (support.size() < 2) {
      // x = 0 is optimal iff the gradient spread is at most 2 lambda.
      for (auto i : support) x[i] = 0.0;
      const Eigen::VectorXd g = -(a.transpose() * b);
      Eigen::Index imax = 0, imin = 0;
      g.maxCoeff(&imax);
      g.minCoeff(&imin);
      if (g[imax] - g[imin] <= 2.0 * lambda + 2.0 * slack_abs) return x;
      support = {imax, imin};
      signs = {-1.0, 1.0};
      continue;
    }

    const Eigen::Index s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd as(a.rows(), s);
    Eigen::VectorXd sv(s), xs(s);
    for (Eigen::Index j = 0; j < s; ++j) {
      as.col(j) = a.col(support[j]);
      sv[j] = signs[j];
      xs[j] = x[support[j]];
    }
    // Orthonormal basis of the zero-sum subspace: x_S = z_basis * v.
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(s, 1);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(s, s);
    const Eigen::MatrixXd z_basis = q.rightCols(s - 1);
    const Eigen::MatrixXd bz = as * z_basis;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(bz, Eigen::ComputeFullV);
    const Eigen::VectorXd& sig = svd.singularValues();
    const double sig_cut = 1e-10 * (sig.size() > 0 ? sig[0] : 0.0);
    Eigen::Index rank = 0;
    while (rank < sig.size() && sig[rank] > sig_cut) ++rank;
    const Eigen::MatrixXd& v = svd.matrixV();
    const Eigen::MatrixXd v_range = v.leftCols(rank);
    const Eigen::MatrixXd v_null = v.rightCols(s - 1 - rank);

    const Eigen::VectorXd grad_x = as.transpose() * (as * xs - b) + lambda * sv;
    const Eigen::VectorXd grad_v = z_basis.transpose() * grad_x;
    const Eigen::VectorXd null_part = v_null * (v_null.transpose() * grad_v);

    Eigen::VectorXd dir;
    if (null_part.norm() > 1e-10 * lambda * std::sqrt(static_cast<double>(s))) {
      dir = -(z_basis * null_part);
    } else {
      // Newton step on the range: minimizer of the restricted quadratic.
      const Eigen::VectorXd rhs = v_range.transpose() * (bz.transpose() * b - lambda * (z_basis.transpose() * sv));
      Eigen::VectorXd coef(rank);
      for (Eigen::Index k = 0; k < rank; ++k) coef[k] = rhs[k] / (sig[k] * sig[k]);
      const Eigen::VectorXd v_now = z_basis.transpose() * xs;
      const Eigen::VectorXd v_target = v_range * coef + v_null * (v_null.transpose() * v_now);
      dir = z_basis * (v_target - v_now);
    }

    // Exact line search on the restricted quadratic, stopped where the first
    // coordinate reaches zero.
    const double curv = (as * dir).squaredNorm();
    const double slope = grad_x.dot(dir);
    double t = curv > 0.0 ? -slope / curv : std::numeric_limits<double>::infinity();
    if (!(slope < 0.0)) t = 0.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index j = 0; j < s; ++j) {
      if (dir[j] * sv[j] < 0.0) {
        const double tj = -xs[j] / dir[j];
        if (tj <= t) {
          t = tj;
          blocking = j;
        }
      }
    }
    if (!std::isfinite(t)) return std::nullopt;
    const Eigen::VectorXd xs_new = xs + t * dir;
    for (Eigen::Index j = 0; j < s; ++j) x[support[j]] = xs_new[j];
    if (blocking >= 0) {
      std::vector<Eigen::Index> keep;
      std::vector<double> keep_signs;
      for (Eigen::Index j = 0; j < s; ++j) {
        if (j == blocking || xs_new[j] * sv[j] <= 0.0) {
          x[support[j]] = 0.0;
          continue;
        }
        keep.push_back(support[j]);
        keep_signs.push_back(signs[j]);
      }
      support = std::move(keep);
      signs = std::move(keep_signs);
      continue;
    }

    // Stationary on the support: g_S + lambda s + mu 1 = 0 in least squares.
    const Eigen::VectorXd g = a.transpose() * (a * x - b);
    double mu = 0.0;
    double stationarity = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) mu -= (g[support[j]] + lambda * sv[j]) / static_cast<double>(s);
    for (Eigen::Index j = 0; j < s; ++j)
      stationarity = std::max(stationarity, std::fabs(g[support[j]] + lambda * sv[j] + mu));
    if (stationarity > 1e-6 * lambda + slack_abs) continue;

    // Most violated condition |g_j + mu| <= lambda off the support.
    std::vector<bool> in_support(n, false);
    for (auto i : support) in_support[i] = true;
    Eigen::Index worst = -1;
    double worst_excess = 1e-9 * lambda + slack_abs;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_support[i]) continue;
      const double excess = std::fabs(g[i] + mu) - lambda;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = i;
      }
    }
    if (worst < 0) return x;
    support.push_back(worst);
    signs.push_back(g[worst] + mu > 0.0 ? -1.0 : 1.0);
  }
  return std::nullopt;
}

ZeroSumLassoResult solve_zero_sum_lasso(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        double lambda, const AdmmParams& params) {
  params.validate();
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (a.rows() != b.size()) throw std::invalid_argument("dimension mismatch");
  const Eigen::Index n = a.cols();
  ZeroSumLassoResult out;
  out.weights = Eigen::VectorXd::Zero(n);
  if (n < 2) {
    out.objective = 0.5 * b.squaredNorm();
    out.converged = true;
    return out;
  }

  const Eigen::MatrixXd gram = a.transpose() * a;
  const Eigen::VectorXd atb = a.transpose() * b;
  double rho = params.rho > 0.0 ? params.rho : std::max(lambda, 1e-3 * gram.diagonal().mean());

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), z = x, u = x;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (int it = 1; it <= params.max_iters; ++it) {
    x = zero_sum_kkt_solve(gram + rho * Eigen::MatrixXd::Identity(n, n), atb + rho * (z - u), nullptr)
            .head(n);
    const Eigen::VectorXd x_relaxed = params.over_relaxation * x + (1.0 - params.over_relaxation) * z;
    const Eigen::VectorXd z_old = z;
    z = prox_l1(x_relaxed + u, lambda / rho);
    u += x_relaxed - z;
    const double r = (x - z).norm();
    const double s = rho * (z - z_old).norm();
    out.iterations = it;
    if (r <= sqrt_n * params.abs_tol + params.rel_tol * std::max(x.norm(), z.norm()) &&
        s <= sqrt_n * params.abs_tol + params.rel_tol * rho * u.norm()) {
      out.converged = true;
      break;
    }
    if (params.adaptive_rho && it % 10 == 0) {
      if (r > 10.0 * s) {
        rho *= 2.0;
        u /= 2.0;
      } else if (s > 10.0 * r) {
        rho /= 2.0;
        u *= 2.0;
      }
    }
  }

  // z is sparse, x is zero-sum; the feasible candidate is x.
  out.weights = x;
  out.objective = lasso_objective(a, b, lambda, x);
  if (const auto exact = active_set_zero_sum_lasso(a, b, lambda, z)) {
    const double obj = lasso_objective(a, b, lambda, *exact);
    if (obj <= out.objective + 1e-12 * std::fabs(out.objective)) {
      out.weights = *exact;
      out.objective = obj;
      out.polished = true;
      out.converged = true;
    }
  }
  return out;
}

ZeroSumLassoResult solve_zero_sum_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  if (a.rows() != b.size()) throw std::invalid_argument("dimension mismatch");
  const Eigen::Index n = a.cols();
  ZeroSumLassoResult out;
  out.weights = Eigen::VectorXd::Zero(n);
  out.converged = true;
  if (n >= 2) {
    out.weights = zero_sum_kkt_solve(a.transpose() * a, a.transpose() * b, &out.rank_deficient).head(n);
  }
  out.objective = 0.5 * (a * out.weights - b).squaredNorm();
  return out;
}

}  // namespace gtv
