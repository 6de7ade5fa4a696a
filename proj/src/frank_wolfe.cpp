#include "gtv/frank_wolfe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gtv/admm.hpp"

namespace gtv {

namespace {

constexpr double kMergeDistance = 1e-9;
constexpr double kCoalesceDistance = 1e-6;

// Merges atoms closer than kMergeDistance and drops weights below drop_tol.
ZeroMeanMeasure tidy(const ZeroMeanMeasure& w, double drop_tol) {
  std::vector<Atom> merged;
  for (const auto& a : w.atoms()) {
    if (!merged.empty() && torus_distance(merged.back().location, a.location) < kMergeDistance) {
      merged.back().weight += a.weight;
    } else {
      merged.push_back(a);
    }
  }
  if (merged.size() > 1 &&
      torus_distance(merged.front().location, merged.back().location) < kMergeDistance) {
    merged.front().weight += merged.back().weight;
    merged.pop_back();
  }
  return ZeroMeanMeasure(std::move(merged), drop_tol);
}

// Columns nu_L(delta_x) in the real stacking without the (zero) mean slot.
Eigen::MatrixXd atom_matrix(const std::vector<double>& locations, int order, int cutoff) {
  Eigen::MatrixXd a(2 * cutoff, static_cast<Eigen::Index>(locations.size()));
  for (std::size_t n = 0; n < locations.size(); ++n) {
    const MeasurementVector col =
        measure_innovation(ZeroMeanMeasure({{locations[n], 1.0}}), order, cutoff);
    a.col(static_cast<Eigen::Index>(n)) = col.to_real().tail(2 * cutoff);
  }
  return a;
}

// d/dx of the columns of atom_matrix.
Eigen::MatrixXd atom_matrix_derivative(const std::vector<double>& locations, int order, int cutoff) {
  Eigen::MatrixXd a = atom_matrix(locations, order, cutoff);
  for (Eigen::Index n = 0; n < a.cols(); ++n) {
    for (int k = 1; k <= cutoff; ++k) {
      const Complex v(a(2 * (k - 1), n), a(2 * (k - 1) + 1, n));
      const Complex dv = Complex(0.0, -k) * v;
      a(2 * (k - 1), n) = dv.real();
      a(2 * (k - 1) + 1, n) = dv.imag();
    }
  }
  return a;
}

// Merges same-sign atoms closer than dist into their |w|-weighted centroid.
ZeroMeanMeasure coalesce(const ZeroMeanMeasure& w, double dist) {
  std::vector<Atom> out;
  for (const auto& a : w.atoms()) {
    if (!out.empty() && torus_distance(out.back().location, a.location) < dist &&
        (out.back().weight > 0.0) == (a.weight > 0.0)) {
      Atom& b = out.back();
      const double wa = std::fabs(a.weight), wb = std::fabs(b.weight);
      b.location = b.location + wa / (wa + wb) * (a.location - b.location);
      b.weight += a.weight;
    } else {
      out.push_back(a);
    }
  }
  return ZeroMeanMeasure(std::move(out));
}

// Safeguarded Newton for a root of eta' in [lo, hi] where eta'(lo), eta'(hi)
// have opposite signs.
double refine_critical_point(const TrigPolynomial& eta, double lo, double hi) {
  double flo = eta.derivative(lo, 1);
  double fhi = eta.derivative(hi, 1);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (flo > 0.0) {
    std::swap(lo, hi);
    std::swap(flo, fhi);
  }
  // Now eta'(lo) < 0 < eta'(hi) (lo may be the larger endpoint).
  double x = 0.5 * (lo + hi);
  const double scale = std::max(eta.coefficient_bound() * std::max(eta.degree(), 1), 1e-300);
  for (int it = 0; it < 100; ++it) {
    const double f = eta.derivative(x, 1);
    if (std::fabs(f) <= 1e-13 * scale) break;
    if (f < 0.0) lo = x; else hi = x;
    const double fp = eta.derivative(x, 2);
    double next = fp != 0.0 ? x - f / fp : 0.5 * (lo + hi);
    if ((next - lo) * (next - hi) >= 0.0) next = 0.5 * (lo + hi);
    if (std::fabs(next - x) <= 1e-16 * std::max(1.0, std::fabs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

struct Candidate {
  double x;
  double value;
};

// Picks the extreme value; among values equal up to rounding, the smallest
// torus location.
Candidate select_extreme(std::vector<Candidate> cands, bool maximize, double scale) {
  auto better = [maximize](double a, double b) { return maximize ? a > b : a < b; };
  double best = cands.front().value;
  for (const auto& c : cands)
    if (better(c.value, best)) best = c.value;
  const double tie = 1e-12 * std::max(scale, 1e-300);
  Candidate out{kTwoPi, best};
  for (const auto& c : cands) {
    if (std::fabs(c.value - best) <= tie && c.x < out.x) out = c;
  }
  return out;
}

}  // namespace

void FwParams::validate() const {
  if (grid_density < 8) throw std::invalid_argument("grid_density must be >= 8");
  if (!(stop_tol > 0.0)) throw std::invalid_argument("stop_tol must be positive");
}

MeasurementVector zero_mean_data(const MeasurementVector& y) {
  MeasurementVector out = y;
  out.mean() = 0.0;
  return out;
}

double epigraph_bound(const MeasurementVector& y, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  return zero_mean_data(y).squared_norm() / (2.0 * lambda);
}

double lifted_objective(const ZeroMeanMeasure& w, double t, const MeasurementVector& y,
                        double lambda, int order) {
  const MeasurementVector r = zero_mean_data(y) - measure_innovation(w, order, y.cutoff());
  return 0.5 * r.squared_norm() + lambda * t;
}

TrigPolynomial certificate(const FwState& state, const MeasurementVector& y, double lambda,
                           int order) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  const MeasurementVector r = zero_mean_data(y) - measure_innovation(state.w, order, y.cutoff());
  return apply_adjoint(r, order).scaled(1.0 / lambda);
}

Extrema extremize(const TrigPolynomial& eta, int grid_density) {
  if (grid_density < 1) throw std::invalid_argument("grid_density must be positive");
  Extrema out;
  const double scale = eta.coefficient_bound();
  if (eta.degree() == 0 || scale == 0.0) {
    out.degenerate = true;
    out.eta_max = out.eta_min = eta.mean();
    return out;
  }
  const int n = grid_density * std::max(eta.degree(), 1);
  const double h = kTwoPi / n;
  std::vector<double> samples(n);
  for (int i = 0; i < n; ++i) samples[i] = eta(i * h);

  std::vector<Candidate> maxima, minima;
  for (int i = 0; i < n; ++i) {
    const double prev = samples[(i + n - 1) % n];
    const double next = samples[(i + 1) % n];
    const double cur = samples[i];
    const bool is_max = cur >= prev && cur >= next;
    const bool is_min = cur <= prev && cur <= next;
    if (!is_max && !is_min) continue;
    const double lo = (i - 1) * h;
    const double hi = (i + 1) * h;
    double x = i * h;
    if (eta.derivative(lo, 1) * eta.derivative(hi, 1) < 0.0) x = refine_critical_point(eta, lo, hi);
    const double xw = wrap_to_torus(x);
    const double v = eta(xw);
    if (is_max) maxima.push_back({xw, std::max(v, cur)});
    if (is_min) minima.push_back({xw, std::min(v, cur)});
    // Keep the sample itself if refinement wandered to a worse point.
    if (is_max && v < cur) maxima.back().x = wrap_to_torus(i * h);
    if (is_min && v > cur) minima.back().x = wrap_to_torus(i * h);
  }
  const Candidate mx = select_extreme(maxima, true, scale);
  const Candidate mn = select_extreme(minima, false, scale);
  out.x_max = mx.x;
  out.eta_max = mx.value;
  out.x_min = mn.x;
  out.eta_min = mn.value;
  return out;
}

GreedyCandidate greedy_candidate(const Extrema& ext, double bound) {
  if (ext.degenerate || ext.oscillation() < 2.0 || bound == 0.0) return {};
  return {ZeroMeanMeasure({{ext.x_max, 0.5 * bound}, {ext.x_min, -0.5 * bound}}), bound};
}

GreedyCandidate greedy_step(const FwState& state, const MeasurementVector& y, double lambda,
                            int order, int grid_density) {
  return greedy_candidate(extremize(certificate(state, y, lambda, order), grid_density), state.bound);
}

RefitResult fully_corrective_refit(const std::vector<double>& support, const MeasurementVector& y,
                                   double lambda, int order, bool l1) {
  if (support.empty()) throw std::invalid_argument("refit support must be nonempty");
  RefitResult out;
  if (support.size() < 2 || y.cutoff() == 0) return out;
  const Eigen::MatrixXd a = atom_matrix(support, order, y.cutoff());
  const Eigen::VectorXd b = zero_mean_data(y).to_real().tail(2 * y.cutoff());
  ZeroSumLassoResult fit;
  if (l1) {
    AdmmParams p;
    p.max_iters = 20000;
    p.abs_tol = 1e-13;
    p.rel_tol = 1e-11;
    fit = solve_zero_sum_lasso(a, b, lambda, p);
  } else {
    fit = solve_zero_sum_least_squares(a, b);
  }
  out.rank_deficient = fit.rank_deficient;
  std::vector<Atom> atoms;
  const double l1norm = fit.weights.lpNorm<1>();
  for (std::size_t n = 0; n < support.size(); ++n) {
    const double wt = fit.weights[static_cast<Eigen::Index>(n)];
    if (std::fabs(wt) >= 1e-10 * l1norm && wt != 0.0) atoms.push_back({support[n], wt});
  }
  // Restore the exact zero sum after dropping negligible atoms.
  if (!atoms.empty()) {
    double sum = 0.0;
    for (const auto& at : atoms) sum += at.weight;
    for (auto& at : atoms) at.weight -= sum / static_cast<double>(atoms.size());
  }
  out.w = ZeroMeanMeasure(std::move(atoms));
  return out;
}

ZeroMeanMeasure slide(const ZeroMeanMeasure& w, const MeasurementVector& y, double lambda, int order,
                      int max_steps) {
  const Eigen::Index n = static_cast<Eigen::Index>(w.size());
  const int kc = y.cutoff();
  if (n < 2 || kc == 0) return w;
  const Eigen::VectorXd b = zero_mean_data(y).to_real().tail(2 * kc);

  std::vector<double> x(n);
  Eigen::VectorXd wt(n), sign(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = w.atoms()[i].location;
    wt[i] = w.atoms()[i].weight;
    sign[i] = wt[i] > 0.0 ? 1.0 : -1.0;
  }
  auto cost = [&](const std::vector<double>& xs, const Eigen::VectorXd& ws) {
    return 0.5 * (atom_matrix(xs, order, kc) * ws - b).squaredNorm() + lambda * sign.dot(ws);
  };

  double current = cost(x, wt);
  double damping = 1e-3;
  for (int step = 0; step < max_steps; ++step) {
    const Eigen::MatrixXd a = atom_matrix(x, order, kc);
    const Eigen::MatrixXd da = atom_matrix_derivative(x, order, kc);
    const Eigen::VectorXd r = a * wt - b;
    Eigen::MatrixXd jac(2 * kc, 2 * n);
    jac.leftCols(n) = a;
    jac.rightCols(n) = da * wt.asDiagonal();
    Eigen::VectorXd grad = jac.transpose() * r;
    grad.head(n) += lambda * sign;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;

    bool improved = false;
    while (damping < 1e12) {
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
      kkt.topLeftCorner(2 * n, 2 * n) = jtj;
      for (Eigen::Index i = 0; i < 2 * n; ++i)
        kkt(i, i) += damping * std::max(jtj(i, i), 1e-30);
      kkt.block(2 * n, 0, 1, n).setOnes();
      kkt.block(0, 2 * n, n, 1).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n + 1);
      rhs.head(2 * n) = -grad;
      const Eigen::VectorXd delta = kkt.colPivHouseholderQr().solve(rhs);

      Eigen::VectorXd w_new = wt + delta.head(n);
      w_new.array() -= w_new.sum() / static_cast<double>(n);
      std::vector<double> x_new(x);
      bool sign_ok = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        x_new[i] = x[i] + delta[n + i];
        if (w_new[i] * sign[i] <= 0.0) sign_ok = false;
      }
      const double trial = sign_ok ? cost(x_new, w_new) : current;
      if (sign_ok && trial < current) {
        const double decrease = current - trial;
        x = std::move(x_new);
        wt = w_new;
        current = trial;
        damping = std::max(damping / 3.0, 1e-12);
        improved = decrease > 1e-15 * std::fabs(current);
        break;
      }
      damping *= 4.0;
    }
    if (!improved) break;
  }

  std::vector<Atom> atoms;
  for (Eigen::Index i = 0; i < n; ++i) atoms.push_back({x[i], wt[i]});
  return ZeroMeanMeasure(std::move(atoms));
}

FwResult fw_solve(const MeasurementVector& y, double lambda, int order, const FwParams& params) {
  params.validate();
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  const int kc = y.cutoff();
  FwResult result;
  FwState& state = result.state;
  state.bound = kc > 0 ? epigraph_bound(y, lambda) : 0.0;

  if (kc == 0 || state.bound == 0.0) {
    state.converged = true;
    result.spline = spline_from_innovation(state.w, order, y.mean());
    return result;
  }

  const int max_iters = params.max_outer_iters > 0 ? params.max_outer_iters : 10 * (2 * kc + 1);
  const double drop_tol = 1e-16 * state.bound;
  const MeasurementVector y_tilde = zero_mean_data(y);

  for (int k = 0;; ++k) {
    const TrigPolynomial eta = certificate(state, y, lambda, order);
    const Extrema ext = extremize(eta, params.grid_density);
    const double osc = ext.degenerate ? 0.0 : ext.oscillation();
    state.history.push_back({k, lifted_objective(state.w, state.t, y, lambda, order), osc});
    state.iterations = k;
    if (osc <= 2.0 + params.stop_tol) {
      state.converged = true;
      break;
    }
    if (k >= max_iters) break;

    const GreedyCandidate cand = greedy_candidate(ext, state.bound);
    // Linearized gap dT . (cand - current) = -lambda <cand.w - w, eta> + lambda (cand.t - t).
    double pairing = 0.0;
    for (const auto& a : cand.w.atoms()) pairing += a.weight * eta(a.location);
    for (const auto& a : state.w.atoms()) pairing -= a.weight * eta(a.location);
    const double gap = -lambda * pairing + lambda * (cand.t - state.t);
    if (cand.w.empty() && gap >= 0.0) {
      state.converged = true;
      break;
    }

    const ZeroMeanMeasure direction = cand.w + state.w.scaled(-1.0);
    const double dt = cand.t - state.t;
    double gamma = 2.0 / (k + 2.0);
    if (params.step_rule == StepRule::exact_line_search) {
      const MeasurementVector r = y_tilde - measure_innovation(state.w, order, kc);
      const MeasurementVector ad = measure_innovation(direction, order, kc);
      const double curvature = ad.squared_norm();
      const double slope = r.to_real().dot(ad.to_real()) - lambda * dt;
      gamma = curvature > 0.0 ? std::clamp(slope / curvature, 0.0, 1.0) : (slope > 0.0 ? 1.0 : 0.0);
    }
    state.w = tidy(state.w + direction.scaled(gamma), drop_tol);
    state.t = std::max(state.t + gamma * dt, tv_norm(state.w));

    if (params.refit) {
      std::vector<double> support;
      for (const auto& a : state.w.atoms()) support.push_back(a.location);
      for (const auto& a : cand.w.atoms()) support.push_back(a.location);
      std::sort(support.begin(), support.end());
      support.erase(std::unique(support.begin(), support.end(),
                                [](double l, double r) { return torus_distance(l, r) < kMergeDistance; }),
                    support.end());
      if (support.size() > 1 && torus_distance(support.front(), support.back()) < kMergeDistance)
        support.pop_back();
      const double before = lifted_objective(state.w, state.t, y, lambda, order);
      RefitResult refit = fully_corrective_refit(support, y, lambda, order, params.refit_l1);
      const ZeroMeanMeasure w_new = tidy(refit.w, drop_tol);
      const double t_new = tv_norm(w_new);
      // The refit is exact only up to solver tolerance; never accept an increase.
      if (lifted_objective(w_new, t_new, y, lambda, order) <= before) {
        state.w = w_new;
        state.t = t_new;
      }
    }
    if (params.slide) {
      const double before = lifted_objective(state.w, state.t, y, lambda, order);
      ZeroMeanMeasure w_new = slide(state.w, y, lambda, order);
      w_new = tidy(slide(coalesce(w_new, kCoalesceDistance), y, lambda, order), drop_tol);
      const double t_new = tv_norm(w_new);
      if (lifted_objective(w_new, t_new, y, lambda, order) <= before) {
        state.w = w_new;
        state.t = t_new;
      }
    }
  }

  result.spline = spline_from_innovation(state.w, order, y.mean());
  return result;
}

}  // namespace gtv
