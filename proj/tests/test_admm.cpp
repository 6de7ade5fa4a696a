#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "gtv/admm.hpp"
#include "reference.hpp"

using namespace gtv;
using doctest::Approx;

namespace {

MeasurementVector random_observation(std::mt19937_64& gen, int cutoff, double scale = 1.0) {
  return MeasurementVector::from_real(reference::random_vector(gen, 2 * cutoff + 1, scale));
}

struct Instance {
  GridSpec grid;
  double lambda;
  MeasurementVector y;
};

Instance random_instance(std::mt19937_64& gen) {
  const int orders[] = {1, 2, 3};
  const int grids[] = {8, 16};
  const int cutoffs[] = {2, 3};
  const double lambdas[] = {0.01, 0.1, 1.0};
  Instance in;
  in.grid = {orders[gen() % 3], grids[gen() % 2], cutoffs[gen() % 2]};
  in.lambda = lambdas[gen() % 3];
  in.y = random_observation(gen, in.grid.cutoff);
  return in;
}

double reference_objective(const Instance& in) {
  const Eigen::MatrixXd a = reference::system_matrix_real(in.grid.order, in.grid.grid_points, in.grid.cutoff);
  const Eigen::MatrixXd d = reference::difference_matrix(in.grid.order, in.grid.grid_points);
  const double w = in.lambda * std::pow(in.grid.grid_points / (2.0 * reference::pi), in.grid.order - 1);
  return reference::solve_l1_barrier(a, in.y.to_real(), d, w).objective;
}

// Finds s with |s| <= 1, s = sign(dc) on the support, minimizing ||g + w D^T s||.
// Returns the residual norm and the largest |s| off the support.
std::pair<double, double> kkt_residual(const SplineCoefficients& c, const MeasurementVector& y, double lambda) {
  const GridSpec& g = c.grid;
  const int p = g.grid_points;
  const Eigen::MatrixXd h = reference::system_matrix_real(g.order, p, g.cutoff);
  const Eigen::MatrixXd d = reference::difference_matrix(g.order, p);
  const double w = lambda * std::pow(p / (2.0 * reference::pi), g.order - 1);
  const Eigen::VectorXd grad = h.transpose() * (h * c.c - y.to_real());
  const Eigen::VectorXd dc = d * c.c;
  const double tol = 1e-9 * std::max(dc.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<int> on, off;
  for (int i = 0; i < p; ++i) (std::fabs(dc[i]) > tol ? on : off).push_back(i);
  Eigen::VectorXd target = -grad / w;
  for (int i : on) target -= d.row(i).transpose() * (dc[i] > 0 ? 1.0 : -1.0);
  Eigen::VectorXd s_off = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off.size()));
  if (!off.empty()) {
    Eigen::MatrixXd m(p, static_cast<Eigen::Index>(off.size()));
    for (std::size_t j = 0; j < off.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = d.row(off[j]).transpose();
    s_off = m.completeOrthogonalDecomposition().solve(target);
    if (static_cast<int>(off.size()) == p) {
      // D^T 1 = 0: centre the free multipliers.
      s_off.array() -= 0.5 * (s_off.maxCoeff() + s_off.minCoeff());
    }
    target -= m * s_off;
  }
  return {w * target.norm(), off.empty() ? 0.0 : s_off.cwiseAbs().maxCoeff()};
}

}  // namespace

TEST_CASE("objective examples") {
  const GridSpec g{2, 16, 3};
  CHECK(objective({g, Eigen::VectorXd::Zero(16)}, MeasurementVector(3), 0.5) == 0.0);
  MeasurementVector y(3);
  y.mean() = 1.7;
  CHECK(objective({g, Eigen::VectorXd::Constant(16, 1.7)}, y, 0.5) < 1e-28);
  CHECK_THROWS_AS(objective({g, Eigen::VectorXd::Zero(16)}, MeasurementVector(2), 0.5), std::invalid_argument);
}

TEST_CASE("objective matches a composition of the primitives") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec g{1 + trial % 3, 16, 3};
    const SplineCoefficients c{g, reference::random_vector(gen, 16)};
    const MeasurementVector y = random_observation(gen, 3);
    const double lambda = 0.3;
    const PeriodicSpline s = synthesize(c);
    const double fit = 0.5 * (measure(s, 3) - y).squared_norm();
    const double reg = lambda * tv_norm(innovation_of(s));
    CHECK(objective(c, y, lambda) == Approx(fit + reg).epsilon(1e-12));
  }
}

TEST_CASE("prox_l1") {
  Eigen::VectorXd v(2);
  v << 3, -0.5;
  const Eigen::VectorXd z = prox_l1(v, 1.0);
  CHECK(z[0] == 2.0);
  CHECK(z[1] == 0.0);
  CHECK((prox_l1(v, 1e-14) - v).norm() < 1e-13);

  std::mt19937_64 gen(32);
  const Eigen::VectorXd r = reference::random_vector(gen, 200);
  const double tau = 0.7;
  const Eigen::VectorXd out = prox_l1(r, tau);
  for (int i = 0; i < 200; ++i) {
    const double sub = (r[i] - out[i]) / tau;  // must lie in the subdifferential of |.| at out
    if (out[i] != 0.0) CHECK(sub == Approx(out[i] > 0 ? 1.0 : -1.0));
    else CHECK(std::fabs(sub) <= 1.0 + 1e-15);
  }
}

TEST_CASE("zero data gives the zero solution") {
  const AdmmResult r = solve_discrete(MeasurementVector(3), {2, 32, 3}, 0.1);
  CHECK(r.converged);
  CHECK(r.c_star.c.cwiseAbs().maxCoeff() < 1e-14);
  CHECK(r.objective < 1e-28);
}

TEST_CASE("large lambda gives the constant y0") {
  std::mt19937_64 gen(33);
  MeasurementVector y = random_observation(gen, 3);
  const double big = 1e6 * std::sqrt(y.squared_norm());
  for (int order = 1; order <= 3; ++order) {
    const AdmmResult r = solve_discrete(y, {order, 32, 3}, big);
    CHECK(r.converged);
    CHECK((r.c_star.c.array() - y.mean()).abs().maxCoeff() < 1e-9);
    const MeasurementVector m = solution_measurement(r);
    CHECK(m.mean() == Approx(y.mean()));
    for (int k = 1; k <= 3; ++k) CHECK(std::abs(m[k]) < 1e-9);
  }
}

TEST_CASE("small instances agree with the interior-point reference") {
  std::mt19937_64 gen(34);
  for (int trial = 0; trial < 25; ++trial) {
    const Instance in = random_instance(gen);
    const AdmmResult r = solve_discrete(in.y, in.grid, in.lambda);
    const double ref = reference_objective(in);
    INFO("M=" << in.grid.order << " P=" << in.grid.grid_points << " Kc=" << in.grid.cutoff << " lambda=" << in.lambda);
    CHECK(r.converged);
    CHECK(std::fabs(r.objective - ref) <= 1e-6 * ref);
  }
}

TEST_CASE("plain ADMM without the exact support solve also reaches the optimum") {
  std::mt19937_64 gen(35);
  AdmmParams params;
  params.polish_every = 0;
  params.abs_tol = 1e-12;
  params.rel_tol = 1e-10;
  params.max_iters = 200000;
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(gen);
    const AdmmResult r = solve_discrete(in.y, in.grid, in.lambda, params);
    CHECK_FALSE(r.polished);
    CHECK(std::fabs(r.objective - reference_objective(in)) <= 1e-6 * r.objective);
  }
}

TEST_CASE("KKT certificate at the solution") {
  std::mt19937_64 gen(36);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(gen);
    const AdmmResult r = solve_discrete(in.y, in.grid, in.lambda);
    REQUIRE(r.converged);
    const auto [res, smax] = kkt_residual(r.c_star, in.y, in.lambda);
    CHECK(res <= 1e-5 * in.lambda);
    CHECK(smax <= 1.0 + 1e-6);
  }
}

TEST_CASE("grids below 2 Kc + 1 use the dense solve") {
  std::mt19937_64 gen(37);
  Instance in{{2, 8, 5}, 0.1, random_observation(gen, 5)};
  const AdmmResult r = solve_discrete(in.y, in.grid, in.lambda);
  CHECK(r.dense_fallback);
  CHECK(r.converged);
  CHECK(std::fabs(r.objective - reference_objective(in)) <= 1e-6 * r.objective);
}

TEST_CASE("dense and FFT paths produce the same iterates") {
  std::mt19937_64 gen(38);
  for (int p : {8, 16, 32}) {
    const GridSpec g{2, p, 3};
    const MeasurementVector y = random_observation(gen, 3);
    AdmmParams params;
    params.polish_every = 0;
    for (int iters : {1, 7, 40}) {
      params.max_iters = iters;
      params.force_dense = false;
      const AdmmResult fft = solve_discrete(y, g, 0.05, params);
      params.force_dense = true;
      const AdmmResult dense = solve_discrete(y, g, 0.05, params);
      CHECK(fft.iterations == dense.iterations);
      CHECK((fft.c_star.c - dense.c_star.c).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("solution mean equals y0 and warm starts agree") {
  std::mt19937_64 gen(39);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(gen);
    const AdmmResult cold = solve_discrete(in.y, in.grid, in.lambda);
    const SplineCoefficients start{in.grid, reference::random_vector(gen, in.grid.grid_points, 3.0)};
    const AdmmResult warm = solve_discrete(in.y, in.grid, in.lambda, {}, start);
    REQUIRE(cold.converged);
    REQUIRE(warm.converged);
    CHECK(std::fabs(synthesize(cold.c_star).mean - in.y.mean()) < 1e-6);
    CHECK(std::fabs(synthesize(warm.c_star).mean - in.y.mean()) < 1e-6);
    CHECK(std::sqrt((solution_measurement(cold) - solution_measurement(warm)).squared_norm()) < 1e-6);
    CHECK(std::fabs(cold.objective - warm.objective) <= 1e-8 * cold.objective);
    CHECK(warm.objective <= objective(start, in.y, in.lambda) + 1e-9);
  }
}

TEST_CASE("grid rotation shifts the solution") {
  std::mt19937_64 gen(40);
  const GridSpec g{2, 32, 3};
  const MeasurementVector y = random_observation(gen, 3);
  const int shift = 5;
  MeasurementVector rotated = y;
  for (int k = 1; k <= 3; ++k) rotated.coeffs()[k - 1] *= std::polar(1.0, -k * g.node(shift));
  const AdmmResult a = solve_discrete(y, g, 0.02);
  const AdmmResult b = solve_discrete(rotated, g, 0.02);
  CHECK(b.objective == Approx(a.objective).epsilon(1e-9));
  Eigen::VectorXd shifted(32);
  for (int p = 0; p < 32; ++p) shifted[(p + shift) % 32] = a.c_star.c[p];
  CHECK(objective({g, shifted}, rotated, 0.02) == Approx(b.objective).epsilon(1e-9));
}

TEST_CASE("near-interpolation for feasible noiseless data") {
  const GridSpec g{2, 64, 3};
  Eigen::VectorXd c(64);
  for (int p = 0; p < 64; ++p) c[p] = (p >= 10 && p < 30) ? 1.0 : 0.0;
  const MeasurementVector y = SystemMatrix(g).apply(c);
  const AdmmResult r = solve_discrete(y, g, 1e-7);
  CHECK(r.converged);
  CHECK(std::sqrt((solution_measurement(r) - y).squared_norm()) <= 1e-4 * std::sqrt(y.squared_norm()));
}

TEST_CASE("innovation matrix and coefficient recovery") {
  std::mt19937_64 gen(41);
  const GridSpec g{3, 16, 4};
  const Eigen::VectorXd c = reference::random_vector(gen, 16);
  const InnovationVector a = innovation({g, c});
  const MeasurementVector y = SystemMatrix(g).apply(c);
  const Eigen::VectorXd stacked = innovation_matrix(g) * a.a;
  CHECK((stacked - y.to_real().tail(8)).norm() < 1e-12);
  const SplineCoefficients back = coefficients_from_innovation(g, c.mean(), a.a);
  CHECK((back.c - c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-sum lasso against the reference") {
  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 4 + trial;
    const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(6, n, [&] { return reference::uniform(gen, -1, 1); });
    const Eigen::VectorXd b = reference::random_vector(gen, 6);
    const double lambda = 0.05 * (1 + trial % 4);
    const ZeroSumLassoResult r = solve_zero_sum_lasso(a, b, lambda);
    CHECK(r.converged);
    CHECK(std::fabs(r.weights.sum()) < 1e-10);
    // x = Z y parametrizes the zero-sum subspace; ||x||_1 = ||Z y||_1.
    const Eigen::MatrixXd z = reference::zero_sum_basis(n);
    const double ref = reference::solve_l1_barrier(a * z, b, z, lambda).objective;
    CHECK(std::fabs(r.objective - ref) <= 1e-7 * std::max(ref, 1e-12));
  }
}

TEST_CASE("active-set solve from a poor guess") {
  std::mt19937_64 gen(43);
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(8, 30, [&] { return reference::uniform(gen, -1, 1); });
  const Eigen::VectorXd b = reference::random_vector(gen, 8);
  const auto x = active_set_zero_sum_lasso(a, b, 0.1, Eigen::VectorXd::Zero(30));
  REQUIRE(x.has_value());
  const Eigen::MatrixXd z = reference::zero_sum_basis(30);
  const double ref = reference::solve_l1_barrier(a * z, b, z, 0.1).objective;
  CHECK(0.5 * (a * *x - b).squaredNorm() + 0.1 * x->lpNorm<1>() == Approx(ref).epsilon(1e-8));
  CHECK(std::fabs(x->sum()) < 1e-12);
}

TEST_CASE("zero-sum least squares") {
  std::mt19937_64 gen(44);
  const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(10, 5, [&] { return reference::uniform(gen, -1, 1); });
  const Eigen::VectorXd b = reference::random_vector(gen, 10);
  const ZeroSumLassoResult r = solve_zero_sum_least_squares(a, b);
  const Eigen::MatrixXd z = reference::zero_sum_basis(5);
  const Eigen::VectorXd y = (a * z).colPivHouseholderQr().solve(b);
  CHECK((r.weights - z * y).norm() < 1e-10);
  CHECK_FALSE(r.rank_deficient);

  Eigen::MatrixXd dup(3, 3);
  dup << 1, 1, 0, 2, 2, 1, 0, 0, 1;
  const ZeroSumLassoResult d = solve_zero_sum_least_squares(dup, Eigen::Vector3d(1, 2, 0));
  CHECK(std::fabs(d.weights.sum()) < 1e-12);
  CHECK((dup * d.weights - Eigen::Vector3d(1, 2, 0)).norm() <= (dup * Eigen::Vector3d::Zero() - Eigen::Vector3d(1, 2, 0)).norm());
}

TEST_CASE("parameter validation") {
  AdmmParams p;
  CHECK_NOTHROW(p.validate());
  p.max_iters = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.over_relaxation = 2.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.polish_every = -1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK_THROWS(solve_discrete(MeasurementVector(3), {2, 16, 3}, 0.0));
  CHECK_THROWS(solve_discrete(MeasurementVector(2), {2, 16, 3}, 0.1));
}
