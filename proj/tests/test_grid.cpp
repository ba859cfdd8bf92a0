#include <doctest.h>

#include <numbers>
#include <random>

#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

using namespace vfpns;
constexpr double kPi = std::numbers::pi;

namespace {

PhaseDensity random_phase(const SpatialGrid& xg, const VelocityGrid& vg, unsigned seed) {
  PhaseDensity f(xg, vg);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index c = 0; c < f.values.cols(); ++c)
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) f.values(r, c) = dist(rng);
  return f;
}

// Standard Maxwellian in velocity with spatial profile rho.
PhaseDensity gaussian_phase(const SpatialGrid& xg, const VelocityGrid& vg,
                            const Eigen::ArrayXd& rho, double u1 = 0.0, double u2 = 0.0) {
  PhaseDensity f(xg, vg);
  for (int b = 0; b < vg.n_v; ++b)
    for (int a = 0; a < vg.n_v; ++a) {
      const double dx = vg.coord(a) - u1, dy = vg.coord(b) - u2;
      const double gauss = std::exp(-0.5 * (dx * dx + dy * dy)) / (2.0 * kPi);
      f.values.col(vg.index(a, b)) = rho * gauss;
    }
  return f;
}

}  // namespace

TEST_CASE("grid invariants are enforced") {
  CHECK_THROWS_AS(SpatialGrid(6, 1.0), ConfigError);
  CHECK_THROWS_AS(SpatialGrid(24, 1.0), ConfigError);  // not a power of two
  CHECK_THROWS_AS(SpatialGrid(32, -1.0), ConfigError);
  CHECK_THROWS_AS(VelocityGrid(4, 6.0), ConfigError);
  CHECK_THROWS_AS(VelocityGrid(32, 4.0), ConfigError);  // box too small
  SpatialGrid xg(8, 2 * kPi);
  CHECK(xg.h() == doctest::Approx(2 * kPi / 8));
  VelocityGrid vg(8, 6.0);
  // cell-center nodes are symmetric under negation
  CHECK(vg.coord(0) == doctest::Approx(-vg.coord(vg.n_v - 1)));
}

TEST_CASE("integrate_phase: uniform density has unit mass") {
  SpatialGrid xg(16, 2 * kPi);
  VelocityGrid vg(16, 6.0);
  PhaseDensity f(xg, vg);
  f.values.setConstant(1.0 / (xg.L_x * xg.L_x * vg.period() * vg.period()));
  CHECK(integrate_phase(f) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("integrate_phase: Maxwellian second moment equals 2x mass") {
  SpatialGrid xg(8, 2 * kPi);
  VelocityGrid vg(32, 6.0);
  Eigen::ArrayXd rho = Eigen::ArrayXd::Constant(xg.cells(), 1.0 / (xg.L_x * xg.L_x));
  PhaseDensity f = gaussian_phase(xg, vg, rho);
  CHECK(moment_second(f) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("integrate_phase: random density matches extended-precision oracle") {
  SpatialGrid xg(16, 2 * kPi);
  VelocityGrid vg(16, 5.0);
  PhaseDensity f = random_phase(xg, vg, 42u);

  PhaseDensityT<long double> fl(xg, vg);
  fl.values = f.values.cast<long double>();
  const long double oracle = integrate_phase(fl);
  const double got = integrate_phase(f);
  CHECK(std::abs(got - double(oracle)) <= 1e-12 * std::abs(double(oracle)));
}

TEST_CASE("quadrature is linear") {
  SpatialGrid xg(8, 1.0);
  VelocityGrid vg(8, 5.0);
  PhaseDensity f = random_phase(xg, vg, 1u), g = random_phase(xg, vg, 2u);
  PhaseDensity h(xg, vg);
  h.values = 2.5 * f.values - 0.75 * g.values;
  const double lhs = integrate_phase(h);
  const double rhs = 2.5 * integrate_phase(f) - 0.75 * integrate_phase(g);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("moment consistency: density integrates to total mass") {
  SpatialGrid xg(8, 2 * kPi);
  VelocityGrid vg(16, 5.0);
  PhaseDensity f = random_phase(xg, vg, 7u);
  CHECK(integrate(moment_density(f)) == doctest::Approx(integrate_phase(f)).epsilon(1e-12));
}

TEST_CASE("moment_momentum: centered Maxwellian has zero momentum") {
  SpatialGrid xg(8, 2 * kPi);
  VelocityGrid vg(32, 6.0);
  Eigen::ArrayXd rho(xg.cells());
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i)
      rho(xg.index(i, j)) = 1.0 + 0.5 * std::cos(2 * kPi * xg.coord(i) / xg.L_x);
  PhaseDensity f = gaussian_phase(xg, vg, rho);
  VectorField m = moment_momentum(f);
  CHECK(m.x.abs().maxCoeff() <= 1e-10);
  CHECK(m.y.abs().maxCoeff() <= 1e-10);
}

TEST_CASE("bulk_velocity: shifted Maxwellian recovers its drift") {
  SpatialGrid xg(8, 2 * kPi);
  VelocityGrid vg(32, 6.0);
  Eigen::ArrayXd rho = Eigen::ArrayXd::Constant(xg.cells(), 0.3);
  PhaseDensity f = gaussian_phase(xg, vg, rho, 0.3, -0.2);
  auto res = bulk_velocity(f);
  CHECK(res.vacuum_cells.empty());
  CHECK((res.u.x - 0.3).abs().maxCoeff() <= 1e-6);
  CHECK((res.u.y + 0.2).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("bulk_velocity: point mass in velocity returns that node exactly") {
  SpatialGrid xg(8, 1.0);
  VelocityGrid vg(16, 5.0);
  PhaseDensity f(xg, vg);
  const int a = 11, b = 3;
  f.values.col(vg.index(a, b)).setConstant(2.0);
  auto res = bulk_velocity(f);
  CHECK(res.u.x(0) == doctest::Approx(vg.coord(a)).epsilon(1e-12));
  CHECK(res.u.y(0) == doctest::Approx(vg.coord(b)).epsilon(1e-12));
}

TEST_CASE("bulk_velocity: vacuum cells are flagged and zeroed") {
  SpatialGrid xg(8, 1.0);
  VelocityGrid vg(8, 5.0);
  PhaseDensity f(xg, vg);  // all zero
  auto res = bulk_velocity(f);
  CHECK(res.vacuum_cells.size() == size_t(xg.cells()));
  CHECK(res.u.x.abs().maxCoeff() == 0.0);
}

TEST_CASE("periodic distance weight: symmetric, zero at origin, bounded by half-diagonal") {
  SpatialGrid xg(16, 2.0);
  auto w = periodic_distance_weight(xg);
  CHECK(w(0) == 0.0);
  // symmetry under x -> L - x on both axes
  for (int j = 1; j < xg.n_x; ++j)
    for (int i = 1; i < xg.n_x; ++i)
      CHECK(w(xg.index(i, j)) ==
            doctest::Approx(w(xg.index(xg.n_x - i, xg.n_x - j))).epsilon(1e-12));
  CHECK(w.maxCoeff() <= std::sqrt(2.0) * xg.L_x / 2 + 1e-12);
}

TEST_CASE("spectral_grad: single Fourier mode is differentiated exactly") {
  SpatialGrid xg(32, 2 * kPi);
  ScalarField g(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i)
      g(i, j) = std::sin(3 * xg.coord(i)) * std::cos(2 * xg.coord(j));
  VectorField dg = spectral_grad(g);
  double err = 0.0;
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i) {
      const double ex = 3 * std::cos(3 * xg.coord(i)) * std::cos(2 * xg.coord(j));
      const double ey = -2 * std::sin(3 * xg.coord(i)) * std::sin(2 * xg.coord(j));
      err = std::max({err, std::abs(dg.x(xg.index(i, j)) - ex),
                      std::abs(dg.y(xg.index(i, j)) - ey)});
    }
  CHECK(err <= 1e-12 * 3);
}

TEST_CASE("spectral_grad: constants map to zero") {
  SpatialGrid xg(16, 1.0);
  ScalarField g(xg);
  g.values.setConstant(4.2);
  VectorField dg = spectral_grad(g);
  CHECK(dg.x.abs().maxCoeff() <= 1e-12);
  CHECK(dg.y.abs().maxCoeff() <= 1e-12);
}

namespace {
// 5-point periodic finite-difference Laplacian, the independent oracle for spectral_lap.
Eigen::ArrayXd fd_lap(const ScalarField& g) {
  const int n = g.grid.n_x;
  const double h2 = g.grid.h() * g.grid.h();
  Eigen::ArrayXd out(g.grid.cells());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int ip = (i + 1) % n, im = (i + n - 1) % n;
      const int jp = (j + 1) % n, jm = (j + n - 1) % n;
      out(g.grid.index(i, j)) = (g(ip, j) + g(im, j) + g(i, jp) + g(i, jm) - 4.0 * g(i, j)) / h2;
    }
  return out;
}

ScalarField smooth_profile(const SpatialGrid& xg) {
  ScalarField g(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i)
      g(i, j) = std::exp(std::sin(2 * kPi * xg.coord(i) / xg.L_x) +
                         0.5 * std::cos(2 * kPi * xg.coord(j) / xg.L_x));
  return g;
}
}  // namespace

TEST_CASE("spectral_lap agrees with finite-difference oracle at order >= 1.9") {
  std::vector<double> errs;
  for (int n : {16, 32, 64}) {
    SpatialGrid xg(n, 2 * kPi);
    ScalarField g = smooth_profile(xg);
    ScalarField lap = spectral_lap(g);
    errs.push_back((lap.values - fd_lap(g)).abs().maxCoeff());
  }
  const double order1 = std::log2(errs[0] / errs[1]);
  const double order2 = std::log2(errs[1] / errs[2]);
  CHECK(order1 >= 1.9);
  CHECK(order2 >= 1.9);
}

TEST_CASE("div of grad equals lap for arbitrary fields") {
  SpatialGrid xg(16, 2 * kPi);
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  ScalarField g(xg);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values(i) = dist(rng);
  ScalarField lhs = spectral_div(spectral_grad(g));
  ScalarField rhs = spectral_lap(g);
  const double scale = rhs.values.abs().maxCoeff();
  CHECK((lhs.values - rhs.values).abs().maxCoeff() <= 1e-12 * std::max(1.0, scale));
}

TEST_CASE("aliasing error of spectral derivative decreases under refinement") {
  // Non-band-limited profile with geometric (not super-exponential) spectral decay,
  // so errors at n = 16/32/64 sit well above the roundoff floor.
  std::vector<double> errs;
  for (int n : {16, 32, 64}) {
    SpatialGrid xg(n, 2 * kPi);
    ScalarField g(xg);
    double err = 0.0;
    for (int j = 0; j < xg.n_x; ++j)
      for (int i = 0; i < xg.n_x; ++i) g(i, j) = 1.0 / (1.2 - std::sin(xg.coord(i)));
    VectorField dg = spectral_grad(g);
    for (int j = 0; j < xg.n_x; ++j)
      for (int i = 0; i < xg.n_x; ++i) {
        const double den = 1.2 - std::sin(xg.coord(i));
        const double exact = std::cos(xg.coord(i)) / (den * den);
        err = std::max(err, std::abs(dg.x(xg.index(i, j)) - exact));
      }
    errs.push_back(err);
  }
  CHECK(errs[1] < errs[0]);
  CHECK(errs[2] < errs[1]);
}

TEST_CASE("heat semigroup: single mode decays exactly") {
  SpatialGrid xg(32, 2 * kPi);
  auto ops = spectral_ops(xg);
  ScalarField g(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i) g(i, j) = std::cos(3 * xg.coord(i));
  const double t = 0.37;
  Eigen::ArrayXd out = ops->heat(g.values, t);
  CHECK((out - g.values * std::exp(-9.0 * t)).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("dealias keeps low modes and kills high ones") {
  SpatialGrid xg(32, 2 * kPi);
  auto ops = spectral_ops(xg);
  ScalarField low(xg), high(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i) {
      low(i, j) = std::sin(5 * xg.coord(i));
      high(i, j) = std::sin(14 * xg.coord(j));
    }
  CHECK((ops->dealias(low.values) - low.values).abs().maxCoeff() <= 1e-12);
  CHECK(ops->dealias(high.values).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("shift matrix: grid shifts are exact permutations, fractional shifts interpolate") {
  SpatialGrid xg(32, 2 * kPi);
  auto ops = spectral_ops(xg);
  const double h = xg.h();

  Eigen::MatrixXd S = ops->shift_matrix(3 * h);
  // grid-multiple shift of band-limited data is an exact index roll
  Eigen::VectorXd gb(xg.n_x), rolled(xg.n_x);
  for (int i = 0; i < xg.n_x; ++i)
    gb(i) = std::sin(4 * xg.coord(i)) + 0.3 * std::cos(10 * xg.coord(i)) + 0.7;
  for (int i = 0; i < xg.n_x; ++i) rolled(i) = gb((i - 3 + xg.n_x) % xg.n_x);
  CHECK((S * gb - rolled).cwiseAbs().maxCoeff() <= 1e-12);

  const double s = 0.3123;
  Eigen::MatrixXd Sf = ops->shift_matrix(s);
  Eigen::VectorXd g(xg.n_x), expect(xg.n_x);
  for (int i = 0; i < xg.n_x; ++i) {
    g(i) = std::sin(4 * xg.coord(i)) + 0.2 * std::cos(7 * xg.coord(i));
    expect(i) = std::sin(4 * (xg.coord(i) - s)) + 0.2 * std::cos(7 * (xg.coord(i) - s));
  }
  CHECK((Sf * g - expect).cwiseAbs().maxCoeff() <= 1e-12);

  // semigroup: S(a) S(b) = S(a+b)
  Eigen::MatrixXd Sab = ops->shift_matrix(0.7) * ops->shift_matrix(0.42);
  CHECK((Sab - ops->shift_matrix(1.12)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("leray projection: kills gradients, fixes divergence-free fields, idempotent") {
  SpatialGrid xg(32, 2 * kPi);
  auto ops = spectral_ops(xg);

  // pure gradient field
  ScalarField p(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i) p(i, j) = std::sin(2 * xg.coord(i)) * std::sin(xg.coord(j));
  VectorField gp = spectral_grad(p);
  Eigen::ArrayXd v1 = gp.x, v2 = gp.y;
  ops->leray(v1, v2);
  CHECK(v1.abs().maxCoeff() <= 1e-12);
  CHECK(v2.abs().maxCoeff() <= 1e-12);

  // divergence-free (Taylor-Green) field is untouched
  VectorField tg(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i) {
      tg.x(xg.index(i, j)) = std::sin(xg.coord(i)) * std::cos(xg.coord(j));
      tg.y(xg.index(i, j)) = -std::cos(xg.coord(i)) * std::sin(xg.coord(j));
    }
  Eigen::ArrayXd w1 = tg.x, w2 = tg.y;
  ops->leray(w1, w2);
  CHECK((w1 - tg.x).abs().maxCoeff() <= 1e-12);
  CHECK((w2 - tg.y).abs().maxCoeff() <= 1e-12);

  // idempotence on a random field
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::ArrayXd r1(xg.cells()), r2(xg.cells());
  for (Eigen::Index i = 0; i < r1.size(); ++i) {
    r1(i) = dist(rng);
    r2(i) = dist(rng);
  }
  Eigen::ArrayXd q1 = r1, q2 = r2;
  ops->leray(q1, q2);
  Eigen::ArrayXd q1b = q1, q2b = q2;
  ops->leray(q1b, q2b);
  CHECK((q1b - q1).abs().maxCoeff() <= 1e-12);
  CHECK((q2b - q2).abs().maxCoeff() <= 1e-12);
}
