#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "vfpns/entropy.hpp"
#include "vfpns/errors.hpp"
#include "vfpns/quadrature.hpp"

using namespace vfpns;

namespace {

constexpr double kPi = std::numbers::pi;

ScalarField cosine_density(const SpatialGrid& g, double amp = 0.5) {
  // mass-1 density (1 + amp cos x1) / L^2
  ScalarField rho(g);
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i)
      rho.values(g.index(i, j)) = (1.0 + amp * std::cos(g.coord(i))) / (g.L_x * g.L_x);
  return rho;
}

VectorField smooth_velocity(const SpatialGrid& g, double amp) {
  VectorField v(g);
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const auto r = g.index(i, j);
      v.x(r) = amp * std::sin(g.coord(j));
      v.y(r) = amp * std::cos(g.coord(i));
    }
  return v;
}

PhaseDensity random_density(const SpatialGrid& xg, const VelocityGrid& vg, unsigned seed,
                            double target_mass = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  PhaseDensity f(xg, vg);
  for (Eigen::Index c = 0; c < f.values.cols(); ++c)
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) f.values(r, c) = unif(rng);
  f.values *= target_mass / integrate_phase(f);
  return f;
}

long double direct_bregman(const PhaseDensity& f, const PhaseDensity& M) {
  long double acc = 0;
  for (Eigen::Index c = 0; c < f.values.cols(); ++c)
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) {
      const long double fv = f.values(r, c), mv = M.values(r, c);
      if (fv > 1e-30L)
        acc += fv * std::log(fv / mv) - fv + mv;
      else
        acc += mv - fv;
    }
  return acc * static_cast<long double>(f.xg.cell_area() * f.vg.cell_area());
}

}  // namespace

TEST_CASE("maxwellian: uniform density has unit mass and second moment 2") {
  SpatialGrid xg{32, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0 / (xg.L_x * xg.L_x));
  VectorField u(xg);  // zero
  PhaseDensity M = maxwellian(rho, u, vg);

  CHECK(integrate_phase(M) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(moment_second(M) == doctest::Approx(2.0).epsilon(1e-5));
  // moment_density returns rho within truncation
  ScalarField back = moment_density(M);
  CHECK((back.values - rho.values).abs().maxCoeff() < 1e-6);
}

TEST_CASE("maxwellian: zero density gives zero phase density") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  ScalarField rho(xg);
  rho.values.setZero();
  VectorField u(xg);
  PhaseDensity M = maxwellian(rho, u, vg);
  CHECK(M.values.abs().maxCoeff() == 0.0);
}

TEST_CASE("maxwellian: velocity covariance of M_{1,0} is the identity") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0);
  VectorField u(xg);
  PhaseDensity M = maxwellian(rho, u, vg);
  auto P = moment_pressure(M);
  CHECK(P[0].values.maxCoeff() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(P[0].values.minCoeff() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(P[1].values.abs().maxCoeff() < 1e-6);
  CHECK(P[2].values.maxCoeff() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("maxwellian: oversized drift is rejected") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0);
  VectorField u(xg);
  u.x.setConstant(3.5);  // > v_max/2
  CHECK_THROWS_AS(maxwellian(rho, u, vg), ConfigError);
  ScalarField neg(xg);
  neg.values.setConstant(-1.0);
  CHECK_THROWS_AS(maxwellian(neg, VectorField(xg), vg), ConfigError);
}

TEST_CASE("relative entropy: identity case is exactly zero") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  PhaseDensity M = maxwellian(cosine_density(xg), smooth_velocity(xg, 0.4), vg);
  CHECK(relative_entropy(M, M) == 0.0);
}

TEST_CASE("relative entropy: f = 2M matches the closed-form Bregman value") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  PhaseDensity M = maxwellian(cosine_density(xg), smooth_velocity(xg, 0.3), vg);
  PhaseDensity f(xg, vg);
  f.values = 2.0 * M.values;

  const double mass = integrate_phase(M);
  const double closed = (2.0 * std::log(2.0) - 1.0) * mass;
  const double got = relative_entropy(f, M);
  CHECK(got == doctest::Approx(closed).epsilon(1e-8));
  CHECK(got == doctest::Approx(static_cast<double>(direct_bregman(f, M))).epsilon(1e-10));
}

TEST_CASE("relative entropy: drifted vs centered Maxwellian gives the momentum term") {
  SpatialGrid xg{32, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho = cosine_density(xg);
  VectorField u = smooth_velocity(xg, 0.5);
  PhaseDensity Mu = maxwellian(rho, u, vg);
  PhaseDensity M0 = maxwellian(rho, VectorField(xg), vg);

  ScalarField half_rho_u2(xg);
  half_rho_u2.values = 0.5 * rho.values * (u.x.square() + u.y.square());
  CHECK(relative_entropy(Mu, M0) == doctest::Approx(integrate(half_rho_u2)).epsilon(1e-6));
}

TEST_CASE("relative entropy: nonnegative on random states, support mismatch throws") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  for (unsigned seed : {11u, 12u, 13u, 14u}) {
    PhaseDensity f = random_density(xg, vg, seed);
    PhaseDensity M = maxwellian(cosine_density(xg), smooth_velocity(xg, 0.2), vg);
    const double H = relative_entropy(f, M);
    CHECK(H >= -1e-10);
    CHECK(H == doctest::Approx(static_cast<double>(direct_bregman(f, M))).epsilon(1e-10));
  }
  PhaseDensity f = random_density(xg, vg, 7u);
  PhaseDensity M = maxwellian(cosine_density(xg), VectorField(xg), vg);
  M.values(3, 5) = 0.0;
  CHECK_THROWS_AS(relative_entropy(f, M), NumericalFailure);
}

TEST_CASE("entropy decomposition: vanishes on the target Maxwellian") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.5};  // tails below 1e-9 even with the drift
  ScalarField rho = cosine_density(xg);
  VectorField u = smooth_velocity(xg, 0.4);
  PhaseDensity M = maxwellian(rho, u, vg);
  auto parts = entropy_decomposition(M, rho, u);
  CHECK(std::abs(parts.kinetic) < 1e-8);
  CHECK(std::abs(parts.density) < 1e-8);
  CHECK(std::abs(parts.momentum) < 1e-8);
}

TEST_CASE("entropy decomposition: wrong-drift Maxwellian isolates the momentum part") {
  SpatialGrid xg{32, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho = cosine_density(xg);
  VectorField u = smooth_velocity(xg, 0.3);
  VectorField w = smooth_velocity(xg, -0.4);
  PhaseDensity f = maxwellian(rho, w, vg);
  auto parts = entropy_decomposition(f, rho, u);

  ScalarField gap(xg);
  gap.values = 0.5 * rho.values * ((w.x - u.x).square() + (w.y - u.y).square());
  CHECK(std::abs(parts.kinetic) < 1e-6);
  CHECK(std::abs(parts.density) < 1e-6);
  CHECK(parts.momentum == doctest::Approx(integrate(gap)).epsilon(1e-6));
}

TEST_CASE("entropy decomposition: parts sum to the direct value plus mass difference") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  ScalarField rho = cosine_density(xg, 0.4);
  VectorField u = smooth_velocity(xg, 0.25);
  PhaseDensity M = maxwellian(rho, u, vg);
  for (unsigned seed : {21u, 22u, 23u, 24u, 25u}) {
    PhaseDensity f = random_density(xg, vg, seed, 1.0 + 0.1 * seed);
    auto parts = entropy_decomposition(f, rho, u);
    CHECK(parts.kinetic >= -1e-10);
    CHECK(parts.density >= -1e-10);
    CHECK(parts.momentum >= -1e-10);
    const double mass_diff = integrate_phase(f) - integrate_phase(M);
    CHECK(parts.sum() ==
          doctest::Approx(relative_entropy(f, M) + mass_diff).epsilon(1e-8));
  }
}

TEST_CASE("entropy decomposition: the bulk velocity minimizes the relative entropy") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  PhaseDensity f = random_density(xg, vg, 31u);
  ScalarField rho_f = moment_density(f);
  VectorField u_f = bulk_velocity(f).u;
  const double at_min = relative_entropy(f, maxwellian(rho_f, u_f, vg));
  std::mt19937 rng(32);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    VectorField u(xg);
    for (Eigen::Index i = 0; i < u.x.size(); ++i) {
      u.x(i) = u_f.x(i) + unif(rng);
      u.y(i) = u_f.y(i) + unif(rng);
    }
    CHECK(at_min <= relative_entropy(f, maxwellian(rho_f, u, vg)) + 1e-12);
  }
}

TEST_CASE("free energy: closed form for the uniform Maxwellian") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0 / (xg.L_x * xg.L_x));
  PhaseDensity M = maxwellian(rho, VectorField(xg), vg);
  // iint (|xi|^2/2 + log M) M = mass * log(rho/(2 pi)) for constant rho
  const double expected = std::log(1.0 / (2 * kPi * xg.L_x * xg.L_x));
  CHECK(free_energy(M, VectorField(xg)) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("free energy: quadratic scaling in the fluid velocity") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  PhaseDensity f = random_density(xg, vg, 41u);
  VectorField v = smooth_velocity(xg, 0.7);
  VectorField v2 = v;
  v2.x *= 2.0;
  v2.y *= 2.0;
  const double base = free_energy(f, VectorField(xg));
  const double f1 = free_energy(f, v);
  const double f2 = free_energy(f, v2);
  CHECK(f1 - base == doctest::Approx(0.5 * l2_norm_sq(v)).epsilon(1e-12));
  CHECK(f2 - f1 == doctest::Approx(1.5 * l2_norm_sq(v)).epsilon(1e-12));
}

TEST_CASE("dissipation: equilibrium Maxwellian annihilates the total flux") {
  SpatialGrid xg{32, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho = cosine_density(xg);
  VectorField v = smooth_velocity(xg, 1.0);
  const double eps = 0.1;
  VectorField ev = v;
  ev.x *= eps;
  ev.y *= eps;
  PhaseDensity M = maxwellian(rho, ev, vg);
  auto d = dissipation_split(M, v, eps);
  CHECK(std::abs(d.total) < 1e-6);
  CHECK(std::abs(d.kinetic) < 1e-6);
  CHECK(std::abs(d.alignment) < 1e-6);
}

TEST_CASE("dissipation: drifted Maxwellian against v = 0 isolates alignment") {
  SpatialGrid xg{32, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho = cosine_density(xg);
  VectorField w = smooth_velocity(xg, 0.3);
  PhaseDensity f = maxwellian(rho, w, vg);
  auto d = dissipation_split(f, VectorField(xg), 0.7);

  ScalarField rho_w2(xg);
  rho_w2.values = rho.values * (w.x.square() + w.y.square());
  CHECK(std::abs(d.kinetic) < 1e-5);
  CHECK(d.alignment == doctest::Approx(integrate(rho_w2)).epsilon(1e-5));
  CHECK(d.total == doctest::Approx(integrate(rho_w2)).epsilon(1e-5));
}

TEST_CASE("dissipation: split identity holds on random states") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  VectorField v = smooth_velocity(xg, 0.8);
  for (unsigned seed : {51u, 52u, 53u}) {
    PhaseDensity f = random_density(xg, vg, seed);
    for (double eps : {1.0, 0.2}) {
      auto d = dissipation_split(f, v, eps);
      CHECK(d.total >= -1e-10);
      CHECK(d.kinetic >= -1e-10);
      CHECK(d.alignment >= -1e-10);
      CHECK(d.total == doctest::Approx(d.kinetic + d.alignment).epsilon(1e-6));
    }
  }
}

TEST_CASE("ckp: identity pair and perturbed pairs satisfy the bound") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho = cosine_density(xg);
  PhaseDensity M = maxwellian(rho, VectorField(xg), vg);
  M.values /= integrate_phase(M);

  auto same = ckp_check(M, M);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  CHECK(same.holds);

  // f = (1 + 0.3 sin x1) M, renormalized to the mass of M
  PhaseDensity f(xg, vg);
  for (Eigen::Index c = 0; c < f.values.cols(); ++c)
    for (int j = 0; j < xg.n_x; ++j)
      for (int i = 0; i < xg.n_x; ++i) {
        const auto r = xg.index(i, j);
        f.values(r, c) = (1.0 + 0.3 * std::sin(xg.coord(i))) * M.values(r, c);
      }
  f.values *= integrate_phase(M) / integrate_phase(f);
  auto perturbed = ckp_check(f, M);
  CHECK(perturbed.holds);
  CHECK(perturbed.lhs > 0.0);

  PhaseDensity heavy = M;
  heavy.values *= 1.1;
  CHECK_THROWS_AS(ckp_check(heavy, M), ConfigError);
}

TEST_CASE("ckp: randomized equal-mass suite holds throughout") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  for (unsigned seed = 0; seed < 100; ++seed) {
    PhaseDensity f = random_density(xg, vg, 1000 + seed);
    PhaseDensity M = random_density(xg, vg, 2000 + seed);
    CHECK(ckp_check(f, M).holds);
  }
}

TEST_CASE("L log L entropy: constants and extended-precision oracle") {
  SpatialGrid xg{16, 2 * kPi};
  ScalarField one(xg);
  one.values.setConstant(1.0);
  CHECK(llogl_entropy(one) == 0.0);

  ScalarField c(xg);
  c.values.setConstant(0.3);
  CHECK(llogl_entropy(c) ==
        doctest::Approx(0.3 * std::abs(std::log(0.3)) * xg.L_x * xg.L_x).epsilon(1e-12));

  std::mt19937 rng(61);
  std::uniform_real_distribution<double> unif(0.05, 3.0);
  ScalarField r(xg);
  long double acc = 0;
  for (Eigen::Index i = 0; i < r.values.size(); ++i) {
    r.values(i) = unif(rng);
    acc += static_cast<long double>(r.values(i)) *
           std::abs(std::log(static_cast<long double>(r.values(i))));
  }
  acc *= static_cast<long double>(xg.cell_area());
  CHECK(llogl_entropy(r) == doctest::Approx(static_cast<double>(acc)).epsilon(1e-10));
}

TEST_CASE("tm ratio: constant fields match the analytic value") {
  SpatialGrid xg{16, 2 * kPi};
  ScalarField p(xg);
  p.values.setConstant(1.0 / (xg.L_x * xg.L_x));
  ScalarField phi(xg);
  phi.values.setConstant(0.7);
  const double L2 = xg.L_x * xg.L_x;
  const double expected = 1.0 / ((1.0 + std::log(L2)) * L2);
  CHECK(tm_ratio(p, phi) == doctest::Approx(expected).epsilon(1e-10));

  ScalarField zero(xg);
  zero.values.setZero();
  CHECK_THROWS_AS(tm_ratio(p, zero), ConfigError);
  ScalarField not_prob(xg);
  not_prob.values.setConstant(1.0);
  CHECK_THROWS_AS(tm_ratio(not_prob, phi), ConfigError);
}

TEST_CASE("tm ratio: stable under grid refinement for band-limited fields") {
  auto ratio_at = [](int n) {
    SpatialGrid xg{n, 2 * kPi};
    ScalarField p(xg), phi(xg);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const auto r = xg.index(i, j);
        p.values(r) = (1.0 + 0.5 * std::cos(xg.coord(i))) / (xg.L_x * xg.L_x);
        phi.values(r) = std::sin(xg.coord(i)) + 0.3 * std::cos(2.0 * xg.coord(j));
      }
    return tm_ratio(p, phi);
  };
  CHECK(ratio_at(32) == doctest::Approx(ratio_at(64)).epsilon(1e-10));
}

TEST_CASE("diagnostics record: frozen CSV schema and deterministic formatting") {
  DiagnosticsRecord rec;
  rec.t = 0.1;
  rec.entropy_H = 1.0 / 3.0;
  rec.diss_total = 2.5e-12;
  rec.scaled_momentum_l1 = 7.0;

  const std::string header = DiagnosticsRecord::csv_header();
  CHECK(header ==
        "t,entropy_H,free_energy_F,diss_kinetic,diss_alignment,diss_total,l1_dist_f,"
        "l1_dist_rho,l2_dist_v,h1_dist_v,bl_dist_rho,bl_dist_f,moment2,llogl_rho,"
        "scaled_momentum_l1");
  const std::string row = rec.csv_row();
  CHECK(row == rec.csv_row());  // repeatable
  CHECK(std::count(row.begin(), row.end(), ',') == 14);
  CHECK(row.substr(0, 4) == "0.1,");

  auto j = rec.to_json();
  CHECK(j["t"] == 0.1);
  CHECK(j["scaled_momentum_l1"] == 7.0);
  CHECK(j.size() == 15);
}
