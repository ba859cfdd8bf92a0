#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <doctest.h>

#include "vfpns/entropy.hpp"
#include "vfpns/errors.hpp"
#include "vfpns/fluid.hpp"
#include "vfpns/kinetic.hpp"
#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

using namespace vfpns;

namespace {

constexpr double kPi = std::numbers::pi;

VectorField taylor_green(const SpatialGrid& g, double amp) {
  VectorField v(g);
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const auto r = g.index(i, j);
      v.x(r) = amp * std::sin(g.coord(i)) * std::cos(g.coord(j));
      v.y(r) = -amp * std::cos(g.coord(i)) * std::sin(g.coord(j));
    }
  return v;
}

ScalarField cosine_density(const SpatialGrid& g, double amp = 0.5) {
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

PhaseDensity iso_gaussian(const SpatialGrid& xg, const VelocityGrid& vg, const ScalarField& rho,
                          double s2) {
  PhaseDensity f(xg, vg);
  for (int b = 0; b < vg.n_v; ++b)
    for (int a = 0; a < vg.n_v; ++a) {
      const double w2 = vg.coord(a) * vg.coord(a) + vg.coord(b) * vg.coord(b);
      f.values.col(vg.index(a, b)) = rho.values * std::exp(-w2 / (2 * s2)) / (2 * kPi * s2);
    }
  return f;
}

// divergence-free field from a mixed-mode streamfunction, nontrivial advection
VectorField vortex_field(const SpatialGrid& g, double amp) {
  ScalarField psi(g);
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const double x1 = g.coord(i), x2 = g.coord(j);
      psi.values(g.index(i, j)) = amp * (std::sin(x1) * std::sin(x2) + 0.3 * std::cos(2 * x1) * std::sin(x2));
    }
  VectorField grad_psi = spectral_grad(psi);
  VectorField v(g);
  v.x = grad_psi.y;
  v.y = -grad_psi.x;
  return v;
}

double sup_vec_diff(const VectorField& a, const VectorField& b) {
  return std::max((a.x - b.x).abs().maxCoeff(), (a.y - b.y).abs().maxCoeff());
}

double grad_energy(const VectorField& v) {
  const auto ops = spectral_ops(v.grid);
  return ops->h1_seminorm_sq(v.x) + ops->h1_seminorm_sq(v.y);
}

}  // namespace

TEST_CASE("leray: divergence-free fields pass through, gradients vanish") {
  SpatialGrid g{16, 2 * kPi};
  VectorField tg = taylor_green(g, 1.0);
  CHECK(sup_vec_diff(leray_project(tg), tg) < 1e-12);

  // w = grad(sin x1 cos x2)
  VectorField w(g);
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const auto r = g.index(i, j);
      w.x(r) = std::cos(g.coord(i)) * std::cos(g.coord(j));
      w.y(r) = -std::sin(g.coord(i)) * std::sin(g.coord(j));
    }
  VectorField pw = leray_project(w);
  CHECK(pw.x.abs().maxCoeff() < 1e-12);
  CHECK(pw.y.abs().maxCoeff() < 1e-12);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  VectorField r(g);
  for (Eigen::Index k = 0; k < r.x.size(); ++k) {
    r.x(k) = unif(rng);
    r.y(k) = unif(rng);
  }
  VectorField p1 = leray_project(r);
  VectorField p2 = leray_project(p1);
  CHECK(sup_vec_diff(p1, p2) < 1e-12);
  CHECK(spectral_div(p1).values.abs().maxCoeff() < 1e-12);

  VectorField c(g);
  c.x.setConstant(0.7);
  c.y.setConstant(-0.2);
  CHECK(sup_vec_diff(leray_project(c), c) < 1e-14);  // mean mode untouched
}

TEST_CASE("drag force: equilibrium vanishes, Gaussian moments, algebraic case") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho = cosine_density(xg);
  VectorField v = smooth_velocity(xg, 0.8);
  const double eps = 0.25;

  VectorField ev = v;
  ev.x *= eps;
  ev.y *= eps;
  VectorField zero_force = drag_force(maxwellian(rho, ev, vg), v, eps);
  CHECK(zero_force.x.abs().maxCoeff() < 1e-6);
  CHECK(zero_force.y.abs().maxCoeff() < 1e-6);

  VectorField w = smooth_velocity(xg, 0.5);
  VectorField f1 = drag_force(maxwellian(rho, w, vg), VectorField(xg), eps);
  CHECK((f1.x - rho.values * w.x / eps).abs().maxCoeff() < 1e-6);
  CHECK((f1.y - rho.values * w.y / eps).abs().maxCoeff() < 1e-6);

  // centered even data has exactly zero momentum on the symmetric grid
  PhaseDensity g0 = iso_gaussian(xg, vg, rho, 1.3);
  const ScalarField rho_g = moment_density(g0);
  VectorField f2 = drag_force(g0, v, eps);
  CHECK((f2.x + rho_g.values * v.x).abs().maxCoeff() < 1e-13);
  CHECK((f2.y + rho_g.values * v.y).abs().maxCoeff() < 1e-13);
}

TEST_CASE("ns: Taylor-Green vortex decays exactly") {
  SpatialGrid g{32, 2 * kPi};
  FluidState s{taylor_green(g, 1.0)};
  VectorField zero(g);
  const double dt = 1e-3;
  for (int k = 0; k < 500; ++k) s = ns_step(s, dt, zero);
  VectorField want = taylor_green(g, std::exp(-2.0 * 0.5));
  VectorField diff(g);
  diff.x = s.v.x - want.x;
  diff.y = s.v.y - want.y;
  CHECK(std::sqrt(l2_norm_sq(diff)) < 1e-6);
  CHECK(spectral_div(s.v).values.abs().maxCoeff() < 1e-10);
  // the advection term of this flow is a pure gradient, so pressure carries it
  CHECK(s.p.values.abs().maxCoeff() > 1e-3);
}

TEST_CASE("ns: Stokes response to a constant divergence-free force") {
  SpatialGrid g{16, 2 * kPi};
  VectorField force(g);
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) force.x(g.index(i, j)) = std::sin(g.coord(j));
  FluidState s{VectorField(g)};
  const double dt = 1e-4, T = 0.1;
  const long n = std::lround(T / dt);
  for (long k = 0; k < n; ++k) s = ns_step(s, dt, force);
  double worst = 0;
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const auto r = g.index(i, j);
      const double want = (1.0 - std::exp(-T)) * std::sin(g.coord(j));
      worst = std::max({worst, std::abs(s.v.x(r) - want), std::abs(s.v.y(r))});
    }
  CHECK(worst < 1e-8);
}

TEST_CASE("ns: zero state with zero force stays zero") {
  SpatialGrid g{16, 2 * kPi};
  FluidState s{VectorField(g)};
  VectorField zero(g);
  for (int k = 0; k < 10; ++k) s = ns_step(s, 0.01, zero);
  CHECK(s.v.x.abs().maxCoeff() == 0.0);
  CHECK(s.v.y.abs().maxCoeff() == 0.0);
}

TEST_CASE("ns: discrete energy law holds to second order") {
  SpatialGrid g{16, 2 * kPi};
  FluidState s0{vortex_field(g, 1.0)};
  VectorField zero(g);
  auto residual = [&](double dt) {
    FluidState s1 = ns_step(s0, dt, zero);
    const double e0 = 0.5 * l2_norm_sq(s0.v), e1 = 0.5 * l2_norm_sq(s1.v);
    return (e1 - e0) / dt + 0.5 * (grad_energy(s0.v) + grad_energy(s1.v));
  };
  const double r1 = std::abs(residual(4e-3));
  const double r2 = std::abs(residual(2e-3));
  const double r4 = std::abs(residual(1e-3));
  CHECK(r1 / r2 > 3.4);
  CHECK(r2 / r4 > 3.4);
}

TEST_CASE("ns: self-convergence at second order on a mixed-mode flow") {
  SpatialGrid g{16, 2 * kPi};
  FluidState s0{vortex_field(g, 1.0)};
  VectorField zero(g);
  const double T = 0.1;
  auto run = [&](double dt) {
    FluidState s = s0;
    const long n = std::lround(T / dt);
    for (long k = 0; k < n; ++k) s = ns_step(s, dt, zero);
    return s.v;
  };
  VectorField ref = run(T / 512);
  std::vector<double> errs;
  for (double dt : {T / 16, T / 32, T / 64}) {
    VectorField v = run(dt);
    VectorField d(g);
    d.x = v.x - ref.x;
    d.y = v.y - ref.y;
    errs.push_back(std::sqrt(l2_norm_sq(d)));
  }
  CHECK(errs[0] / errs[1] > 3.6);
  CHECK(errs[1] / errs[2] > 3.6);
  CHECK(spectral_div(ref).values.abs().maxCoeff() < 1e-10);
}

TEST_CASE("ns: CFL guard rejects oversized steps") {
  SpatialGrid g{16, 2 * kPi};
  FluidState s{taylor_green(g, 2.0)};
  VectorField zero(g);
  CHECK_THROWS_AS(ns_step(s, 1.0, zero), ConfigError);
}

TEST_CASE("coupled: global equilibrium is stationary") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0 / (xg.L_x * xg.L_x));
  PhaseDensity f0 = maxwellian(rho, VectorField(xg), vg);
  FluidState v0{VectorField(xg)};
  CoupledPlan plan;
  plan.dt = 0.02;
  auto traj = run_coupled(f0, v0, 0.3, 0.2, plan);
  REQUIRE(traj.size() == 11);
  const auto& last = traj.back();
  CHECK(last.fluid.v.x.abs().maxCoeff() < 1e-12);
  CHECK(last.fluid.v.y.abs().maxCoeff() < 1e-12);
  CHECK((last.kinetic.f.values - f0.values).abs().maxCoeff() < 1e-10);
  CHECK(last.diag.entropy_H < 1e-10);
  CHECK(last.diag.diss_total < 1e-6);  // velocity-gradient truncation floor ~ rho * 1e-6
}

TEST_CASE("coupled: velocity tracks the pure fluid decay at order eps") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0 / (xg.L_x * xg.L_x));
  const double T = 0.25;

  auto sup_track_err = [&](double eps, double dt) {
    VectorField v0 = taylor_green(xg, 1.0);
    VectorField ev = v0;
    ev.x *= eps;
    ev.y *= eps;
    PhaseDensity f0 = maxwellian(rho, ev, vg);
    f0.values /= integrate_phase(f0);
    CoupledPlan plan;
    plan.dt = dt;
    auto traj = run_coupled(f0, FluidState{v0}, eps, T, plan);
    double worst = 0;
    for (const auto& s : traj) {
      VectorField want = taylor_green(xg, std::exp(-2.0 * s.fluid.t));
      VectorField d(xg);
      d.x = s.fluid.v.x - want.x;
      d.y = s.fluid.v.y - want.y;
      worst = std::max(worst, std::sqrt(l2_norm_sq(d)));
    }
    return worst;
  };

  const double e4 = sup_track_err(0.4, 0.025);
  const double e2 = sup_track_err(0.2, 0.0125);
  CHECK(e4 < 0.5 * 0.4);
  CHECK(e2 < 0.5 * 0.2);
  CHECK(e2 < 0.75 * e4);
}

TEST_CASE("coupled: total momentum drift shrinks at second order in dt") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  const double eps = 0.3, T = 0.08;
  ScalarField rho = cosine_density(xg, 0.4);
  VectorField w = smooth_velocity(xg, 0.5);
  VectorField v0 = taylor_green(xg, 0.6);

  auto momentum_drift = [&](double dt) {
    PhaseDensity f0 = maxwellian(rho, w, vg);
    f0.values /= integrate_phase(f0);
    CoupledPlan plan;
    plan.dt = dt;
    plan.record_stride = 1000000;  // endpoints only
    auto traj = run_coupled(f0, FluidState{v0}, eps, T, plan);
    auto total = [&](const CoupledSample& s) {
      const VectorField m = moment_momentum(s.kinetic.f);
      const double qx = eps * m.x.sum() * xg.cell_area() + s.fluid.v.x.sum() * xg.cell_area();
      const double qy = eps * m.y.sum() * xg.cell_area() + s.fluid.v.y.sum() * xg.cell_area();
      return std::array<double, 2>{qx, qy};
    };
    auto q0 = total(traj.front()), q1 = total(traj.back());
    return std::hypot(q1[0] - q0[0], q1[1] - q0[1]);
  };

  const double d1 = momentum_drift(T / 8);
  const double d2 = momentum_drift(T / 16);
  CHECK(d1 / d2 > 3.4);
}

TEST_CASE("coupled: energy inequality and ledger over a misaligned start") {
  SpatialGrid xg{16, 2 * kPi};
  VelocityGrid vg{32, 6.0};
  const double eps = 0.2, T = 0.1;
  ScalarField rho = cosine_density(xg, 0.5);
  VectorField w = smooth_velocity(xg, 0.6);
  PhaseDensity f0 = maxwellian(rho, w, vg);
  f0.values /= integrate_phase(f0);
  FluidState v0{taylor_green(xg, 0.5)};
  const double F0 = free_energy(f0, v0.v);

  CoupledPlan plan;
  plan.dt = 0.0125;
  plan.record_stride = 2;
  auto traj = run_coupled(f0, v0, eps, T, plan);  // throws if the inequality fails
  REQUIRE(traj.size() == 5);
  for (size_t k = 0; k < traj.size(); ++k) {
    const auto& rec = traj[k].diag;
    CHECK(rec.entropy_H >= -1e-10);
    CHECK(rec.diss_total == doctest::Approx(rec.diss_kinetic + rec.diss_alignment).epsilon(1e-8));
    CHECK(rec.free_energy_F <= F0 + 1e-4);
    if (k > 0) {
      CHECK(traj[k].kinetic.ou_align_work >= traj[k - 1].kinetic.ou_align_work);
      CHECK(rec.free_energy_F <= traj[k - 1].diag.free_energy_F + 1e-6);
    }
  }
  CHECK(traj.back().kinetic.ou_align_work > 1e-4);  // the misalignment dissipated work
  CHECK(traj.back().diag.scaled_momentum_l1 > 0.0);
  CHECK(traj.back().diag.moment2 > 0.0);
}

TEST_CASE("coupled: argument validation") {
  SpatialGrid xg{8, 2 * kPi};
  VelocityGrid vg{16, 6.0};
  ScalarField rho(xg);
  rho.values.setConstant(1.0 / (xg.L_x * xg.L_x));
  PhaseDensity f0 = maxwellian(rho, VectorField(xg), vg);
  CoupledPlan plan;
  plan.dt = 0.02;

  PhaseDensity heavy = f0;
  heavy.values *= 2.0;
  CHECK_THROWS_AS(run_coupled(heavy, FluidState{VectorField(xg)}, 0.3, 0.2, plan), ConfigError);

  VectorField grad_field(xg);
  for (int j = 0; j < xg.n_x; ++j)
    for (int i = 0; i < xg.n_x; ++i) grad_field.x(xg.index(i, j)) = std::sin(xg.coord(i));
  CHECK_THROWS_AS(run_coupled(f0, FluidState{grad_field}, 0.3, 0.2, plan), ConfigError);

  CHECK_THROWS_AS(run_coupled(f0, FluidState{VectorField(xg)}, 0.3, 0.0213, plan), ConfigError);
}
