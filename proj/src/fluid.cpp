#include "vfpns/fluid.hpp"

#include <cmath>
#include <utility>

#include "vfpns/errors.hpp"
#include "vfpns/io.hpp"
#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

namespace vfpns {

using Eigen::ArrayXd;

namespace {

// Unprojected right-hand side -(v.grad)v + g - rho v with the quadratic term
// 2/3-dealiased on both sides of the product.
void raw_rhs(const SpectralOps2D& ops, const ArrayXd& vx, const ArrayXd& vy,
             const VectorField* g, const ScalarField* rho, ArrayXd& n1, ArrayXd& n2) {
  const ArrayXd ax = ops.dealias(vx);
  const ArrayXd ay = ops.dealias(vy);
  ArrayXd d11, d12, d21, d22;
  ops.grad(ax, d11, d12);
  ops.grad(ay, d21, d22);
  n1 = ops.dealias(-(ax * d11 + ay * d12));
  n2 = ops.dealias(-(ax * d21 + ay * d22));
  if (g) {
    n1 += g->x;
    n2 += g->y;
  }
  if (rho) {
    n1 -= rho->values * vx;
    n2 -= rho->values * vy;
  }
}

FluidState step_impl(const FluidState& s, double dt, const VectorField* g,
                     const ScalarField* rho) {
  if (!(dt > 0)) throw ConfigError("ns_step: dt must be positive");
  const SpatialGrid& grid = s.v.grid;
  const auto ops = spectral_ops(grid);
  const double vmax = std::sqrt((s.v.x.square() + s.v.y.square()).maxCoeff());
  if (vmax > 0 && dt > grid.h() / vmax * (1 + 1e-12))
    throw ConfigError("ns_step: dt exceeds the advective accuracy bound h_x / max|v|");

  ArrayXd n1, n2;
  raw_rhs(*ops, s.v.x, s.v.y, g, rho, n1, n2);
  ops->leray(n1, n2);
  // Lawson-Heun: predictor e^{dt Lap}(v + dt N1), then
  // v_new = e^{dt Lap}(v + dt/2 N1) + dt/2 N2 with N2 at the predictor.
  const ArrayXd px = ops->heat(s.v.x + dt * n1, dt);
  const ArrayXd py = ops->heat(s.v.y + dt * n2, dt);
  ArrayXd m1, m2;
  raw_rhs(*ops, px, py, g, rho, m1, m2);
  ops->leray(m1, m2);

  FluidState out(grid);
  out.v.x = ops->heat(s.v.x + (dt / 2) * n1, dt) + (dt / 2) * m1;
  out.v.y = ops->heat(s.v.y + (dt / 2) * n2, dt) + (dt / 2) * m2;
  ops->leray(out.v.x, out.v.y);
  if (!out.v.x.allFinite() || !out.v.y.allFinite())
    throw NumericalFailure("ns_step: non-finite velocity");

  // diagnostic pressure: grad P is the gradient part of the new right-hand side
  ArrayXd r1, r2;
  raw_rhs(*ops, out.v.x, out.v.y, g, rho, r1, r2);
  out.p.values = ops->inv_lap(ops->div(r1, r2));
  out.t = s.t + dt;
  return out;
}

}  // namespace

VectorField leray_project(const VectorField& w) {
  VectorField out = w;
  spectral_ops(w.grid)->leray(out.x, out.y);
  return out;
}

VectorField drag_force(const PhaseDensity& f, const VectorField& v, double eps) {
  if (!(eps > 0)) throw ConfigError("drag_force: eps must be positive");
  if (!(f.xg == v.grid)) throw ConfigError("drag_force: grid mismatch");
  const ScalarField rho = moment_density(f);
  const VectorField m = moment_momentum(f);
  VectorField out(f.xg);
  out.x = m.x / eps - rho.values * v.x;
  out.y = m.y / eps - rho.values * v.y;
  return out;
}

FluidState ns_step(const FluidState& state, double dt, const VectorField& force) {
  if (!(force.grid == state.v.grid)) throw ConfigError("ns_step: force grid mismatch");
  return step_impl(state, dt, &force, nullptr);
}

FluidState ns_step_drag(const FluidState& state, double dt, const VectorField& base,
                        const ScalarField& rho) {
  if (!(base.grid == state.v.grid) || !(rho.grid == state.v.grid))
    throw ConfigError("ns_step_drag: grid mismatch");
  return step_impl(state, dt, &base, &rho);
}

std::vector<CoupledSample> run_coupled(const PhaseDensity& f0, const FluidState& v0, double eps,
                                       double T, const CoupledPlan& plan) {
  if (!(eps > 0) || eps > 1.0) throw ConfigError("run_coupled: eps must lie in (0, 1]");
  if (!(plan.dt > 0)) throw ConfigError("run_coupled: dt must be positive");
  if (plan.record_stride < 1) throw ConfigError("run_coupled: record_stride must be >= 1");
  if (!(f0.xg == v0.v.grid)) throw ConfigError("run_coupled: grid mismatch");
  if (std::abs(integrate_phase(f0) - 1.0) > 1e-6)
    throw ConfigError("run_coupled: initial mass must be 1");
  if (spectral_div(v0.v).values.abs().maxCoeff() > 1e-8)
    throw ConfigError("run_coupled: v0 must be divergence-free");
  const long n = std::lround(T / plan.dt);
  if (n < 1 || std::abs(n * plan.dt - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("run_coupled: T must be an integer multiple of dt");

  KineticState ks{f0, 0.0, eps};
  FluidState fs = v0;
  fs.t = 0;
  StepPlan half;
  half.dt = plan.dt / 2;
  half.cfl_fraction = plan.cfl_fraction;
  half.scheme = plan.scheme;
  half.transport_method = plan.transport_method;

  const auto ops = spectral_ops(f0.xg);
  const auto grad_energy = [&ops](const VectorField& v) {
    return ops->h1_seminorm_sq(v.x) + ops->h1_seminorm_sq(v.y);
  };
  // The energy audit checks F(t) + accumulated dissipation <= F(0) + tol. The
  // relaxation work is exact in closed form; the viscous and kinetic integrals use
  // min-endpoint rectangles, a lower bound on monotone stretches, so the check
  // stays one-sided: quadrature can never manufacture a violation.
  const double F0 = free_energy(f0, v0.v);
  double visc_work = 0;  // int |grad v|^2 dt, min-endpoint rectangle per fluid step
  double kin_work = 0;   // (1/eps^2) D_kin dt, min-endpoint rectangle per record
  double t_prev_rec = 0;
  double kin_prev = 0;

  std::vector<CoupledSample> out;
  const auto record = [&](long step) {
    DiagnosticsRecord rec;
    rec.t = ks.t;
    const ScalarField rho_f = moment_density(ks.f);
    const VectorField m_f = moment_momentum(ks.f);
    VectorField ev = fs.v;
    ev.x *= eps;
    ev.y *= eps;
    rec.free_energy_F = free_energy(ks.f, fs.v);
    rec.entropy_H = relative_entropy(ks.f, maxwellian(rho_f, ev, ks.f.vg));
    const DissipationParts d = dissipation_split(ks.f, fs.v, eps);
    rec.diss_kinetic = d.kinetic;
    rec.diss_alignment = d.alignment;
    rec.diss_total = d.total;
    rec.moment2 = moment_second(ks.f);
    rec.llogl_rho = llogl_entropy(rho_f);
    VectorField ms(f0.xg);
    ms.x = m_f.x / eps;
    ms.y = m_f.y / eps;
    rec.scaled_momentum_l1 = l1_norm(ms);
    if (step > 0)
      kin_work += (ks.t - t_prev_rec) * std::min(kin_prev, d.kinetic) / (eps * eps);
    kin_prev = d.kinetic;
    t_prev_rec = ks.t;
    if (plan.augment) plan.augment(ks, fs, rec);

    const double lhs = rec.free_energy_F + ks.ou_align_work + visc_work + kin_work;
    if (lhs > F0 + plan.energy_tol)
      throw NumericalFailure("run_coupled: energy inequality violated at t = " +
                             format_double(ks.t) + ": " + format_double(lhs) + " > " +
                             format_double(F0) + " + " + format_double(plan.energy_tol));
    out.push_back({ks, fs, rec});
  };
  record(0);

  for (long k = 0; k < n; ++k) {
    vfp_step(ks, fs.v, half);
    const ScalarField rho_mid = moment_density(ks.f);
    const VectorField m_mid = moment_momentum(ks.f);
    VectorField base(f0.xg);
    base.x = m_mid.x / eps;
    base.y = m_mid.y / eps;
    const double ge = grad_energy(fs.v);
    fs = ns_step_drag(fs, plan.dt, base, rho_mid);
    visc_work += plan.dt * std::min(ge, grad_energy(fs.v));
    vfp_step(ks, fs.v, half);
    if ((k + 1) % plan.record_stride == 0 || k + 1 == n) record(k + 1);
  }
  return out;
}

}  // namespace vfpns
