#include "vfpns/limit.hpp"

#include <cmath>

#include "vfpns/errors.hpp"
#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

namespace vfpns {

using Eigen::ArrayXd;

namespace {

// Dealiased transport term -div(rho v).
ArrayXd transport_rhs(const SpectralOps2D& ops, const ArrayXd& rho, const ArrayXd& vx,
                      const ArrayXd& vy) {
  const ArrayXd r = ops.dealias(rho);
  const ArrayXd ax = ops.dealias(vx);
  const ArrayXd ay = ops.dealias(vy);
  return ops.dealias(-ops.div(r * ax, r * ay));
}

// grad(|phi|^2 - v . phi), the nonlinear part of the grad-log-density equation.
void loggrad_rhs(const SpectralOps2D& ops, const ArrayXd& px, const ArrayXd& py,
                 const VectorField& v, ArrayXd& n1, ArrayXd& n2) {
  const ArrayXd ax = ops.dealias(px);
  const ArrayXd ay = ops.dealias(py);
  const ArrayXd bx = ops.dealias(v.x);
  const ArrayXd by = ops.dealias(v.y);
  const ArrayXd s = ops.dealias(ax * ax + ay * ay - bx * ax - by * ay);
  ops.grad(s, n1, n2);
}

}  // namespace

ScalarField advdiff_step(const ScalarField& rho, const VectorField& v, double dt) {
  if (!(dt > 0)) throw ConfigError("advdiff_step: dt must be positive");
  if (!(rho.grid == v.grid)) throw ConfigError("advdiff_step: grid mismatch");
  const auto ops = spectral_ops(rho.grid);
  const double vmax = std::sqrt((v.x.square() + v.y.square()).maxCoeff());
  if (vmax > 0 && dt > rho.grid.h() / vmax * (1 + 1e-12))
    throw ConfigError("advdiff_step: dt exceeds the advective accuracy bound h_x / max|v|");

  // Lawson-Heun with the exact heat factor, as in the fluid stepper.
  const ArrayXd n1 = transport_rhs(*ops, rho.values, v.x, v.y);
  const ArrayXd pred = ops->heat(rho.values + dt * n1, dt);
  const ArrayXd n2 = transport_rhs(*ops, pred, v.x, v.y);

  ScalarField out(rho.grid);
  out.values = ops->heat(rho.values + (dt / 2) * n1, dt) + (dt / 2) * n2;
  if (!out.values.allFinite()) throw NumericalFailure("advdiff_step: non-finite density");
  if (out.values.minCoeff() < -1e-8)
    throw NumericalFailure("advdiff_step: density undershoot beyond 1e-8, state under-resolved");
  return out;
}

ScalarField advect_step(const ScalarField& rho, const VectorField& v, double dt) {
  if (!(dt > 0)) throw ConfigError("advect_step: dt must be positive");
  if (!(rho.grid == v.grid)) throw ConfigError("advect_step: grid mismatch");
  const auto ops = spectral_ops(rho.grid);
  const double vmax = std::sqrt((v.x.square() + v.y.square()).maxCoeff());
  if (vmax > 0 && dt > rho.grid.h() / vmax * (1 + 1e-12))
    throw ConfigError("advect_step: dt exceeds the advective accuracy bound h_x / max|v|");

  const ArrayXd k1 = transport_rhs(*ops, rho.values, v.x, v.y);
  const ArrayXd k2 = transport_rhs(*ops, rho.values + (dt / 2) * k1, v.x, v.y);
  const ArrayXd k3 = transport_rhs(*ops, rho.values + (dt / 2) * k2, v.x, v.y);
  const ArrayXd k4 = transport_rhs(*ops, rho.values + dt * k3, v.x, v.y);
  ScalarField out(rho.grid);
  out.values = rho.values + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
  if (!out.values.allFinite()) throw NumericalFailure("advect_step: non-finite density");
  return out;
}

VectorField effective_velocity(const ScalarField& rho, const VectorField& v, double eps) {
  if (!(eps > 0)) throw ConfigError("effective_velocity: eps must be positive");
  if (!(rho.grid == v.grid)) throw ConfigError("effective_velocity: grid mismatch");
  if (!(rho.values.minCoeff() > 1e-12))
    throw ConfigError("effective_velocity: density has vacuum cells");
  ScalarField lg(rho.grid);
  lg.values = rho.values.log();
  const VectorField g = spectral_grad(lg);
  VectorField out(rho.grid);
  out.x = eps * (v.x - g.x);
  out.y = eps * (v.y - g.y);
  return out;
}

ResidualField residual_e_eps(const std::vector<ScalarField>& rho_traj,
                             const std::vector<VectorField>& v_traj, double eps, double dt_rec,
                             std::size_t k) {
  if (rho_traj.size() < 2 || rho_traj.size() != v_traj.size())
    throw ConfigError("residual_e_eps: need matching trajectories with at least two samples");
  if (!(dt_rec > 0)) throw ConfigError("residual_e_eps: dt_rec must be positive");
  if (k >= rho_traj.size()) throw ConfigError("residual_e_eps: sample index out of range");

  const std::size_t last = rho_traj.size() - 1;
  const std::size_t ka = (k == 0) ? 0 : k - 1;
  const std::size_t kb = (k == last) ? last : k + 1;
  const VectorField u = effective_velocity(rho_traj[k], v_traj[k], eps);
  const VectorField ua = effective_velocity(rho_traj[ka], v_traj[ka], eps);
  const VectorField ub = effective_velocity(rho_traj[kb], v_traj[kb], eps);
  const double span = static_cast<double>(kb - ka) * dt_rec;

  const auto ops = spectral_ops(u.grid);
  ArrayXd d11, d12, d21, d22;
  ops->grad(u.x, d11, d12);
  ops->grad(u.y, d21, d22);
  ResidualField out{VectorField(u.grid), k == 0 || k == last};
  out.e.x = (ub.x - ua.x) / span + (u.x * d11 + u.y * d12) / eps;
  out.e.y = (ub.y - ua.y) / span + (u.x * d21 + u.y * d22) / eps;
  return out;
}

std::vector<VectorField> loggrad_evolve(const VectorField& phi0,
                                        const std::vector<VectorField>& v_traj, double dt,
                                        double T) {
  if (!(dt > 0)) throw ConfigError("loggrad_evolve: dt must be positive");
  const long n = std::lround(T / dt);
  if (n < 1 || std::abs(n * dt - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("loggrad_evolve: T must be an integer multiple of dt");
  if (v_traj.size() != static_cast<std::size_t>(n) + 1)
    throw ConfigError("loggrad_evolve: v_traj must hold one field per step time");
  for (const VectorField& v : v_traj)
    if (!(v.grid == phi0.grid)) throw ConfigError("loggrad_evolve: grid mismatch");
  const auto ops = spectral_ops(phi0.grid);

  std::vector<VectorField> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  out.push_back(phi0);
  for (long k = 0; k < n; ++k) {
    const VectorField& p = out.back();
    ArrayXd n1, n2;
    loggrad_rhs(*ops, p.x, p.y, v_traj[k], n1, n2);
    const ArrayXd qx = ops->heat(p.x + dt * n1, dt);
    const ArrayXd qy = ops->heat(p.y + dt * n2, dt);
    ArrayXd m1, m2;
    loggrad_rhs(*ops, qx, qy, v_traj[k + 1], m1, m2);
    VectorField next(p.grid);
    next.x = ops->heat(p.x + (dt / 2) * n1, dt) + (dt / 2) * m1;
    next.y = ops->heat(p.y + (dt / 2) * n2, dt) + (dt / 2) * m2;
    if (!next.x.allFinite() || !next.y.allFinite())
      throw NumericalFailure("loggrad_evolve: non-finite field");
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<LimitSample> run_limit(const ScalarField& rho0, const FluidState& v0, double T,
                                   const LimitPlan& plan) {
  if (!(plan.dt > 0)) throw ConfigError("run_limit: dt must be positive");
  if (plan.record_stride < 1) throw ConfigError("run_limit: record_stride must be >= 1");
  if (!(rho0.grid == v0.v.grid)) throw ConfigError("run_limit: grid mismatch");
  if (!(rho0.values.minCoeff() > 0)) throw ConfigError("run_limit: rho0 must be positive");
  if (std::abs(integrate(rho0) - 1.0) > 1e-6)
    throw ConfigError("run_limit: initial mass must be 1");
  if (spectral_div(v0.v).values.abs().maxCoeff() > 1e-8)
    throw ConfigError("run_limit: v0 must be divergence-free");
  const long n = std::lround(T / plan.dt);
  if (n < 1 || std::abs(n * plan.dt - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("run_limit: T must be an integer multiple of dt");

  const double mass0 = integrate(rho0);
  const double lo = rho0.values.minCoeff() - 1e-6;
  const double hi = rho0.values.maxCoeff() + 1e-6;
  const VectorField zero(v0.v.grid);
  const auto ops = spectral_ops(rho0.grid);

  ScalarField rho = rho0;
  FluidState fs = v0;
  fs.t = 0;

  std::vector<LimitSample> out;
  out.reserve(static_cast<std::size_t>(n / plan.record_stride) + 2);
  auto record = [&]() {
    LimitSample s{LimitState{rho, fs, fs.t}, integrate(rho), rho.values.minCoeff(),
                  rho.values.maxCoeff(), 0.0};
    if (std::abs(s.mass - mass0) > 1e-10)
      throw NumericalFailure("run_limit: mass drift beyond 1e-10");
    if (s.min_rho < lo || s.max_rho > hi)
      throw NumericalFailure("run_limit: maximum principle violated beyond 1e-6");
    if (!(s.min_rho > 1e-12)) throw NumericalFailure("run_limit: density has vacuum cells");
    ScalarField lg(rho.grid);
    lg.values = rho.values.log();
    const VectorField phi = spectral_grad(lg);
    ArrayXd g11, g12, g21, g22;
    ops->grad(phi.x, g11, g12);
    ops->grad(phi.y, g21, g22);
    s.grad_phi_sup =
        std::sqrt((g11.square() + g12.square() + g21.square() + g22.square()).maxCoeff());
    out.push_back(std::move(s));
  };

  record();
  for (long k = 0; k < n; ++k) {
    rho = advdiff_step(rho, fs.v, plan.dt / 2);
    fs = ns_step(fs, plan.dt, zero);
    rho = advdiff_step(rho, fs.v, plan.dt / 2);
    if ((k + 1) % plan.record_stride == 0 || k + 1 == n) record();
  }
  return out;
}

}  // namespace vfpns
