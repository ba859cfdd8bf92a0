#pragma once

#include <vector>

#include "vfpns/fields.hpp"
#include "vfpns/fluid.hpp"

// Limiting system: advection-diffusion for the density, one-way coupled to the
// incompressible Navier-Stokes flow (the fluid does not see the density),
//   d_t rho + div(rho v) = Lap rho,   d_t v + (v.grad)v + grad P - Lap v = 0,
// plus the auxiliary fields of the stability theory: the effective velocity
// u_eps = eps (v - grad log rho) and its material residual e_eps.

namespace vfpns {

struct LimitState {
  ScalarField rho;  // > 0, unit mass
  FluidState fluid;
  double t = 0;
};

// One pseudo-spectral step of d_t rho + div(rho v) = Lap rho with v frozen:
// exact integrating factor for the Laplacian, Heun for the dealiased transport.
// Enforces dt <= h_x / max|v| and fails if the output dips below -1e-8.
ScalarField advdiff_step(const ScalarField& rho, const VectorField& v, double dt);

// Pure advection d_t rho + div(rho v) = 0 with v frozen: classical RK4 on the
// dealiased transport term. Same advective dt bound; mass is conserved exactly
// but there is no diffusion to repair an under-resolved front, so positivity is
// not guaranteed (only finiteness is enforced).
ScalarField advect_step(const ScalarField& rho, const VectorField& v, double dt);

// eps (v - grad log rho); throws on vacuum cells (rho <= 1e-12).
VectorField effective_velocity(const ScalarField& rho, const VectorField& v, double eps);

struct ResidualField {
  VectorField e;
  bool one_sided;  // endpoint sample: first-order time difference was used
};

// e_eps = d_t u_eps + (1/eps)(u_eps . grad) u_eps at sample k of trajectories
// recorded at uniform spacing dt_rec; centered differences inside, one-sided and
// flagged at the endpoints.
ResidualField residual_e_eps(const std::vector<ScalarField>& rho_traj,
                             const std::vector<VectorField>& v_traj, double eps, double dt_rec,
                             std::size_t k);

// Evolves phi by d_t phi = Lap phi + grad(|phi|^2 - v . phi), the closed equation
// satisfied by grad log rho along the limit system. v_traj must hold the driving
// velocity at every step time (size steps + 1); the returned trajectory has the
// same layout and starts at phi0.
std::vector<VectorField> loggrad_evolve(const VectorField& phi0,
                                        const std::vector<VectorField>& v_traj, double dt,
                                        double T);

struct LimitPlan {
  double dt = 0;
  long record_stride = 1;
};

struct LimitSample {
  LimitState state;
  double mass = 0;
  double min_rho = 0;
  double max_rho = 0;
  double grad_phi_sup = 0;  // sup |grad grad log rho|, the continuation functional
};

// Strang composition: density half step with the current v, fluid full step with
// zero force, density half step with the new v. Records every record_stride steps
// (t = 0 included). Along the run the mass must stay within 1e-10 of its initial
// value and min/max rho inside [min rho0 - 1e-6, max rho0 + 1e-6]; violations
// throw NumericalFailure. Requires rho0 > 0 with unit mass, divergence-free v0,
// and T an integer multiple of dt.
std::vector<LimitSample> run_limit(const ScalarField& rho0, const FluidState& v0, double T,
                                   const LimitPlan& plan);

}  // namespace vfpns
