#pragma once

#include <functional>
#include <vector>

#include "vfpns/entropy.hpp"
#include "vfpns/fields.hpp"
#include "vfpns/kinetic.hpp"

// Pseudo-spectral incompressible Navier-Stokes on the torus with unit viscosity,
//   d_t v + (v . grad) v + grad P - Lap v = F,   div v = 0,
// and the coupled driver that exchanges the kinetic drag force
//   F = (1/eps) int (xi - eps v) f dxi = (1/eps) m_f - rho_f v
// with the split kinetic solver.

namespace vfpns {

struct FluidState {
  VectorField v;  // divergence-free velocity
  ScalarField p;  // diagnostic pressure recovered from the last projection
  double t = 0;

  explicit FluidState(const SpatialGrid& g) : v(g), p(g) {}
  explicit FluidState(VectorField v0, double t0 = 0) : v(std::move(v0)), p(v.grid), t(t0) {}
};

// Spectral projection I - grad lap^-1 div; mean modes pass through unchanged.
VectorField leray_project(const VectorField& w);

// (1/eps) m_f - rho_f v cellwise.
VectorField drag_force(const PhaseDensity& f, const VectorField& v, double eps);

// One step with exact integrating factor for the Laplacian and Heun for the
// projected, 2/3-dealiased advection plus the (time-constant) force. The advective
// accuracy bound dt <= h_x / max|v| is enforced. Pressure is recovered
// diagnostically from the unprojected right-hand side at the new state.
FluidState ns_step(const FluidState& state, double dt, const VectorField& force);

// Same scheme, but the force is base - rho * v with the velocity factor
// re-evaluated at each Heun stage. Keeps the drag exchange second order when the
// kinetic moments base = (1/eps) m_f and rho = rho_f are frozen at a half step.
FluidState ns_step_drag(const FluidState& state, double dt, const VectorField& base,
                        const ScalarField& rho);

struct CoupledPlan {
  double dt = 0;               // outer step; kinetic halves run at dt/2
  long record_stride = 1;      // sample every record_stride-th step (t = 0 included)
  double cfl_fraction = 0.5;   // kinetic transport bound, applied to dt/2
  SplitScheme scheme = SplitScheme::strang;
  TransportMethod transport_method = TransportMethod::spectral_shift;
  double energy_tol = 1e-4;    // slack for the discrete energy inequality
  // Optional hook that fills the comparison fields of each DiagnosticsRecord
  // (distances to a reference trajectory); they stay zero otherwise.
  std::function<void(const KineticState&, const FluidState&, DiagnosticsRecord&)> augment;
};

struct CoupledSample {
  KineticState kinetic;
  FluidState fluid;
  DiagnosticsRecord diag;
};

// Symmetric exchange: kinetic half step with the current v, fluid full step with
// the drag moments frozen at the kinetic half state, kinetic half step with the
// new v. Records diagnostics every record_stride steps; entropy_H holds the
// relative entropy against M_{rho_f, eps v}. At every record the free energy plus
// the accumulated dissipation integrals (closed-form relaxation work; lower-bound
// rectangles for the viscous and kinetic parts, so quadrature cannot manufacture a
// violation) is checked against its initial value within energy_tol; violation
// throws NumericalFailure.
// Requires unit initial mass, divergence-free v0, and T an integer multiple of dt.
std::vector<CoupledSample> run_coupled(const PhaseDensity& f0, const FluidState& v0, double eps,
                                       double T, const CoupledPlan& plan);

}  // namespace vfpns
