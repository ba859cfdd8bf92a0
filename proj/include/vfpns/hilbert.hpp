#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfpns/fields.hpp"

// Relaxation-expansion correctors about the local equilibrium rho(x) M(xi) and
// expansion-order diagnostics: with f ~ f0 + eps f1 the phase-space error is
// first order in eps while the density marginal error is second order, because
// the f1 marginal vanishes by oddness. The f1 sign is fixed by the flux
// identity int xi f1 dxi = -grad rho + rho v0, the one consistent with the
// limiting advection-diffusion equation (the opposite sign also circulates; it
// fails that identity).

namespace vfpns {

// rho(x) M(xi) with M(xi) = (2 pi)^{-1} exp(-|xi|^2 / 2).
PhaseDensity corrector_f0(const ScalarField& rho, const VelocityGrid& vg);

// (-xi . grad rho + rho v0 . xi) M(xi). Signed and velocity-odd: its density
// marginal vanishes exactly on the symmetric velocity grid.
PhaseDensity corrector_f1(const ScalarField& rho, const VectorField& v0, const VelocityGrid& vg);

struct CorrectorSet {
  PhaseDensity f0;
  PhaseDensity f1;
  ScalarField rho;
  VectorField v0;
};

// Builds both correctors and enforces the zero-marginal invariant of f1
// (sup_x |int f1 dxi| <= 1e-10, else NumericalFailure).
CorrectorSet corrector_set(const ScalarField& rho, const VectorField& v0, const VelocityGrid& vg);

// One scaled run sampled at shared record times: kinetic snapshots plus the
// limiting fields at the same instants, all on common grids.
struct EpsRun {
  std::vector<PhaseDensity> f;
  std::vector<ScalarField> rho;
  std::vector<VectorField> v;
};

struct RateFit {
  double slope = 0;
  double intercept = 0;     // in log-log coordinates
  double residual = 0;      // sup-norm misfit of the line
  bool degenerate = false;  // fewer than two usable points
  int used = 0;
};

// Least squares of log(err) on log(eps). Points are dropped from the small-eps
// end while their error sits below 10x the discretization floor; nonpositive
// errors never enter. Fewer than two survivors flags the fit degenerate.
RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err,
                 double floor = 0.0);

struct ResidualOrders {
  std::vector<double> eps;
  std::vector<double> e0;    // sup_t L1 distance of f from f0
  std::vector<double> e1;    // sup_t L1 distance of f from f0 + eps f1
  std::vector<double> d_bl;  // sup_t BL distance of the density marginal from rho
  RateFit fit_e0, fit_e1, fit_d;
};

struct ResidualOptions {
  int bl_block = 2;      // spatial coarsening of the BL graph
  double floor_e0 = 0;   // per-column discretization floors for the fits
  double floor_e1 = 0;
  double floor_d = 0;
};

// Runs the factory once per eps and reduces each run to the three expansion
// residuals; expected orders are slope(e0) ~ 1 and slope(d_bl) ~ 2.
ResidualOrders residual_orders(const std::vector<double>& eps_list,
                               const std::function<EpsRun(double)>& run,
                               const ResidualOptions& opt = {});

// One row per eps plus a trailing slope row; deterministic byte output.
std::string residual_orders_csv(const ResidualOrders& t);
nlohmann::json residual_orders_json(const ResidualOrders& t);

}  // namespace vfpns
