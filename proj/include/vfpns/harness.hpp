#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vfpns/bl.hpp"
#include "vfpns/fluid.hpp"
#include "vfpns/hilbert.hpp"
#include "vfpns/limit.hpp"

// Experiment orchestration: versioned JSON configuration, prepared initial data,
// the modulated-energy inequality audit, the epsilon sweep with rate fits, report
// emission (CSV / JSON / SVG), and checkpoint/resume. This is the layer the CLI
// calls into; everything below it is a plain solver.

namespace vfpns {

// Per-record tolerance of the modulated-energy audit: the inequality must hold
// with slack >= -kAuditSlackTol * (1 + |rhs|).
inline constexpr double kAuditSlackTol = 1e-4;

// Sweep gate bands (exit code 4 when violated): fitted slope of sup_t |f - M|_L1
// vs eps, fitted slope of sup_t d_BL(rho_eps, rho) vs eps, the monotonicity
// allowance for the largest eps, and the eps threshold below which the
// first-order corrector must improve on the leading-order residual.
inline constexpr double kSlopeBandL1F[2] = {0.9, 1.3};
inline constexpr double kSlopeBandBLRho[2] = {1.7, 2.3};
inline constexpr double kMonotoneTolLargestEps = 0.05;
inline constexpr double kHilbertImproveEps = 0.2;

// Zero-drift well-prepared data put the kinetic run a full eps*|f1| away from
// the first-order expansion at t = 0; the drift relaxes at rate 1/eps^2, so the
// expansion describes the solution only once t >= kLayerEFolds * eps^2 (e^-5 of
// the initial offset left). The corrector comparison is made on that window.
inline constexpr double kLayerEFolds = 5.0;

// Experiment configuration. The member defaults are the default experiment:
// 32^2 x 32^2 phase grid on [0, 2pi)^2 x [-6, 6)^2, eps in {0.4, 0.2, 0.1, 0.05},
// T = 0.5 with records every 0.0125, cosine density with a Taylor-Green flow.
struct RunConfig {
  int schema = 1;

  int n_x = 32;
  int n_v = 32;
  double length = 6.283185307179586;
  double v_max = 6.0;

  std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};  // strictly decreasing, in (0,1]

  double T = 0.5;
  double record_interval = 0.0125;  // T must be an integer multiple
  double cfl_fraction = 0.5;
  double dt_cap = 0.0;  // optional hard cap on the outer step; 0 = none

  std::string recipe = "cosine_taylor_green";
  double rho_amplitude = 0.5;  // rho0 = Z^-1 (1 + a cos x1), a in [0, 1)
  double v_amplitude = 0.5;    // Taylor-Green amplitude
  double w_amplitude = 0.0;    // O(1) velocity perturbation of the Maxwellian, in [0, 1]

  int bl_stride = 4;        // spatial BL distance every k-th record
  int bl_phase_stride = 8;  // phase-space BL distance every k-th record
  int bl_block = 2;         // torus coarsening for d_BL(rho_eps, rho)
  int bl_phase_block_x = 4;
  int bl_phase_block_v = 8;
  bool save_fields = false;  // store every record's fields (needed by `audit`)

  std::string output_dir = "out";
  std::uint64_t seed = 2026;

  SpatialGrid spatial_grid() const { return SpatialGrid(n_x, length); }
  VelocityGrid velocity_grid() const { return VelocityGrid(n_v, v_max); }

  // Outer step for one coupled run: the largest divisor of record_interval not
  // exceeding the kinetic accuracy bound (and dt_cap when set).
  double dt_for(double eps) const;
  long record_stride_for(double eps) const;
  // Limit-system step: one refinement finer than the finest coupled run.
  double reference_dt() const;

  ScalarField initial_density() const;       // normalized to unit mass
  VectorField initial_velocity() const;      // divergence-free
  VectorField initial_perturbation() const;  // |w(x)| = w_amplitude everywhere
};

// Parse with schema validation: "schema" is required and must equal 1; every
// other key is optional with the defaults above; unknown keys anywhere are
// rejected. Throws ConfigError with the offending key path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct PreparedState {
  PhaseDensity f;
  FluidState fluid;
};

// f0 = M_{rho0, 0}, v0 unchanged: zero velocity gap and relative entropy at
// machine level. The velocity marginal is renormalized cell by cell so it equals
// rho0 exactly; the truncated Gaussian tail would otherwise leak O(1e-9) mass.
PreparedState init_well_prepared(const ScalarField& rho0, const VectorField& v0,
                                 const VelocityGrid& vg);

// f0 = M_{rho0, w} with an O(1) drift perturbation, |w|_inf <= 1: the initial
// entropy int rho0 |w|^2 / 2 is O(1) but the marginal still equals rho0 exactly
// (same cell-wise renormalization). w = 0 reduces to init_well_prepared.
PreparedState init_scaled_well_prepared(const ScalarField& rho0, const VectorField& v0,
                                        const VectorField& w, const VelocityGrid& vg);

// Strict log-log least-squares fit for sweep outputs: requires >= 3 points, all
// coordinates positive, and at least two distinct abscissae; throws ConfigError
// otherwise. (The corrector-order fit in hilbert.hpp instead *skips* nonpositive
// values, because floor-level residuals are expected there.)
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

// One record of the modulated-energy inequality audit. Dissipation integrals
// (lhs) accumulate min-endpoint rectangles so time quadrature can never
// manufacture a violation; the sign-indefinite error integrals (rhs) accumulate
// trapezoids. All integral columns are cumulative from t = 0.
struct AuditRecord {
  double t = 0;
  double entropy = 0;        // H[f | M_{rho, u_eps}] at t
  double fluid_gap_sq = 0;   // (1/2) |v_eps_sys - v|_L2^2 at t
  double diss_kinetic = 0;   // (1/eps^2) int (1/f) |grad_xi f + (xi - u_f) f|^2
  double diss_defect = 0;    // (1/eps^2) int rho_f |(u_eps - u_f) - eps (v - v_sys)|^2
  double diss_fluid = 0;     // int |grad (v_sys - v)|^2
  double err_stress = 0;     // -(1/eps) iint (f (u_eps - xi)x(u_eps - xi) - f I) : grad u_eps
  double err_advection = 0;  // int (dv x dv) : grad v
  double err_density = 0;    // int (rho_f - rho) dv . grad log rho
  double err_residual = 0;   // int rho_f (u_eps - u_f) . e_eps
  double lhs = 0;
  double rhs = 0;
  double slack = 0;  // rhs - lhs; must stay >= -kAuditSlackTol * (1 + |rhs|)
  double mke = 0;    // (1/(2 eps^2)) int_0^t int rho_f |u_f - u_eps|^2 (trapezoid)
};

struct AuditReport {
  std::vector<AuditRecord> records;
  double min_slack = 0;        // min over records of slack
  double min_margin = 0;       // min over records of slack + kAuditSlackTol*(1+|rhs|)
  bool holds = false;          // min_margin >= 0
  double initial_entropy = 0;  // H[f | M_{rho, 0}] at t = 0 (the Gronwall data term)
  double initial_gap_sq = 0;   // |v_sys(0) - v(0)|_L2^2
  double mke_total = 0;
  double gronwall_c = 0;  // mke_total / (eps^2 + initial_entropy + initial_gap_sq)
};

// Evaluates the modulated-energy inequality along a coupled trajectory against a
// limit trajectory recorded at the same times (grids equal, |t_k| aligned to
// 1e-9, eps matching the trajectory). Throws ConfigError on misalignment.
AuditReport modulated_energy_audit(const std::vector<CoupledSample>& traj,
                                   const std::vector<LimitSample>& limit_traj, double eps);

void write_audit_csv(const std::filesystem::path& path, const AuditReport& report);

// Per-epsilon reductions over one coupled run against the shared limit run.
struct EpsReduction {
  double eps = 0;
  double dt = 0;
  double sup_l1_f = 0;        // sup_t |f - M_{rho,0}|_L1
  double sup_l1_hilbert = 0;  // sup_t |f - M_{rho,0} - eps f1|_L1
  // Same residual restricted to t >= kLayerEFolds * eps^2, where the expansion
  // applies (final record when the window is empty). Always <= sup_l1_hilbert.
  double sup_l1_hilbert_bulk = 0;
  double max_f1_marginal = 0;   // sup over records and cells of |int f1 dxi|
  double sup_l1_rho = 0;        // sup_t |rho_f - rho|_L1
  double sup_l2_v = 0;          // sup_t |v_sys - v|_L2
  double int_h1_v = 0;          // int_0^T |grad (v_sys - v)|^2 dt (trapezoid)
  double int_l1_momentum = 0;   // int_0^T |(1/eps) m_f - rho (v - grad log rho)|_L1 dt
  double sup_bl_rho = 0;        // sup over sampled records of d_BL(rho_f, rho)
  double int_bl_f_sq = 0;       // int_0^T d_BL^2(f, M_{rho,0}) dt on the sampled grid
  double audit_min_slack = 0;
  double audit_min_margin = 0;
  bool audit_holds = false;
  double mke_total = 0;
  double gronwall_c = 0;
};

struct SweepResult {
  RunConfig config;
  std::vector<EpsReduction> runs;  // ordered as config.eps_list (decreasing eps)
  RateFit fit_l1_f;
  RateFit fit_l1_hilbert;
  RateFit fit_l1_rho;
  RateFit fit_l2_v;
  RateFit fit_h1_v;
  RateFit fit_momentum;
  RateFit fit_bl_rho;
  RateFit fit_bl_f;  // fitted on sqrt(int_bl_f_sq)
  bool complete = false;
  std::string abort_reason;
};

// Gate evaluated by the `sweep` subcommand (exit code 4 on failure): every audit
// holds, slope bands kSlopeBandL1F / kSlopeBandBLRho, monotonicity of every
// reduction in eps (5% allowance at the largest eps), and the first-order
// corrector improving on the leading residual for eps <= kHilbertImproveEps,
// compared on the post-layer window (sup_l1_hilbert_bulk < sup_l1_f).
struct SweepGate {
  bool ok = true;
  std::vector<std::string> failures;
};
SweepGate evaluate_sweep_gate(const SweepResult& sweep);

// One coupled run under the config's dt policy (well-prepared when w_amplitude
// is 0, scaled-well-prepared otherwise).
std::vector<CoupledSample> run_eps_system(const RunConfig& cfg, double eps);
// The shared limit run at reference_dt, recorded every record_interval.
std::vector<LimitSample> run_reference(const RunConfig& cfg);

// Full experiment: limit run once, one coupled run per eps (decreasing), audits,
// reductions, rate fits. Persists per-run diagnostics, audits, checkpoints, and
// the report under cfg.output_dir as it goes, so an aborted sweep leaves partial
// results plus an abort_reason in summary.json before the failure is rethrown.
SweepResult eps_sweep(const RunConfig& cfg);

// report.csv (one row per eps), summary.json, report.svg (log-log reductions vs
// eps, one polyline per series plus one per fitted line). Deterministic: a fixed
// sweep reproduces the files byte for byte. An empty sweep yields a header-only
// CSV, a zero-entry JSON, and an axes-only SVG.
void emit_report(const SweepResult& sweep, const std::filesystem::path& out_dir);

// Coupled-state checkpoint: f (+ counters) via the kinetic checkpoint format,
// v as a field snapshot, and meta.json with the config echo. Resume restores the
// state bit for bit, so rerunning the remaining interval reproduces an
// uninterrupted run's records to 1e-10.
struct ResumePoint {
  KineticState kinetic;
  FluidState fluid;
  RunConfig config;
};
void write_coupled_checkpoint(const std::filesystem::path& dir, const KineticState& ks,
                              const FluidState& fs, const RunConfig& cfg);
ResumePoint read_coupled_checkpoint(const std::filesystem::path& dir);

// Randomized verification suites shared by the `oracle` subcommand and the
// acceptance gate. Each reports the worst deviation seen and how many cases
// violated its bound.
struct SuiteReport {
  long checked = 0;
  long failed = 0;
  double worst = 0;
  std::string detail;
};

// Entropy identities on random discrete states: decomposition vs direct relative
// entropy (1e-6 relative) and the dissipation split total = kinetic + alignment;
// plus Csiszar-Kullback-Pinsker on equal-mass pairs.
SuiteReport oracle_identity_suite(std::uint64_t seed, long n_states, long n_pairs);
// Random BL instances (<= 64 nodes): |exact - oracle| <= 1e-7, |ascent - oracle|
// <= 1e-6, plus the two-point closed form 2d/(2+d).
SuiteReport oracle_bl_suite(std::uint64_t seed, long n_instances);

}  // namespace vfpns
