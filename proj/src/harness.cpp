#include "vfpns/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "vfpns/entropy.hpp"
#include "vfpns/errors.hpp"
#include "vfpns/io.hpp"
#include "vfpns/kinetic.hpp"
#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

namespace vfpns {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string key_path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

void reject_unknown_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: " + (where.empty() ? std::string("top level") : where) +
                      " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("config: unknown key \"" + key_path(where, item.key()) + "\"");
  }
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("config: " + path + " must be a number");
  return j.get<double>();
}

long get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError("config: " + path + " must be an integer");
  return j.get<long>();
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError("config: " + path + " must be a string");
  return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError("config: " + path + " must be a boolean");
  return j.get<bool>();
}

void validate_run_config(const RunConfig& cfg) {
  if (cfg.schema != 1)
    throw ConfigError("config: unsupported schema " + std::to_string(cfg.schema) +
                      " (this build reads schema 1)");
  const SpatialGrid xg = cfg.spatial_grid();    // validates n_x, length
  const VelocityGrid vg = cfg.velocity_grid();  // validates n_v, v_max
  if (cfg.eps_list.empty()) throw ConfigError("config: eps_list must not be empty");
  for (std::size_t i = 0; i < cfg.eps_list.size(); ++i) {
    const double e = cfg.eps_list[i];
    if (!(e > 0.0) || e > 1.0)
      throw ConfigError("config: eps_list[" + std::to_string(i) + "] = " + format_double(e) +
                        " outside (0, 1]");
    if (i > 0 && !(e < cfg.eps_list[i - 1]))
      throw ConfigError("config: eps_list must be strictly decreasing");
  }
  if (!(cfg.T > 0.0)) throw ConfigError("config: time.T must be positive");
  if (!(cfg.record_interval > 0.0))
    throw ConfigError("config: time.record_interval must be positive");
  if (cfg.record_interval > cfg.T * (1.0 + 1e-12))
    throw ConfigError("config: time.record_interval exceeds T");
  const double q = cfg.T / cfg.record_interval;
  if (std::abs(q - std::round(q)) > 1e-9)
    throw ConfigError("config: time.T must be an integer multiple of record_interval");
  if (!(cfg.cfl_fraction > 0.0) || cfg.cfl_fraction > 1.0)
    throw ConfigError("config: time.cfl_fraction must lie in (0, 1]");
  if (cfg.dt_cap < 0.0) throw ConfigError("config: time.dt_cap must be >= 0");
  if (cfg.recipe != "cosine_taylor_green")
    throw ConfigError("config: unknown initial_data.recipe \"" + cfg.recipe +
                      "\" (known: cosine_taylor_green)");
  if (cfg.rho_amplitude < 0.0 || cfg.rho_amplitude >= 1.0)
    throw ConfigError("config: initial_data.rho_amplitude must lie in [0, 1)");
  if (cfg.v_amplitude < 0.0 || cfg.v_amplitude > 0.5 * cfg.v_max)
    throw ConfigError("config: initial_data.v_amplitude must lie in [0, v_max/2]");
  if (cfg.w_amplitude < 0.0 || cfg.w_amplitude > 1.0)
    throw ConfigError("config: initial_data.w_amplitude must lie in [0, 1]");
  if (cfg.bl_stride < 1 || cfg.bl_phase_stride < 1)
    throw ConfigError("config: diagnostics strides must be >= 1");
  if (cfg.bl_block < 1 || xg.n_x % cfg.bl_block != 0)
    throw ConfigError("config: diagnostics.bl_block must divide n_x");
  if (cfg.bl_phase_block_x < 1 || xg.n_x % cfg.bl_phase_block_x != 0)
    throw ConfigError("config: diagnostics.bl_phase_block_x must divide n_x");
  if (cfg.bl_phase_block_v < 1 || vg.n_v % cfg.bl_phase_block_v != 0)
    throw ConfigError("config: diagnostics.bl_phase_block_v must divide n_v");
  if (cfg.output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
}

std::string index_tag(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", k);
  return buf;
}

VectorField sub(const VectorField& a, const VectorField& b) {
  return VectorField(a.grid, a.x - b.x, a.y - b.y);
}

// Trajectory views the audit and the reductions share.
std::vector<ScalarField> limit_densities(const std::vector<LimitSample>& ltraj) {
  std::vector<ScalarField> out;
  out.reserve(ltraj.size());
  for (const auto& s : ltraj) out.push_back(s.state.rho);
  return out;
}

std::vector<VectorField> limit_velocities(const std::vector<LimitSample>& ltraj) {
  std::vector<VectorField> out;
  out.reserve(ltraj.size());
  for (const auto& s : ltraj) out.push_back(s.state.fluid.v);
  return out;
}

}  // namespace

double RunConfig::dt_for(double eps) const {
  if (!(eps > 0.0)) throw ConfigError("dt_for: eps must be positive");
  double bound = max_stable_dt(eps, spatial_grid(), velocity_grid(), cfl_fraction);
  if (dt_cap > 0.0) bound = std::min(bound, dt_cap);
  const double m = std::ceil(record_interval / bound * (1.0 - 1e-12));
  return record_interval / std::max(1.0, m);
}

long RunConfig::record_stride_for(double eps) const {
  return std::lround(record_interval / dt_for(eps));
}

double RunConfig::reference_dt() const {
  if (eps_list.empty()) throw ConfigError("reference_dt: eps_list is empty");
  return 0.5 * dt_for(eps_list.back());
}

ScalarField RunConfig::initial_density() const {
  const SpatialGrid g = spatial_grid();
  ScalarField rho(g);
  const double k = kTwoPi / g.L_x;
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i)
      rho.values(g.index(i, j)) = 1.0 + rho_amplitude * std::cos(k * g.coord(i));
  rho.values /= integrate(rho);
  return rho;
}

VectorField RunConfig::initial_velocity() const {
  const SpatialGrid g = spatial_grid();
  VectorField v(g);
  const double k = kTwoPi / g.L_x;
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const double x = k * g.coord(i);
      const double y = k * g.coord(j);
      const int c = g.index(i, j);
      v.x(c) = v_amplitude * std::sin(x) * std::cos(y);
      v.y(c) = -v_amplitude * std::cos(x) * std::sin(y);
    }
  return v;
}

VectorField RunConfig::initial_perturbation() const {
  const SpatialGrid g = spatial_grid();
  VectorField w(g);
  const double k = kTwoPi / g.L_x;
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const double y = k * g.coord(j);
      const int c = g.index(i, j);
      w.x(c) = w_amplitude * std::cos(y);
      w.y(c) = w_amplitude * std::sin(y);
    }
  return w;
}

RunConfig parse_run_config(const json& j) {
  reject_unknown_keys(j, "", {"schema", "grid", "eps_list", "time", "initial_data",
                              "diagnostics", "output_dir", "seed"});
  if (!j.contains("schema")) throw ConfigError("config: missing required key \"schema\"");
  RunConfig cfg;
  cfg.schema = static_cast<int>(get_integer(j.at("schema"), "schema"));
  if (cfg.schema != 1)
    throw ConfigError("config: unsupported schema " + std::to_string(cfg.schema) +
                      " (this build reads schema 1)");
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    reject_unknown_keys(g, "grid", {"n_x", "n_v", "length", "v_max"});
    if (g.contains("n_x")) cfg.n_x = static_cast<int>(get_integer(g.at("n_x"), "grid.n_x"));
    if (g.contains("n_v")) cfg.n_v = static_cast<int>(get_integer(g.at("n_v"), "grid.n_v"));
    if (g.contains("length")) cfg.length = get_number(g.at("length"), "grid.length");
    if (g.contains("v_max")) cfg.v_max = get_number(g.at("v_max"), "grid.v_max");
  }
  if (j.contains("eps_list")) {
    const json& e = j.at("eps_list");
    if (!e.is_array()) throw ConfigError("config: eps_list must be an array");
    cfg.eps_list.clear();
    for (std::size_t i = 0; i < e.size(); ++i)
      cfg.eps_list.push_back(get_number(e.at(i), "eps_list[" + std::to_string(i) + "]"));
  }
  if (j.contains("time")) {
    const json& t = j.at("time");
    reject_unknown_keys(t, "time", {"T", "record_interval", "cfl_fraction", "dt_cap"});
    if (t.contains("T")) cfg.T = get_number(t.at("T"), "time.T");
    if (t.contains("record_interval"))
      cfg.record_interval = get_number(t.at("record_interval"), "time.record_interval");
    if (t.contains("cfl_fraction"))
      cfg.cfl_fraction = get_number(t.at("cfl_fraction"), "time.cfl_fraction");
    if (t.contains("dt_cap")) cfg.dt_cap = get_number(t.at("dt_cap"), "time.dt_cap");
  }
  if (j.contains("initial_data")) {
    const json& d = j.at("initial_data");
    reject_unknown_keys(d, "initial_data",
                        {"recipe", "rho_amplitude", "v_amplitude", "w_amplitude"});
    if (d.contains("recipe")) cfg.recipe = get_string(d.at("recipe"), "initial_data.recipe");
    if (d.contains("rho_amplitude"))
      cfg.rho_amplitude = get_number(d.at("rho_amplitude"), "initial_data.rho_amplitude");
    if (d.contains("v_amplitude"))
      cfg.v_amplitude = get_number(d.at("v_amplitude"), "initial_data.v_amplitude");
    if (d.contains("w_amplitude"))
      cfg.w_amplitude = get_number(d.at("w_amplitude"), "initial_data.w_amplitude");
  }
  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    reject_unknown_keys(d, "diagnostics",
                        {"bl_stride", "bl_phase_stride", "bl_block", "bl_phase_block_x",
                         "bl_phase_block_v", "save_fields"});
    if (d.contains("bl_stride"))
      cfg.bl_stride = static_cast<int>(get_integer(d.at("bl_stride"), "diagnostics.bl_stride"));
    if (d.contains("bl_phase_stride"))
      cfg.bl_phase_stride =
          static_cast<int>(get_integer(d.at("bl_phase_stride"), "diagnostics.bl_phase_stride"));
    if (d.contains("bl_block"))
      cfg.bl_block = static_cast<int>(get_integer(d.at("bl_block"), "diagnostics.bl_block"));
    if (d.contains("bl_phase_block_x"))
      cfg.bl_phase_block_x =
          static_cast<int>(get_integer(d.at("bl_phase_block_x"), "diagnostics.bl_phase_block_x"));
    if (d.contains("bl_phase_block_v"))
      cfg.bl_phase_block_v =
          static_cast<int>(get_integer(d.at("bl_phase_block_v"), "diagnostics.bl_phase_block_v"));
    if (d.contains("save_fields"))
      cfg.save_fields = get_bool(d.at("save_fields"), "diagnostics.save_fields");
  }
  if (j.contains("output_dir")) cfg.output_dir = get_string(j.at("output_dir"), "output_dir");
  if (j.contains("seed")) {
    const json& s = j.at("seed");
    if (s.is_number_unsigned())
      cfg.seed = s.get<std::uint64_t>();
    else if (s.is_number_integer() && s.get<long long>() >= 0)
      cfg.seed = static_cast<std::uint64_t>(s.get<long long>());
    else
      throw ConfigError("config: seed must be a nonnegative integer");
  }
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& cfg) {
  return json{
      {"schema", cfg.schema},
      {"grid",
       {{"n_x", cfg.n_x}, {"n_v", cfg.n_v}, {"length", cfg.length}, {"v_max", cfg.v_max}}},
      {"eps_list", cfg.eps_list},
      {"time",
       {{"T", cfg.T},
        {"record_interval", cfg.record_interval},
        {"cfl_fraction", cfg.cfl_fraction},
        {"dt_cap", cfg.dt_cap}}},
      {"initial_data",
       {{"recipe", cfg.recipe},
        {"rho_amplitude", cfg.rho_amplitude},
        {"v_amplitude", cfg.v_amplitude},
        {"w_amplitude", cfg.w_amplitude}}},
      {"diagnostics",
       {{"bl_stride", cfg.bl_stride},
        {"bl_phase_stride", cfg.bl_phase_stride},
        {"bl_block", cfg.bl_block},
        {"bl_phase_block_x", cfg.bl_phase_block_x},
        {"bl_phase_block_v", cfg.bl_phase_block_v},
        {"save_fields", cfg.save_fields}}},
      {"output_dir", cfg.output_dir},
      {"seed", cfg.seed},
  };
}

PreparedState init_well_prepared(const ScalarField& rho0, const VectorField& v0,
                                 const VelocityGrid& vg) {
  return init_scaled_well_prepared(rho0, v0, VectorField(rho0.grid), vg);
}

PreparedState init_scaled_well_prepared(const ScalarField& rho0, const VectorField& v0,
                                        const VectorField& w, const VelocityGrid& vg) {
  if (!(rho0.grid == v0.grid) || !(rho0.grid == w.grid))
    throw ConfigError("init: rho0, v0, w must share one spatial grid");
  if (!(rho0.values > 0.0).all()) throw ConfigError("init: rho0 must be strictly positive");
  if (std::abs(integrate(rho0) - 1.0) > 1e-8)
    throw ConfigError("init: rho0 must have unit mass");
  if (spectral_div(v0).values.abs().maxCoeff() > 1e-8)
    throw ConfigError("init: v0 must be divergence-free");
  if (w.squared_norm().maxCoeff() > 1.0 + 1e-12)
    throw ConfigError("init: perturbation must satisfy |w| <= 1");
  PhaseDensity f = maxwellian(rho0, w, vg);
  // The truncated Gaussian tail leaks O(1e-7) mass per cell at |w| = 1; rescale
  // each spatial cell so the discrete velocity marginal equals rho0 exactly.
  ScalarField marginal = moment_density(f);
  f.values.colwise() *= (rho0.values / marginal.values);
  return {std::move(f), FluidState(v0)};
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw ConfigError("fit_rate: need at least 3 points, got " + std::to_string(points.size()));
  std::vector<double> eps, err;
  eps.reserve(points.size());
  err.reserve(points.size());
  for (const auto& [e, v] : points) {
    if (!(e > 0.0) || !(v > 0.0))
      throw ConfigError("fit_rate: nonpositive point (" + format_double(e) + ", " +
                        format_double(v) + ")");
    eps.push_back(e);
    err.push_back(v);
  }
  std::vector<double> distinct = eps;
  std::sort(distinct.begin(), distinct.end());
  if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2)
    throw ConfigError("fit_rate: all abscissae coincide; slope is undetermined");
  return fit_rate(eps, err, 0.0);  // every point is positive, so none are dropped
}

AuditReport modulated_energy_audit(const std::vector<CoupledSample>& traj,
                                   const std::vector<LimitSample>& limit_traj, double eps) {
  if (traj.empty() || limit_traj.empty()) throw ConfigError("audit: empty trajectory");
  if (traj.size() != limit_traj.size())
    throw ConfigError("audit: trajectory lengths differ (" + std::to_string(traj.size()) +
                      " coupled vs " + std::to_string(limit_traj.size()) + " limit records)");
  const std::size_t R = traj.size();
  const SpatialGrid xg = traj[0].kinetic.f.xg;
  const VelocityGrid vg = traj[0].kinetic.f.vg;
  if (!(xg == limit_traj[0].state.rho.grid))
    throw ConfigError("audit: coupled and limit spatial grids differ");
  for (std::size_t k = 0; k < R; ++k) {
    if (std::abs(traj[k].kinetic.eps - eps) > 1e-12)
      throw ConfigError("audit: record " + std::to_string(k) + " was run at eps " +
                        format_double(traj[k].kinetic.eps) + ", not " + format_double(eps));
    if (std::abs(traj[k].kinetic.t - limit_traj[k].state.t) > 1e-9)
      throw ConfigError("audit: record times misaligned at index " + std::to_string(k));
  }
  double dt_rec = 0.0;
  if (R >= 2) {
    dt_rec = traj[1].kinetic.t - traj[0].kinetic.t;
    for (std::size_t k = 1; k < R; ++k)
      if (std::abs(traj[k].kinetic.t - traj[k - 1].kinetic.t - dt_rec) > 1e-9)
        throw ConfigError("audit: record times are not uniformly spaced");
  }

  const std::vector<ScalarField> rhos = limit_densities(limit_traj);
  const std::vector<VectorField> vs = limit_velocities(limit_traj);
  const auto ops = spectral_ops(xg);
  const double area = xg.cell_area();
  const double eps2 = eps * eps;

  // Instantaneous rates at each record; integrated below.
  struct Point {
    double entropy, gap;
    double dkin, ddef, dfl;
    double stress, advection, density, residual;
    double mke_rate;
  };
  std::vector<Point> pts(R);
  for (std::size_t k = 0; k < R; ++k) {
    const PhaseDensity& f = traj[k].kinetic.f;
    const VectorField& v_sys = traj[k].fluid.v;
    const ScalarField& rho = rhos[k];
    const VectorField& v = vs[k];
    Point& p = pts[k];

    const VectorField u_eps = effective_velocity(rho, v, eps);
    p.entropy = relative_entropy(f, maxwellian(rho, u_eps, vg));
    const VectorField dv = sub(v_sys, v);
    p.gap = 0.5 * l2_norm_sq(dv);

    p.dkin = dissipation_split(f, v_sys, eps).kinetic / eps2;
    const ScalarField rho_f = moment_density(f);
    const VectorField u_f = bulk_velocity(f).u;
    {
      const Eigen::ArrayXd gx = (u_eps.x - u_f.x) - eps * (v.x - v_sys.x);
      const Eigen::ArrayXd gy = (u_eps.y - u_f.y) - eps * (v.y - v_sys.y);
      p.ddef = (rho_f.values * (gx.square() + gy.square())).sum() * area / eps2;
    }
    p.dfl = ops->h1_seminorm_sq(dv.x) + ops->h1_seminorm_sq(dv.y);
    p.mke_rate =
        (rho_f.values * ((u_f.x - u_eps.x).square() + (u_f.y - u_eps.y).square())).sum() * area;

    // Stress flux against grad u_eps via raw moments:
    // iint f (u-xi)x(u-xi) = rho u x u - u x m - m x u + P, minus rho I.
    {
      const VectorField m = moment_momentum(f);
      const auto P = moment_pressure(f);
      const Eigen::ArrayXd b11 =
          rho_f.values * u_eps.x.square() - 2.0 * u_eps.x * m.x + P[0].values - rho_f.values;
      const Eigen::ArrayXd b12 =
          rho_f.values * u_eps.x * u_eps.y - u_eps.x * m.y - m.x * u_eps.y + P[1].values;
      const Eigen::ArrayXd b22 =
          rho_f.values * u_eps.y.square() - 2.0 * u_eps.y * m.y + P[2].values - rho_f.values;
      Eigen::ArrayXd du1_1, du1_2, du2_1, du2_2;
      ops->grad(u_eps.x, du1_1, du1_2);
      ops->grad(u_eps.y, du2_1, du2_2);
      p.stress =
          -(b11 * du1_1 + b22 * du2_2 + b12 * (du1_2 + du2_1)).sum() * area / eps;
    }
    {
      Eigen::ArrayXd dv1_1, dv1_2, dv2_1, dv2_2;
      ops->grad(v.x, dv1_1, dv1_2);
      ops->grad(v.y, dv2_1, dv2_2);
      p.advection = (dv.x.square() * dv1_1 + dv.x * dv.y * (dv1_2 + dv2_1) +
                     dv.y.square() * dv2_2)
                        .sum() *
                    area;
    }
    {
      ScalarField log_rho(xg, rho.values.log());
      const VectorField glr = spectral_grad(log_rho);
      p.density =
          ((rho_f.values - rho.values) * (dv.x * glr.x + dv.y * glr.y)).sum() * area;
    }
    if (R >= 2) {
      const ResidualField res = residual_e_eps(rhos, vs, eps, dt_rec, k);
      p.residual = (rho_f.values * ((u_eps.x - u_f.x) * res.e.x + (u_eps.y - u_f.y) * res.e.y))
                       .sum() *
                   area;
    } else {
      p.residual = 0.0;
    }
  }

  AuditReport rep;
  rep.initial_entropy = relative_entropy(traj[0].kinetic.f,
                                         maxwellian(rhos[0], VectorField(xg), vg));
  rep.initial_gap_sq = 2.0 * pts[0].gap;
  const double base = pts[0].entropy + pts[0].gap;

  rep.records.resize(R);
  double acc_dkin = 0, acc_ddef = 0, acc_dfl = 0;
  double acc_stress = 0, acc_adv = 0, acc_dens = 0, acc_resid = 0, acc_mke = 0;
  for (std::size_t k = 0; k < R; ++k) {
    if (k > 0) {
      const double dt = traj[k].kinetic.t - traj[k - 1].kinetic.t;
      const Point& a = pts[k - 1];
      const Point& b = pts[k];
      // Dissipation (lhs): min-endpoint rectangles, a lower bound, so quadrature
      // cannot manufacture a violation; the relaxation layer decays on the eps^2
      // timescale and a trapezoid would overweight it at small eps.
      acc_dkin += dt * std::min(a.dkin, b.dkin);
      acc_ddef += dt * std::min(a.ddef, b.ddef);
      acc_dfl += dt * std::min(a.dfl, b.dfl);
      // Sign-indefinite error terms (rhs): trapezoids.
      acc_stress += dt * 0.5 * (a.stress + b.stress);
      acc_adv += dt * 0.5 * (a.advection + b.advection);
      acc_dens += dt * 0.5 * (a.density + b.density);
      acc_resid += dt * 0.5 * (a.residual + b.residual);
      acc_mke += dt * 0.5 * (a.mke_rate + b.mke_rate);
    }
    AuditRecord& rec = rep.records[k];
    rec.t = traj[k].kinetic.t;
    rec.entropy = pts[k].entropy;
    rec.fluid_gap_sq = pts[k].gap;
    rec.diss_kinetic = acc_dkin;
    rec.diss_defect = acc_ddef;
    rec.diss_fluid = acc_dfl;
    rec.err_stress = acc_stress;
    rec.err_advection = acc_adv;
    rec.err_density = acc_dens;
    rec.err_residual = acc_resid;
    rec.lhs = rec.entropy + rec.fluid_gap_sq + acc_dkin + acc_ddef + acc_dfl;
    rec.rhs = base + acc_stress + acc_adv + acc_dens + acc_resid;
    rec.slack = rec.rhs - rec.lhs;
    rec.mke = acc_mke / (2.0 * eps2);
  }

  rep.min_slack = rep.records[0].slack;
  rep.min_margin = rep.records[0].slack + kAuditSlackTol * (1.0 + std::abs(rep.records[0].rhs));
  for (const AuditRecord& rec : rep.records) {
    rep.min_slack = std::min(rep.min_slack, rec.slack);
    rep.min_margin =
        std::min(rep.min_margin, rec.slack + kAuditSlackTol * (1.0 + std::abs(rec.rhs)));
  }
  rep.holds = rep.min_margin >= 0.0;
  rep.mke_total = rep.records.back().mke;
  rep.gronwall_c = rep.mke_total / (eps2 + rep.initial_entropy + rep.initial_gap_sq);
  return rep;
}

void write_audit_csv(const fs::path& path, const AuditReport& report) {
  std::ofstream os(path);
  if (!os) throw ConfigError("audit: cannot open " + path.string() + " for writing");
  os << "t,entropy,fluid_gap_sq,diss_kinetic,diss_defect,diss_fluid,err_stress,"
        "err_advection,err_density,err_residual,lhs,rhs,slack,mke\n";
  for (const AuditRecord& r : report.records) {
    const double cols[] = {r.t,          r.entropy,       r.fluid_gap_sq, r.diss_kinetic,
                           r.diss_defect, r.diss_fluid,   r.err_stress,   r.err_advection,
                           r.err_density, r.err_residual, r.lhs,          r.rhs,
                           r.slack,       r.mke};
    for (std::size_t i = 0; i < std::size(cols); ++i)
      os << (i ? "," : "") << format_double(cols[i]);
    os << '\n';
  }
}

std::vector<CoupledSample> run_eps_system(const RunConfig& cfg, double eps) {
  if (!(eps > 0.0) || eps > 1.0) throw ConfigError("run_eps_system: eps must lie in (0, 1]");
  const ScalarField rho0 = cfg.initial_density();
  const VectorField v0 = cfg.initial_velocity();
  const VelocityGrid vg = cfg.velocity_grid();
  PreparedState init = cfg.w_amplitude > 0.0
                           ? init_scaled_well_prepared(rho0, v0, cfg.initial_perturbation(), vg)
                           : init_well_prepared(rho0, v0, vg);
  CoupledPlan plan;
  plan.dt = cfg.dt_for(eps);
  plan.record_stride = cfg.record_stride_for(eps);
  plan.cfl_fraction = cfg.cfl_fraction;
  return run_coupled(init.f, init.fluid, eps, cfg.T, plan);
}

std::vector<LimitSample> run_reference(const RunConfig& cfg) {
  LimitPlan plan;
  plan.dt = cfg.reference_dt();
  plan.record_stride = std::lround(cfg.record_interval / plan.dt);
  return run_limit(cfg.initial_density(), FluidState(cfg.initial_velocity()), cfg.T, plan);
}

namespace {

void write_limit_outputs(const fs::path& dir, const std::vector<LimitSample>& ltraj) {
  fs::create_directories(dir / "fields");
  std::ofstream csv(dir / "limit.csv");
  csv << "t,mass,min_rho,max_rho,grad_phi_sup\n";
  for (std::size_t k = 0; k < ltraj.size(); ++k) {
    const LimitSample& s = ltraj[k];
    const double cols[] = {s.state.t, s.mass, s.min_rho, s.max_rho, s.grad_phi_sup};
    for (std::size_t i = 0; i < std::size(cols); ++i)
      csv << (i ? "," : "") << format_double(cols[i]);
    csv << '\n';
    const std::string tag = index_tag(k);
    const json meta{{"t", s.state.t}};
    write_field(dir / "fields" / ("rho_" + tag + ".bin"), "limit_density", s.state.rho, meta);
    write_field(dir / "fields" / ("v_" + tag + ".bin"), "limit_velocity", s.state.fluid.v, meta);
  }
}

// All per-run reductions plus the post-hoc comparison columns of the stored
// diagnostics (run_coupled leaves them zero; the sweep owns the reference).
EpsReduction reduce_run(const RunConfig& cfg, double eps, const std::vector<CoupledSample>& traj,
                        const std::vector<LimitSample>& ltraj, const AuditReport& audit,
                        std::vector<DiagnosticsRecord>& recs_out) {
  const std::size_t R = traj.size();
  const SpatialGrid xg = traj[0].kinetic.f.xg;
  const VelocityGrid vg = traj[0].kinetic.f.vg;
  const auto ops = spectral_ops(xg);
  const MetricGraph graph_x = torus_graph(xg, cfg.bl_block);
  const MetricGraph graph_p = phase_graph(xg, vg, cfg.bl_phase_block_x, cfg.bl_phase_block_v);

  EpsReduction red;
  red.eps = eps;
  red.dt = cfg.dt_for(eps);
  red.audit_min_slack = audit.min_slack;
  red.audit_min_margin = audit.min_margin;
  red.audit_holds = audit.holds;
  red.mke_total = audit.mke_total;
  red.gronwall_c = audit.gronwall_c;

  recs_out.clear();
  recs_out.reserve(R);
  double prev_t = 0, prev_h1 = 0, prev_mom = 0;
  const double layer_end = kLayerEFolds * eps * eps * (1.0 - 1e-12);
  bool bulk_seen = false;
  double last_l1h = 0;
  std::vector<std::pair<double, double>> bl_f_sq;  // (t, d_BL^2) at sampled records
  for (std::size_t k = 0; k < R; ++k) {
    const PhaseDensity& f = traj[k].kinetic.f;
    const VectorField& v_sys = traj[k].fluid.v;
    const ScalarField& rho = ltraj[k].state.rho;
    const VectorField& v = ltraj[k].state.fluid.v;
    const double t = traj[k].kinetic.t;
    DiagnosticsRecord rec = traj[k].diag;

    const PhaseDensity m0 = maxwellian(rho, VectorField(xg), vg);
    PhaseDensity diff(xg, vg);
    diff.values = f.values - m0.values;
    const double l1f = l1_norm_phase(diff);
    const PhaseDensity f1 = corrector_f1(rho, v, vg);
    red.max_f1_marginal =
        std::max(red.max_f1_marginal, moment_density(f1).values.abs().maxCoeff());
    diff.values -= eps * f1.values;
    const double l1h = l1_norm_phase(diff);

    const ScalarField rho_f = moment_density(f);
    ScalarField drho(xg, rho_f.values - rho.values);
    const double l1r = l1_norm(drho);
    const VectorField dv = sub(v_sys, v);
    const double l2v = std::sqrt(l2_norm_sq(dv));
    const double h1 = ops->h1_seminorm_sq(dv.x) + ops->h1_seminorm_sq(dv.y);

    ScalarField log_rho(xg, rho.values.log());
    const VectorField glr = spectral_grad(log_rho);
    const VectorField m = moment_momentum(f);
    VectorField mom(xg, m.x / eps - rho.values * (v.x - glr.x),
                    m.y / eps - rho.values * (v.y - glr.y));
    const double l1m = l1_norm(mom);

    if (k > 0) {
      const double dt = t - prev_t;
      red.int_h1_v += dt * 0.5 * (prev_h1 + h1);
      red.int_l1_momentum += dt * 0.5 * (prev_mom + l1m);
    }
    prev_t = t;
    prev_h1 = h1;
    prev_mom = l1m;

    red.sup_l1_f = std::max(red.sup_l1_f, l1f);
    red.sup_l1_hilbert = std::max(red.sup_l1_hilbert, l1h);
    if (t >= layer_end) {
      bulk_seen = true;
      red.sup_l1_hilbert_bulk = std::max(red.sup_l1_hilbert_bulk, l1h);
    }
    last_l1h = l1h;
    red.sup_l1_rho = std::max(red.sup_l1_rho, l1r);
    red.sup_l2_v = std::max(red.sup_l2_v, l2v);

    rec.l1_dist_f = l1f;
    rec.l1_dist_rho = l1r;
    rec.l2_dist_v = l2v;
    rec.h1_dist_v = std::sqrt(h1);

    const bool last = (k + 1 == R);
    if (k % static_cast<std::size_t>(cfg.bl_stride) == 0 || last) {
      const double d = bl_exact(measure_from_density(rho_f, cfg.bl_block),
                                measure_from_density(rho, cfg.bl_block), graph_x);
      red.sup_bl_rho = std::max(red.sup_bl_rho, d);
      rec.bl_dist_rho = d;
    }
    if (k % static_cast<std::size_t>(cfg.bl_phase_stride) == 0 || last) {
      const double d =
          bl_exact(measure_from_phase(f, cfg.bl_phase_block_x, cfg.bl_phase_block_v),
                   measure_from_phase(m0, cfg.bl_phase_block_x, cfg.bl_phase_block_v), graph_p);
      bl_f_sq.emplace_back(t, d * d);
      rec.bl_dist_f = d;
    }
    recs_out.push_back(rec);
  }
  for (std::size_t i = 1; i < bl_f_sq.size(); ++i)
    red.int_bl_f_sq += (bl_f_sq[i].first - bl_f_sq[i - 1].first) * 0.5 *
                       (bl_f_sq[i - 1].second + bl_f_sq[i].second);
  if (!bulk_seen) red.sup_l1_hilbert_bulk = last_l1h;
  return red;
}

json fit_to_json(const RateFit& f) {
  return json{{"slope", f.slope},
              {"intercept", f.intercept},
              {"residual", f.residual},
              {"used", f.used},
              {"degenerate", f.degenerate}};
}

RateFit fit_or_degenerate(const std::vector<EpsReduction>& runs,
                          double (*proj)(const EpsReduction&)) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(runs.size());
  for (const EpsReduction& r : runs) pts.emplace_back(r.eps, proj(r));
  try {
    return fit_rate(pts);
  } catch (const ConfigError&) {
    RateFit f;
    f.degenerate = true;
    return f;
  }
}

void fit_all(SweepResult& res) {
  res.fit_l1_f = fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.sup_l1_f; });
  res.fit_l1_hilbert =
      fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.sup_l1_hilbert; });
  res.fit_l1_rho =
      fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.sup_l1_rho; });
  res.fit_l2_v = fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.sup_l2_v; });
  res.fit_h1_v = fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.int_h1_v; });
  res.fit_momentum =
      fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.int_l1_momentum; });
  res.fit_bl_rho =
      fit_or_degenerate(res.runs, [](const EpsReduction& r) { return r.sup_bl_rho; });
  res.fit_bl_f = fit_or_degenerate(
      res.runs, [](const EpsReduction& r) { return std::sqrt(r.int_bl_f_sq); });
}

}  // namespace

SweepResult eps_sweep(const RunConfig& cfg) {
  if (cfg.eps_list.size() < 3)
    throw ConfigError("eps_sweep: rate fits need at least 3 eps values, got " +
                      std::to_string(cfg.eps_list.size()));
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  {
    std::ofstream os(out / "config.json");
    os << run_config_to_json(cfg).dump(2) << '\n';
  }

  SweepResult res;
  res.config = cfg;
  std::vector<LimitSample> ltraj;
  try {
    ltraj = run_reference(cfg);
  } catch (const NumericalFailure& e) {
    res.abort_reason = std::string("limit run: ") + e.what();
    emit_report(res, out);
    throw;
  }
  write_limit_outputs(out / "limit", ltraj);

  for (double eps : cfg.eps_list) {
    const fs::path run_dir = out / ("eps_" + format_double(eps));
    fs::create_directories(run_dir);
    std::vector<CoupledSample> traj;
    try {
      traj = run_eps_system(cfg, eps);
    } catch (const NumericalFailure& e) {
      res.abort_reason = "eps " + format_double(eps) + ": " + e.what();
      fit_all(res);
      emit_report(res, out);
      throw;
    }
    const AuditReport audit = modulated_energy_audit(traj, ltraj, eps);
    write_audit_csv(run_dir / "audit.csv", audit);
    std::vector<DiagnosticsRecord> recs;
    res.runs.push_back(reduce_run(cfg, eps, traj, ltraj, audit, recs));
    write_diagnostics_csv(run_dir / "diagnostics.csv", recs);
    write_diagnostics_jsonl(run_dir / "diagnostics.jsonl", recs);
    write_coupled_checkpoint(run_dir / "checkpoint", traj.back().kinetic, traj.back().fluid,
                             cfg);
    if (cfg.save_fields) {
      fs::create_directories(run_dir / "fields");
      for (std::size_t k = 0; k < traj.size(); ++k) {
        const std::string tag = index_tag(k);
        const json meta{{"t", traj[k].kinetic.t}, {"eps", eps}};
        write_field(run_dir / "fields" / ("f_" + tag + ".bin"), "phase_density",
                    traj[k].kinetic.f, meta);
        write_field(run_dir / "fields" / ("v_" + tag + ".bin"), "fluid_velocity",
                    traj[k].fluid.v, meta);
      }
    }
  }
  fit_all(res);
  res.complete = true;
  emit_report(res, out);
  return res;
}

SweepGate evaluate_sweep_gate(const SweepResult& sweep) {
  SweepGate gate;
  auto fail = [&](std::string msg) {
    gate.ok = false;
    gate.failures.push_back(std::move(msg));
  };
  if (!sweep.complete)
    fail("sweep incomplete" +
         (sweep.abort_reason.empty() ? std::string() : ": " + sweep.abort_reason));
  for (const EpsReduction& r : sweep.runs)
    if (!r.audit_holds)
      fail("modulated-energy audit violated at eps " + format_double(r.eps) + " (min margin " +
           format_double(r.audit_min_margin) + ")");
  if (sweep.fit_l1_f.degenerate)
    fail("sup_l1_f rate fit is degenerate");
  else if (sweep.fit_l1_f.slope < kSlopeBandL1F[0] || sweep.fit_l1_f.slope > kSlopeBandL1F[1])
    fail("sup_l1_f slope " + format_double(sweep.fit_l1_f.slope) + " outside [" +
         format_double(kSlopeBandL1F[0]) + ", " + format_double(kSlopeBandL1F[1]) + "]");
  if (sweep.fit_bl_rho.degenerate)
    fail("sup_bl_rho rate fit is degenerate");
  else if (sweep.fit_bl_rho.slope < kSlopeBandBLRho[0] ||
           sweep.fit_bl_rho.slope > kSlopeBandBLRho[1])
    fail("sup_bl_rho slope " + format_double(sweep.fit_bl_rho.slope) + " outside [" +
         format_double(kSlopeBandBLRho[0]) + ", " + format_double(kSlopeBandBLRho[1]) + "]");

  const struct {
    const char* name;
    double EpsReduction::* member;
  } series[] = {
      {"sup_l1_f", &EpsReduction::sup_l1_f},
      {"sup_l1_hilbert", &EpsReduction::sup_l1_hilbert},
      {"sup_l1_rho", &EpsReduction::sup_l1_rho},
      {"sup_l2_v", &EpsReduction::sup_l2_v},
      {"int_h1_v", &EpsReduction::int_h1_v},
      {"int_l1_momentum", &EpsReduction::int_l1_momentum},
      {"sup_bl_rho", &EpsReduction::sup_bl_rho},
      {"int_bl_f_sq", &EpsReduction::int_bl_f_sq},
  };
  for (const auto& s : series)
    for (std::size_t i = 0; i + 1 < sweep.runs.size(); ++i) {
      // The pair involving the largest eps gets a 5% allowance (it sits closest
      // to the preasymptotic regime); later pairs only get roundoff slack.
      const double tol = (i == 0) ? kMonotoneTolLargestEps : 1e-9;
      const double hi = sweep.runs[i].*(s.member);
      const double lo = sweep.runs[i + 1].*(s.member);
      if (lo > hi * (1.0 + tol))
        fail(std::string(s.name) + " not monotone: " + format_double(lo) + " at eps " +
             format_double(sweep.runs[i + 1].eps) + " exceeds " + format_double(hi) +
             " at eps " + format_double(sweep.runs[i].eps));
    }

  for (const EpsReduction& r : sweep.runs)
    if (r.eps <= kHilbertImproveEps + 1e-12 && !(r.sup_l1_hilbert_bulk < r.sup_l1_f))
      fail("first-order corrector does not improve the post-layer residual at eps " +
           format_double(r.eps) + " (" + format_double(r.sup_l1_hilbert_bulk) +
           " >= " + format_double(r.sup_l1_f) + ")");
  return gate;
}

namespace {

struct SvgSeries {
  const char* name;
  const char* color;
  std::vector<std::pair<double, double>> pts;  // (eps, value), positive entries only
  const RateFit* fit;
};

void write_report_svg(const fs::path& path, const SweepResult& sweep) {
  std::vector<SvgSeries> series{
      {"sup_l1_f", "#1f77b4", {}, &sweep.fit_l1_f},
      {"sup_l1_hilbert", "#d62728", {}, &sweep.fit_l1_hilbert},
      {"sup_l1_rho", "#2ca02c", {}, &sweep.fit_l1_rho},
      {"sup_l2_v", "#9467bd", {}, &sweep.fit_l2_v},
      {"int_h1_v", "#ff7f0e", {}, &sweep.fit_h1_v},
      {"int_l1_momentum", "#8c564b", {}, &sweep.fit_momentum},
      {"sup_bl_rho", "#17becf", {}, &sweep.fit_bl_rho},
      {"sqrt_int_bl_f_sq", "#7f7f7f", {}, &sweep.fit_bl_f},
  };
  auto value_of = [](const EpsReduction& r, std::size_t s) {
    switch (s) {
      case 0: return r.sup_l1_f;
      case 1: return r.sup_l1_hilbert;
      case 2: return r.sup_l1_rho;
      case 3: return r.sup_l2_v;
      case 4: return r.int_h1_v;
      case 5: return r.int_l1_momentum;
      case 6: return r.sup_bl_rho;
      default: return std::sqrt(r.int_bl_f_sq);
    }
  };
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool any = false;
  for (std::size_t s = 0; s < series.size(); ++s)
    for (const EpsReduction& r : sweep.runs) {
      const double v = value_of(r, s);
      if (!(r.eps > 0.0) || !(v > 0.0)) continue;
      const double lx = std::log10(r.eps);
      const double ly = std::log10(v);
      if (!any) {
        x_lo = x_hi = lx;
        y_lo = y_hi = ly;
        any = true;
      }
      x_lo = std::min(x_lo, lx);
      x_hi = std::max(x_hi, lx);
      y_lo = std::min(y_lo, ly);
      y_hi = std::max(y_hi, ly);
      series[s].pts.emplace_back(lx, ly);
    }
  if (!any) {
    x_lo = -2;
    x_hi = 0;
    y_lo = -2;
    y_hi = 0;
  }
  if (x_hi - x_lo < 1e-9) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo < 1e-9) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad_x = 0.06 * (x_hi - x_lo);
  const double pad_y = 0.06 * (y_hi - y_lo);
  x_lo -= pad_x;
  x_hi += pad_x;
  y_lo -= pad_y;
  y_hi += pad_y;

  const double px0 = 70, px1 = 540, py0 = 25, py1 = 435;
  auto X = [&](double lx) { return px0 + (lx - x_lo) / (x_hi - x_lo) * (px1 - px0); };
  auto Y = [&](double ly) { return py1 - (ly - y_lo) / (y_hi - y_lo) * (py1 - py0); };

  std::ofstream os(path);
  if (!os) throw ConfigError("report: cannot open " + path.string() + " for writing");
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
        "viewBox=\"0 0 720 480\">\n";
  os << "<rect width=\"720\" height=\"480\" fill=\"#ffffff\"/>\n";
  os << "<rect x=\"" << format_double(px0) << "\" y=\"" << format_double(py0) << "\" width=\""
     << format_double(px1 - px0) << "\" height=\"" << format_double(py1 - py0)
     << "\" fill=\"none\" stroke=\"#000000\"/>\n";
  os << "<text x=\"" << format_double(0.5 * (px0 + px1))
     << "\" y=\"472\" text-anchor=\"middle\" font-family=\"monospace\" "
        "font-size=\"13\">eps</text>\n";
  os << "<text x=\"16\" y=\"" << format_double(0.5 * (py0 + py1))
     << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\" "
        "transform=\"rotate(-90 16 "
     << format_double(0.5 * (py0 + py1)) << ")\">reduction</text>\n";

  for (int d = static_cast<int>(std::ceil(x_lo)); d <= static_cast<int>(std::floor(x_hi)); ++d) {
    const double x = X(d);
    os << "<line x1=\"" << format_double(x) << "\" y1=\"" << format_double(py1) << "\" x2=\""
       << format_double(x) << "\" y2=\"" << format_double(py1 + 6)
       << "\" stroke=\"#000000\"/>\n";
    os << "<text x=\"" << format_double(x)
       << "\" y=\"452\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">1e"
       << d << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(y_lo)); d <= static_cast<int>(std::floor(y_hi)); ++d) {
    const double y = Y(d);
    os << "<line x1=\"" << format_double(px0 - 6) << "\" y1=\"" << format_double(y)
       << "\" x2=\"" << format_double(px0) << "\" y2=\"" << format_double(y)
       << "\" stroke=\"#000000\"/>\n";
    os << "<text x=\"" << format_double(px0 - 10) << "\" y=\"" << format_double(y + 4)
       << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\">1e" << d
       << "</text>\n";
  }

  const double ln10 = std::numbers::ln10;
  for (const SvgSeries& s : series) {
    if (s.fit && !s.fit->degenerate && any) {
      const double b = s.fit->intercept / ln10;
      os << "<polyline id=\"fit_" << s.name << "\" class=\"fit\" fill=\"none\" stroke=\""
         << s.color << "\" stroke-dasharray=\"6 4\" points=\""
         << format_double(X(x_lo)) << "," << format_double(Y(s.fit->slope * x_lo + b)) << " "
         << format_double(X(x_hi)) << "," << format_double(Y(s.fit->slope * x_hi + b))
         << "\"/>\n";
    }
    os << "<polyline id=\"series_" << s.name << "\" class=\"series\" fill=\"none\" stroke=\""
       << s.color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.pts.size(); ++i)
      os << (i ? " " : "") << format_double(X(s.pts[i].first)) << ","
         << format_double(Y(s.pts[i].second));
    os << "\"/>\n";
    for (const auto& [lx, ly] : s.pts)
      os << "<circle cx=\"" << format_double(X(lx)) << "\" cy=\"" << format_double(Y(ly))
         << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
  }

  double ly = 40;
  for (const SvgSeries& s : series) {
    os << "<line x1=\"552\" y1=\"" << format_double(ly - 4) << "\" x2=\"572\" y2=\""
       << format_double(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"3\"/>\n";
    os << "<text x=\"578\" y=\"" << format_double(ly)
       << "\" font-family=\"monospace\" font-size=\"11\">" << s.name;
    if (s.fit && !s.fit->degenerate) os << " (" << format_double(s.fit->slope) << ")";
    os << "</text>\n";
    ly += 20;
  }
  os << "</svg>\n";
}

}  // namespace

void emit_report(const SweepResult& sweep, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir / "report.csv");
    if (!csv) throw ConfigError("report: cannot open report.csv for writing");
    csv << "eps,dt,sup_l1_f,sup_l1_hilbert,sup_l1_hilbert_bulk,max_f1_marginal,sup_l1_rho,"
           "sup_l2_v,int_h1_v,int_l1_momentum,sup_bl_rho,int_bl_f_sq,audit_min_slack,"
           "audit_min_margin,audit_holds,mke_total,gronwall_c\n";
    for (const EpsReduction& r : sweep.runs) {
      const double cols[] = {r.eps,         r.dt,           r.sup_l1_f,
                             r.sup_l1_hilbert, r.sup_l1_hilbert_bulk, r.max_f1_marginal,
                             r.sup_l1_rho,  r.sup_l2_v,     r.int_h1_v,
                             r.int_l1_momentum, r.sup_bl_rho, r.int_bl_f_sq,
                             r.audit_min_slack, r.audit_min_margin};
      for (std::size_t i = 0; i < std::size(cols); ++i)
        csv << (i ? "," : "") << format_double(cols[i]);
      csv << ',' << (r.audit_holds ? 1 : 0) << ',' << format_double(r.mke_total) << ','
          << format_double(r.gronwall_c) << '\n';
    }
  }
  {
    json runs = json::array();
    for (const EpsReduction& r : sweep.runs)
      runs.push_back(json{{"eps", r.eps},
                          {"dt", r.dt},
                          {"sup_l1_f", r.sup_l1_f},
                          {"sup_l1_hilbert", r.sup_l1_hilbert},
                          {"sup_l1_hilbert_bulk", r.sup_l1_hilbert_bulk},
                          {"max_f1_marginal", r.max_f1_marginal},
                          {"sup_l1_rho", r.sup_l1_rho},
                          {"sup_l2_v", r.sup_l2_v},
                          {"int_h1_v", r.int_h1_v},
                          {"int_l1_momentum", r.int_l1_momentum},
                          {"sup_bl_rho", r.sup_bl_rho},
                          {"int_bl_f_sq", r.int_bl_f_sq},
                          {"audit_min_slack", r.audit_min_slack},
                          {"audit_min_margin", r.audit_min_margin},
                          {"audit_holds", r.audit_holds},
                          {"mke_total", r.mke_total},
                          {"gronwall_c", r.gronwall_c}});
    const SweepGate gate = evaluate_sweep_gate(sweep);
    const json j{{"schema", 1},
                 {"config", run_config_to_json(sweep.config)},
                 {"complete", sweep.complete},
                 {"abort_reason", sweep.abort_reason},
                 {"runs", runs},
                 {"fits",
                  {{"sup_l1_f", fit_to_json(sweep.fit_l1_f)},
                   {"sup_l1_hilbert", fit_to_json(sweep.fit_l1_hilbert)},
                   {"sup_l1_rho", fit_to_json(sweep.fit_l1_rho)},
                   {"sup_l2_v", fit_to_json(sweep.fit_l2_v)},
                   {"int_h1_v", fit_to_json(sweep.fit_h1_v)},
                   {"int_l1_momentum", fit_to_json(sweep.fit_momentum)},
                   {"sup_bl_rho", fit_to_json(sweep.fit_bl_rho)},
                   {"sqrt_int_bl_f_sq", fit_to_json(sweep.fit_bl_f)}}},
                 {"gate", {{"ok", gate.ok}, {"failures", gate.failures}}}};
    std::ofstream os(out_dir / "summary.json");
    if (!os) throw ConfigError("report: cannot open summary.json for writing");
    os << j.dump(2) << '\n';
  }
  write_report_svg(out_dir / "report.svg", sweep);
}

void write_coupled_checkpoint(const fs::path& dir, const KineticState& ks, const FluidState& fl,
                              const RunConfig& cfg) {
  fs::create_directories(dir);
  write_checkpoint(dir / "f.bin", ks);
  write_field(dir / "v.bin", "fluid_velocity", fl.v, json{{"t", fl.t}});
  const json meta{
      {"schema", 1}, {"t", ks.t}, {"eps", ks.eps}, {"config", run_config_to_json(cfg)}};
  std::ofstream os(dir / "meta.json");
  if (!os) throw ConfigError("checkpoint: cannot open meta.json for writing");
  os << meta.dump(2) << '\n';
}

ResumePoint read_coupled_checkpoint(const fs::path& dir) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw ConfigError("checkpoint: cannot open " + (dir / "meta.json").string());
  json meta;
  try {
    is >> meta;
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint: meta.json is not valid JSON: " + std::string(e.what()));
  }
  reject_unknown_keys(meta, "checkpoint", {"schema", "t", "eps", "config"});
  for (const char* k : {"schema", "t", "eps", "config"})
    if (!meta.contains(k))
      throw ConfigError("checkpoint: meta.json is missing \"" + std::string(k) + "\"");
  if (get_integer(meta.at("schema"), "checkpoint.schema") != 1)
    throw ConfigError("checkpoint: unsupported schema");
  RunConfig cfg = parse_run_config(meta.at("config"));
  KineticState ks = read_checkpoint(dir / "f.bin");
  VectorField v = read_vector_field(dir / "v.bin");
  if (!(ks.f.xg == cfg.spatial_grid()) || !(ks.f.vg == cfg.velocity_grid()))
    throw ConfigError("checkpoint: stored state does not match the stored config's grids");
  if (!(v.grid == ks.f.xg))
    throw ConfigError("checkpoint: fluid and kinetic grids differ");
  const double t = get_number(meta.at("t"), "checkpoint.t");
  if (std::abs(t - ks.t) > 1e-9)
    throw ConfigError("checkpoint: meta time disagrees with the kinetic state");
  if (std::abs(get_number(meta.at("eps"), "checkpoint.eps") - ks.eps) > 1e-12)
    throw ConfigError("checkpoint: meta eps disagrees with the kinetic state");
  FluidState fl(std::move(v), t);
  return {std::move(ks), std::move(fl), std::move(cfg)};
}

SuiteReport oracle_identity_suite(std::uint64_t seed, long n_states, long n_pairs) {
  const SpatialGrid xg(16, kTwoPi);
  const VelocityGrid vg(32, 6.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  std::uniform_real_distribution<double> drift(-1.0, 1.0);
  std::uniform_real_distribution<double> eps_draw(0.05, 1.0);

  auto random_phase = [&]() {
    PhaseDensity f(xg, vg);
    for (Eigen::Index c = 0; c < f.values.cols(); ++c)
      for (Eigen::Index r = 0; r < f.values.rows(); ++r) f.values(r, c) = unif(rng);
    f.values /= integrate_phase(f);
    return f;
  };
  auto random_density = [&]() {
    ScalarField rho(xg);
    for (Eigen::Index i = 0; i < rho.values.size(); ++i) rho.values(i) = unif(rng);
    rho.values /= integrate(rho);
    return rho;
  };
  auto random_field = [&]() {
    VectorField u(xg);
    for (Eigen::Index i = 0; i < u.x.size(); ++i) {
      u.x(i) = drift(rng);
      u.y(i) = drift(rng);
    }
    return u;
  };

  SuiteReport rep;
  auto note = [&](double err, double tol, const char* what) {
    ++rep.checked;
    rep.worst = std::max(rep.worst, err);
    if (!(err <= tol)) {
      ++rep.failed;
      if (rep.detail.empty())
        rep.detail = std::string(what) + " off by " + format_double(err);
    }
  };

  for (long s = 0; s < n_states; ++s) {
    const PhaseDensity f = random_phase();
    const ScalarField rho = random_density();
    const VectorField u = random_field();
    const EntropyParts parts = entropy_decomposition(f, rho, u);
    const PhaseDensity M = maxwellian(rho, u, vg);
    // Bregman bookkeeping: the three-way split equals the direct relative
    // entropy plus the mass difference of the two states.
    const double direct =
        relative_entropy(f, M) + (integrate_phase(f) - integrate_phase(M));
    note(std::abs(parts.sum() - direct) / std::max(1.0, std::abs(direct)), 1e-6,
         "entropy decomposition");

    const double eps = eps_draw(rng);
    const DissipationParts d = dissipation_split(f, random_field(), eps);
    note(std::abs(d.total - (d.kinetic + d.alignment)) / std::max(1.0, std::abs(d.total)),
         1e-6, "dissipation split");
  }
  for (long p = 0; p < n_pairs; ++p) {
    const PhaseDensity f = random_phase();
    const PhaseDensity M = random_phase();
    const CkpResult c = ckp_check(f, M);
    const double excess = std::max(0.0, (c.lhs - c.rhs) / std::max(1.0, c.rhs));
    note(excess, 0.0, "ckp comparison");
  }
  if (rep.detail.empty())
    rep.detail = std::to_string(rep.checked) + " identities checked, worst deviation " +
                 format_double(rep.worst);
  return rep;
}

SuiteReport oracle_bl_suite(std::uint64_t seed, long n_instances) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> node_draw(2, 64);
  std::uniform_real_distribution<double> weight(0.2, 2.0);
  std::uniform_real_distribution<double> mass(0.05, 1.0);
  std::uniform_real_distribution<double> dist(0.05, 3.0);
  std::bernoulli_distribution zero(0.3);
  std::bernoulli_distribution chord(0.1);

  SuiteReport rep;
  auto note = [&](double err, double tol, const char* what) {
    ++rep.checked;
    rep.worst = std::max(rep.worst, err);
    if (!(err <= tol)) {
      ++rep.failed;
      if (rep.detail.empty())
        rep.detail = std::string(what) + " off by " + format_double(err);
    }
  };

  for (long i = 0; i < n_instances; ++i) {
    const int n = node_draw(rng);
    MetricGraph g;
    g.nodes = n;
    for (int a = 0; a < n; ++a)
      if (n > 2 || a == 0) g.edges.push_back({a, (a + 1) % n, weight(rng)});
    int extra = 0;
    for (int a = 0; a < n && extra < 2 * n; ++a)
      for (int b = a + 2; b < n && extra < 2 * n; ++b)
        if (chord(rng)) {
          g.edges.push_back({a, b, weight(rng)});
          ++extra;
        }
    DiscreteMeasure mu, nu;
    mu.weights = Eigen::ArrayXd::Zero(n);
    nu.weights = Eigen::ArrayXd::Zero(n);
    for (int a = 0; a < n; ++a) {
      mu.weights(a) = zero(rng) ? 0.0 : mass(rng);
      nu.weights(a) = zero(rng) ? 0.0 : mass(rng);
    }
    if ((mu.weights > 0.0).count() == 0) mu.weights(0) = 0.5;
    if ((nu.weights > 0.0).count() == 0) nu.weights(n - 1) = 0.5;

    const double oracle = bl_oracle(mu, nu, g);
    note(std::abs(bl_exact(mu, nu, g) - oracle), 1e-7, "flow solver vs dense oracle");
    note(std::abs(bl_distance(mu, nu, g).value - oracle), 1e-6, "dual ascent vs dense oracle");

    // Two point masses at distance d: the closed form is 2d / (2 + d).
    const double d = dist(rng);
    MetricGraph g2;
    g2.nodes = 2;
    g2.edges.push_back({0, 1, d});
    DiscreteMeasure mu2, nu2;
    mu2.weights = Eigen::ArrayXd::Zero(2);
    nu2.weights = Eigen::ArrayXd::Zero(2);
    mu2.weights(0) = 1.0;
    nu2.weights(1) = 1.0;
    const double closed = 2.0 * d / (2.0 + d);
    note(std::abs(bl_exact(mu2, nu2, g2) - closed), 1e-6, "two-point closed form (flow)");
    note(std::abs(bl_distance(mu2, nu2, g2).value - closed), 1e-6,
         "two-point closed form (ascent)");
  }
  if (rep.detail.empty())
    rep.detail = std::to_string(rep.checked) + " instances checked, worst deviation " +
                 format_double(rep.worst);
  return rep;
}

}  // namespace vfpns
