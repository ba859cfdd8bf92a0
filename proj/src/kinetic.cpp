#include "vfpns/kinetic.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "vfpns/errors.hpp"
#include "vfpns/io.hpp"
#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

namespace vfpns {

using Eigen::ArrayXcd;
using Eigen::ArrayXd;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using cd = std::complex<double>;

namespace {

// Periodic linear-interpolation shift: out_i = f(x_i - shift). For a constant shift
// this is a circulant convex combination, so rows and columns both sum to one:
// mass conserving and positivity preserving.
MatrixXd sl_shift_matrix(int n, double h, double shift) {
  const double delta = -shift / h;
  const double fl = std::floor(delta);
  const int k = static_cast<int>(fl);
  const double w = delta - fl;
  MatrixXd S = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const int j0 = ((i + k) % n + n) % n;
    S(i, j0) += 1.0 - w;
    S(i, (j0 + 1) % n) += w;
  }
  return S;
}

// One spatial shift operator per velocity coordinate value.
struct TransportOps {
  std::vector<MatrixXd> S;
};

std::shared_ptr<const TransportOps> transport_ops(const SpatialGrid& xg, const VelocityGrid& vg,
                                                  double dt_over_eps, TransportMethod method) {
  using Key = std::tuple<int, double, int, double, double, int>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const TransportOps>> cache;
  std::lock_guard<std::mutex> lock(mu);
  Key key{xg.n_x, xg.L_x, vg.n_v, vg.v_max, dt_over_eps, static_cast<int>(method)};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  auto ops = std::make_shared<TransportOps>();
  ops->S.reserve(vg.n_v);
  const auto spec = spectral_ops(xg);
  for (int a = 0; a < vg.n_v; ++a) {
    const double s = vg.coord(a) * dt_over_eps;
    ops->S.push_back(method == TransportMethod::spectral_shift
                         ? spec->shift_matrix(s)
                         : sl_shift_matrix(xg.n_x, xg.h(), s));
  }
  cache[key] = ops;
  return ops;
}

// Scaled-frequency velocity transform pair for the exact OU semigroup. With the
// frequency grid eta_m and lambda = exp(-dt/eps^2):
//   A(m, j) = h_v exp(-i lambda eta_m xi_j)   evaluates fhat(lambda eta),
//   B(i, m) = exp(+i xi_i eta_m) / (2 v_max)  inverts on the unscaled grid,
// and B A|_{lambda=1} is exactly the identity.
struct OuOps {
  ArrayXd eta;
  ArrayXd heat;  // exp(-(1 - lambda^2) eta^2 / 2)
  MatrixXd Ar, Ai;
  MatrixXcd A;
  MatrixXcd B;
  MatrixXd Br, Bi;
};

std::shared_ptr<const OuOps> ou_ops(const VelocityGrid& vg, double lambda) {
  using Key = std::tuple<int, double, double>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const OuOps>> cache;
  std::lock_guard<std::mutex> lock(mu);
  Key key{vg.n_v, vg.v_max, lambda};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const int n = vg.n_v;
  auto ops = std::make_shared<OuOps>();
  ops->eta.resize(n);
  for (int k = 0; k < n; ++k) {
    const int m = (k < n / 2) ? k : k - n;
    ops->eta(k) = std::numbers::pi * m / vg.v_max;
  }
  ops->heat = (-(1.0 - lambda * lambda) * 0.5 * ops->eta.square()).exp();

  const double hv = vg.h();
  ops->A.resize(n, n);
  ops->B.resize(n, n);
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j) {
      ops->A(m, j) = hv * std::polar(1.0, -lambda * ops->eta(m) * vg.coord(j));
      ops->B(j, m) = std::polar(1.0, vg.coord(j) * ops->eta(m)) / (2.0 * vg.v_max);
    }
  ops->Ar = ops->A.real();
  ops->Ai = ops->A.imag();
  ops->Br = ops->B.real();
  ops->Bi = ops->B.imag();
  cache[key] = ops;
  return ops;
}

}  // namespace

double max_stable_dt(double eps, const SpatialGrid& xg, const VelocityGrid& vg,
                     double cfl_fraction) {
  if (!(eps > 0) || !(cfl_fraction > 0))
    throw ConfigError("max_stable_dt: eps and cfl_fraction must be positive");
  return cfl_fraction * eps * xg.h() / vg.v_max;
}

PhaseDensity transport_step(const PhaseDensity& f, double dt, double eps,
                            TransportMethod method) {
  if (!(eps > 0)) throw ConfigError("transport_step: eps must be positive");
  if (dt == 0.0) return f;
  const auto ops = transport_ops(f.xg, f.vg, dt / eps, method);
  const int n = f.xg.n_x;
  const int nv = f.vg.n_v;
  PhaseDensity out(f.xg, f.vg);

#pragma omp parallel
  {
    MatrixXd tmp(n, n);
#pragma omp for schedule(static)
    for (int col = 0; col < nv * nv; ++col) {
      const int a = col % nv, b = col / nv;
      Eigen::Map<const MatrixXd> G(f.values.data() + static_cast<Eigen::Index>(col) * n * n, n,
                                   n);
      Eigen::Map<MatrixXd> O(out.values.data() + static_cast<Eigen::Index>(col) * n * n, n, n);
      tmp.noalias() = ops->S[a] * G;
      O.noalias() = tmp * ops->S[b].transpose();
    }
  }
  return out;
}

PhaseDensity ou_step(const PhaseDensity& f, double dt, double eps, const VectorField& v) {
  if (!(eps > 0)) throw ConfigError("ou_step: eps must be positive");
  if (!(f.xg == v.grid)) throw ConfigError("ou_step: grid mismatch");
  if (dt == 0.0) return f;
  const double drift = (eps * (v.x.square() + v.y.square()).sqrt()).maxCoeff();
  if (drift > f.vg.v_max / 2)
    throw ConfigError("ou_step: |eps v| exceeds v_max/2, truncation tail not negligible");

  const double lambda = std::exp(-dt / (eps * eps));
  const auto ops = ou_ops(f.vg, lambda);
  const int n = f.vg.n_v;
  const Eigen::Index nrows = f.values.rows();
  const Eigen::Index slab = static_cast<Eigen::Index>(n) * n;

  // Velocity-major staging so each cell's slice is contiguous for the gemms.
  ArrayXX<double> FT = f.values.transpose();
  ArrayXX<double> OT(slab, nrows);

#pragma omp parallel
  {
    MatrixXd Xr(n, n), Xi(n, n);
    MatrixXcd T1(n, n), Ah(n, n), X(n, n);
    ArrayXcd q1(n), q2(n);
#pragma omp for schedule(static)
    for (Eigen::Index r = 0; r < nrows; ++r) {
      Eigen::Map<const MatrixXd> G(FT.data() + r * slab, n, n);
      Eigen::Map<MatrixXd> O(OT.data() + r * slab, n, n);
      const double c1 = (1.0 - lambda) * eps * v.x(r);
      const double c2 = (1.0 - lambda) * eps * v.y(r);
      for (int m = 0; m < n; ++m) {
        q1(m) = ops->heat(m) * std::polar(1.0, -c1 * ops->eta(m));
        q2(m) = ops->heat(m) * std::polar(1.0, -c2 * ops->eta(m));
      }
      T1.real().noalias() = ops->Ar * G;
      T1.imag().noalias() = ops->Ai * G;
      Ah.noalias() = T1 * ops->A.transpose();
      Ah.array().colwise() *= q1;
      Ah.array().rowwise() *= q2.transpose();
      X.noalias() = ops->B * Ah;
      Xr = X.real();
      Xi = X.imag();
      O.noalias() = Xr * ops->Br.transpose();
      O.noalias() -= Xi * ops->Bi.transpose();
    }
  }
  PhaseDensity out(f.xg, f.vg);
  out.values = OT.transpose();
  return out;
}

namespace {

// (1/eps^2) int_0^dt int rho_f |u_f(s) - eps v|^2 dx ds for the relaxation substep,
// in closed form: u_f - eps v decays by exp(-s/eps^2) cellwise, so the integral is
// rho |u_f(0) - eps v|^2 (1 - lambda^2) / 2 with lambda = exp(-dt/eps^2).
double ou_align_work(const PhaseDensity& f, double dt, double eps, const VectorField& v) {
  const double lambda = std::exp(-dt / (eps * eps));
  const ScalarField rho = moment_density(f);
  const VectorField u = bulk_velocity(f).u;
  const double q =
      (rho.values * ((u.x - eps * v.x).square() + (u.y - eps * v.y).square())).sum() *
      f.xg.cell_area();
  return q * (1 - lambda * lambda) / 2;
}

}  // namespace

void vfp_step(KineticState& state, const VectorField& v, const StepPlan& plan) {
  if (!(plan.dt > 0)) throw ConfigError("vfp_step: dt must be positive");
  if (!(state.eps > 0) || state.eps > 1.0)
    throw ConfigError("vfp_step: eps must lie in (0, 1]");
  if (plan.cfl_fraction > 1.0) throw ConfigError("vfp_step: cfl_fraction must be <= 1");
  if (plan.transport_method == TransportMethod::spectral_shift &&
      plan.dt > max_stable_dt(state.eps, state.f.xg, state.f.vg, plan.cfl_fraction) * (1 + 1e-12))
    throw ConfigError("vfp_step: dt exceeds the transport accuracy bound");

  const double mass_pre = integrate_phase(state.f);
  double align = 0;
  PhaseDensity g(state.f.xg, state.f.vg);
  if (plan.scheme == SplitScheme::strang) {
    g = transport_step(state.f, plan.dt / 2, state.eps, plan.transport_method);
    align = ou_align_work(g, plan.dt, state.eps, v);
    g = ou_step(g, plan.dt, state.eps, v);
    g = transport_step(g, plan.dt / 2, state.eps, plan.transport_method);
  } else {
    g = transport_step(state.f, plan.dt, state.eps, plan.transport_method);
    align = ou_align_work(g, plan.dt, state.eps, v);
    g = ou_step(g, plan.dt, state.eps, v);
  }
  if (!g.all_finite()) throw NumericalFailure("vfp_step: non-finite values");

  const double cell = g.xg.cell_area() * g.vg.cell_area();
  const double clipped = -g.values.min(0.0).sum() * cell;
  if (clipped > 1e-8)
    throw NumericalFailure("vfp_step: clipped mass " + format_double(clipped) +
                           " exceeds 1e-8 in one step");
  if (clipped > 0) {
    g.values = g.values.max(0.0);
    const double mass_now = integrate_phase(g);
    if (mass_now > 0) g.values *= mass_pre / mass_now;
  }

  state.f = std::move(g);
  state.t += plan.dt;
  state.steps += 1;
  state.clipped_last = clipped;
  state.clipped_total += clipped;
  state.ou_align_work += align;
}

void write_checkpoint(const std::filesystem::path& path, const KineticState& state) {
  nlohmann::json meta{{"schema", "vfpns-checkpoint-1"},
                      {"t", state.t},
                      {"eps", state.eps},
                      {"steps", state.steps},
                      {"clipped_last", state.clipped_last},
                      {"clipped_total", state.clipped_total},
                      {"ou_align_work", state.ou_align_work}};
  write_field(path, "f", state.f, meta);
}

KineticState read_checkpoint(const std::filesystem::path& path) {
  KineticState s;
  s.f = read_phase_field(path);
  const nlohmann::json meta = read_sidecar(path);
  for (const char* key :
       {"schema", "t", "eps", "steps", "clipped_last", "clipped_total", "ou_align_work"})
    if (!meta.contains(key))
      throw ConfigError("checkpoint sidecar missing key '" + std::string(key) +
                        "': " + path.string());
  if (meta["schema"] != "vfpns-checkpoint-1")
    throw ConfigError("unsupported checkpoint schema: " + path.string());
  s.t = meta["t"];
  s.eps = meta["eps"];
  s.steps = meta["steps"];
  s.clipped_last = meta["clipped_last"];
  s.clipped_total = meta["clipped_total"];
  s.ou_align_work = meta["ou_align_work"];
  return s;
}

}  // namespace vfpns
