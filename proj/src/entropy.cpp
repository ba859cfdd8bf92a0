#include "vfpns/entropy.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "vfpns/errors.hpp"
#include "vfpns/io.hpp"
#include "vfpns/spectral.hpp"

namespace vfpns {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_same_grids(const PhaseDensity& a, const PhaseDensity& b, const char* who) {
  if (!(a.xg == b.xg) || !(a.vg == b.vg))
    throw ConfigError(std::string(who) + ": phase densities live on different grids");
}
}  // namespace

PhaseDensity maxwellian(const ScalarField& rho, const VectorField& u, const VelocityGrid& vg) {
  if (!(rho.grid == u.grid)) throw ConfigError("maxwellian: rho and u grids differ");
  if ((rho.values < 0.0).any()) throw ConfigError("maxwellian: negative density");
  const double drift = (u.x.square() + u.y.square()).sqrt().maxCoeff();
  if (drift > vg.v_max / 2)
    throw ConfigError("maxwellian: |u| exceeds v_max/2, truncation tail not negligible");

  PhaseDensity f(rho.grid, vg);
  for (int b = 0; b < vg.n_v; ++b)
    for (int a = 0; a < vg.n_v; ++a) {
      const double x1 = vg.coord(a), x2 = vg.coord(b);
      f.values.col(vg.index(a, b)) =
          rho.values * (-0.5 * ((x1 - u.x).square() + (x2 - u.y).square())).exp() / kTwoPi;
    }
  return f;
}

double relative_entropy(const PhaseDensity& f, const PhaseDensity& M) {
  require_same_grids(f, M, "relative_entropy");
  const auto& F = f.values;
  const auto& G = M.values;
  if (((F > kEntropyCellFloor) && (G <= kEntropyCellFloor)).any())
    throw NumericalFailure("relative_entropy: reference vanishes where f does not");
  // Bregman integrand f log(f/M) - f + M, extended by M - f on vacuum cells.
  ArrayXX<double> integrand =
      (F > kEntropyCellFloor)
          .select(F * (F.log() - G.max(kEntropyCellFloor).log()) - F + G, G - F);
  return integrand.sum() * f.xg.cell_area() * f.vg.cell_area();
}

EntropyParts entropy_decomposition(const PhaseDensity& f, const ScalarField& rho,
                                   const VectorField& u) {
  if (!(f.xg == rho.grid) || !(rho.grid == u.grid))
    throw ConfigError("entropy_decomposition: grid mismatch");

  const ScalarField rho_f = moment_density(f);
  const auto bulk = bulk_velocity(f);
  const auto& uf1 = bulk.u.x;
  const auto& uf2 = bulk.u.y;

  // kinetic part: f (log f - log M_{rho_f, u_f}) cell-wise with the analytic log of
  // the Maxwellian, so the three-way split matches the direct quadrature to roundoff.
  ArrayX<double> xi1, xi2;
  detail::velocity_coords<double>(f.vg, xi1, xi2);
  double kinetic_sum = 0.0;
  for (Eigen::Index col = 0; col < f.values.cols(); ++col) {
    const double c1 = xi1(col), c2 = xi2(col);
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) {
      const double fv = f.values(r, col);
      if (fv <= kEntropyCellFloor || rho_f.values(r) <= kEntropyCellFloor) continue;
      const double d1 = c1 - uf1(r), d2 = c2 - uf2(r);
      const double logM = std::log(rho_f.values(r) / kTwoPi) - 0.5 * (d1 * d1 + d2 * d2);
      kinetic_sum += fv * (std::log(fv) - logM);
    }
  }

  double density_sum = 0.0;
  for (Eigen::Index r = 0; r < rho_f.values.size(); ++r) {
    const double a = rho_f.values(r);
    if (a <= kEntropyCellFloor) continue;
    if (rho.values(r) <= kEntropyCellFloor)
      throw NumericalFailure("entropy_decomposition: target density vanishes where rho_f does not");
    density_sum += a * std::log(a / rho.values(r));
  }

  const ArrayX<double> gap2 = (uf1 - u.x).square() + (uf2 - u.y).square();
  const double momentum_sum = (rho_f.values * gap2).sum() / 2.0;

  const double xcell = f.xg.cell_area(), vcell = f.vg.cell_area();
  return {kinetic_sum * xcell * vcell, density_sum * xcell, momentum_sum * xcell};
}

double free_energy(const PhaseDensity& f, const VectorField& v) {
  if (!(f.xg == v.grid)) throw ConfigError("free_energy: grid mismatch");
  ArrayX<double> xi1, xi2;
  detail::velocity_coords<double>(f.vg, xi1, xi2);
  const ArrayX<double> half_speed2 = 0.5 * (xi1 * xi1 + xi2 * xi2);
  const auto& F = f.values;
  ArrayXX<double> flogf = (F > kEntropyCellFloor).select(F * F.max(kEntropyCellFloor).log(), 0.0);
  double kin = (F.rowwise() * half_speed2.transpose()).sum() + flogf.sum();
  return kin * f.xg.cell_area() * f.vg.cell_area() + 0.5 * l2_norm_sq(v);
}

DissipationParts dissipation_split(const PhaseDensity& f, const VectorField& v, double eps) {
  if (!(f.xg == v.grid)) throw ConfigError("dissipation_split: grid mismatch");
  if (!(eps > 0.0)) throw ConfigError("dissipation_split: eps must be positive");

  const auto ops = spectral_ops(f.vg);
  const ScalarField rho_f = moment_density(f);
  const auto bulk = bulk_velocity(f);
  ArrayX<double> xi1, xi2;
  detail::velocity_coords<double>(f.vg, xi1, xi2);

  const Eigen::Index nrows = f.values.rows();
  Eigen::ArrayXd cell_total(nrows), cell_kinetic(nrows);

#pragma omp parallel
  {
    Eigen::ArrayXd slice(f.vg.cells()), g1, g2;
#pragma omp for schedule(static)
    for (Eigen::Index r = 0; r < nrows; ++r) {
      slice = f.values.row(r).transpose();
      ops->grad(slice, g1, g2);
      const double w1 = eps * v.x(r), w2 = eps * v.y(r);
      const double b1 = bulk.u.x(r), b2 = bulk.u.y(r);
      double tot = 0.0, kin = 0.0;
      for (Eigen::Index c = 0; c < slice.size(); ++c) {
        const double fv = slice(c);
        if (fv <= kEntropyCellFloor) continue;
        const double base1 = g1(c) + xi1(c) * fv, base2 = g2(c) + xi2(c) * fv;
        const double e1 = base1 - w1 * fv, e2 = base2 - w2 * fv;
        const double k1 = base1 - b1 * fv, k2 = base2 - b2 * fv;
        tot += (e1 * e1 + e2 * e2) / fv;
        kin += (k1 * k1 + k2 * k2) / fv;
      }
      cell_total(r) = tot;
      cell_kinetic(r) = kin;
    }
  }

  const double vcell = f.vg.cell_area(), xcell = f.xg.cell_area();
  const ArrayX<double> gap2 =
      (bulk.u.x - eps * v.x).square() + (bulk.u.y - eps * v.y).square();
  return {cell_total.sum() * vcell * xcell, cell_kinetic.sum() * vcell * xcell,
          (rho_f.values * gap2).sum() * xcell};
}

CkpResult ckp_check(const PhaseDensity& f, const PhaseDensity& M) {
  require_same_grids(f, M, "ckp_check");
  const double mf = integrate_phase(f), mM = integrate_phase(M);
  if (std::abs(mf - mM) > 1e-6)
    throw ConfigError("ckp_check: masses differ beyond 1e-6");
  PhaseDensity diff(f.xg, f.vg);
  diff.values = f.values - M.values;
  const double l1 = l1_norm_phase(diff);
  CkpResult res{l1 * l1, 2.0 * relative_entropy(f, M), false};
  res.holds = res.lhs <= res.rhs + 1e-8;
  return res;
}

double llogl_entropy(const ScalarField& rho) {
  const auto& R = rho.values;
  ArrayX<double> integrand =
      (R > kEntropyCellFloor).select(R * R.max(kEntropyCellFloor).log().abs(), 0.0);
  return integrand.sum() * rho.grid.cell_area();
}

double tm_ratio(const ScalarField& p, const ScalarField& phi) {
  if (!(p.grid == phi.grid)) throw ConfigError("tm_ratio: grid mismatch");
  if ((p.values < 0.0).any()) throw ConfigError("tm_ratio: weight must be nonnegative");
  if (std::abs(integrate(p) - 1.0) > 1e-6)
    throw ConfigError("tm_ratio: weight must be a probability density");
  const auto ops = spectral_ops(p.grid);
  const double h1 = l2_norm_sq(phi) + ops->h1_seminorm_sq(phi.values);
  if (h1 <= 0.0) throw ConfigError("tm_ratio: phi vanishes");
  const double num = (p.values * phi.values.square()).sum() * p.grid.cell_area();
  return num / ((1.0 + llogl_entropy(p)) * h1);
}

const char* DiagnosticsRecord::csv_header() {
  return "t,entropy_H,free_energy_F,diss_kinetic,diss_alignment,diss_total,l1_dist_f,"
         "l1_dist_rho,l2_dist_v,h1_dist_v,bl_dist_rho,bl_dist_f,moment2,llogl_rho,"
         "scaled_momentum_l1";
}

std::string DiagnosticsRecord::csv_row() const {
  const double vals[] = {t,          entropy_H,  free_energy_F, diss_kinetic, diss_alignment,
                         diss_total, l1_dist_f,  l1_dist_rho,   l2_dist_v,    h1_dist_v,
                         bl_dist_rho, bl_dist_f, moment2,       llogl_rho,    scaled_momentum_l1};
  std::ostringstream out;
  for (size_t i = 0; i < std::size(vals); ++i) {
    if (i) out << ',';
    out << format_double(vals[i]);
  }
  return out.str();
}

nlohmann::json DiagnosticsRecord::to_json() const {
  return {{"t", t},
          {"entropy_H", entropy_H},
          {"free_energy_F", free_energy_F},
          {"diss_kinetic", diss_kinetic},
          {"diss_alignment", diss_alignment},
          {"diss_total", diss_total},
          {"l1_dist_f", l1_dist_f},
          {"l1_dist_rho", l1_dist_rho},
          {"l2_dist_v", l2_dist_v},
          {"h1_dist_v", h1_dist_v},
          {"bl_dist_rho", bl_dist_rho},
          {"bl_dist_f", bl_dist_f},
          {"moment2", moment2},
          {"llogl_rho", llogl_rho},
          {"scaled_momentum_l1", scaled_momentum_l1}};
}

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<DiagnosticsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << DiagnosticsRecord::csv_header() << "\n";
  for (const auto& r : records) out << r.csv_row() << "\n";
}

void write_diagnostics_jsonl(const std::filesystem::path& path,
                             const std::vector<DiagnosticsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << "\n";
}

}  // namespace vfpns
