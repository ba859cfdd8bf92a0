#include "vfpns/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vfpns/bl.hpp"
#include "vfpns/entropy.hpp"
#include "vfpns/errors.hpp"
#include "vfpns/io.hpp"
#include "vfpns/quadrature.hpp"
#include "vfpns/spectral.hpp"

namespace vfpns {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

PhaseDensity corrector_f0(const ScalarField& rho, const VelocityGrid& vg) {
  return maxwellian(rho, VectorField(rho.grid), vg);
}

PhaseDensity corrector_f1(const ScalarField& rho, const VectorField& v0, const VelocityGrid& vg) {
  if (!(rho.grid == v0.grid)) throw ConfigError("corrector_f1: rho and v0 grids differ");
  const VectorField grad_rho = spectral_grad(rho);
  PhaseDensity f(rho.grid, vg);
  for (int b = 0; b < vg.n_v; ++b)
    for (int a = 0; a < vg.n_v; ++a) {
      const double xi1 = vg.coord(a), xi2 = vg.coord(b);
      const double m = std::exp(-0.5 * (xi1 * xi1 + xi2 * xi2)) / kTwoPi;
      f.values.col(vg.index(a, b)) =
          (-(grad_rho.x * xi1 + grad_rho.y * xi2) + rho.values * (v0.x * xi1 + v0.y * xi2)) * m;
    }
  return f;
}

CorrectorSet corrector_set(const ScalarField& rho, const VectorField& v0, const VelocityGrid& vg) {
  CorrectorSet set{corrector_f0(rho, vg), corrector_f1(rho, v0, vg), rho, v0};
  const double marginal = moment_density(set.f1).values.abs().maxCoeff();
  if (marginal > 1e-10)
    throw NumericalFailure("corrector_set: f1 velocity marginal is not zero");
  return set;
}

RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err, double floor) {
  if (eps.size() != err.size()) throw ConfigError("fit_rate: size mismatch");
  std::vector<int> order(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return eps[a] > eps[b]; });

  while (!order.empty() && err[order.back()] < 10 * floor) order.pop_back();

  RateFit fit;
  std::vector<double> lx, ly;
  for (int i : order) {
    if (!(eps[i] > 0)) throw ConfigError("fit_rate: eps must be positive");
    if (!(err[i] > 0)) continue;
    lx.push_back(std::log(eps[i]));
    ly.push_back(std::log(err[i]));
  }
  fit.used = static_cast<int>(lx.size());
  if (fit.used < 2) {
    fit.degenerate = true;
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < fit.used; ++k) {
    sx += lx[k];
    sy += ly[k];
    sxx += lx[k] * lx[k];
    sxy += lx[k] * ly[k];
  }
  const double det = fit.used * sxx - sx * sx;
  if (std::abs(det) < 1e-12 * fit.used * std::max(1.0, sxx)) {
    fit.degenerate = true;
    return fit;
  }
  fit.slope = (fit.used * sxy - sx * sy) / det;
  fit.intercept = (sy - fit.slope * sx) / fit.used;
  for (int k = 0; k < fit.used; ++k)
    fit.residual = std::max(fit.residual, std::abs(ly[k] - fit.intercept - fit.slope * lx[k]));
  return fit;
}

ResidualOrders residual_orders(const std::vector<double>& eps_list,
                               const std::function<EpsRun(double)>& run,
                               const ResidualOptions& opt) {
  if (eps_list.size() < 3) throw ConfigError("residual_orders: need at least 3 eps values");

  ResidualOrders table;
  const MetricGraph* graph = nullptr;
  MetricGraph graph_store;

  for (const double eps : eps_list) {
    if (!(eps > 0)) throw ConfigError("residual_orders: eps must be positive");
    const EpsRun r = run(eps);
    if (r.f.empty() || r.f.size() != r.rho.size() || r.f.size() != r.v.size())
      throw ConfigError("residual_orders: run snapshots must align");

    double e0 = 0, e1 = 0, d = 0;
    for (std::size_t k = 0; k < r.f.size(); ++k) {
      const PhaseDensity& f = r.f[k];
      if (!(f.xg == r.rho[k].grid))
        throw ConfigError("residual_orders: snapshot grids must agree");
      PhaseDensity diff = corrector_f0(r.rho[k], f.vg);
      diff.values = f.values - diff.values;
      e0 = std::max(e0, l1_norm_phase(diff));
      diff.values -= eps * corrector_f1(r.rho[k], r.v[k], f.vg).values;
      e1 = std::max(e1, l1_norm_phase(diff));

      if (!graph) {
        graph_store = torus_graph(f.xg, opt.bl_block);
        graph = &graph_store;
      }
      const double bl =
          bl_exact(measure_from_density(moment_density(f), opt.bl_block),
                   measure_from_density(r.rho[k], opt.bl_block), *graph);
      d = std::max(d, bl);
    }
    table.eps.push_back(eps);
    table.e0.push_back(e0);
    table.e1.push_back(e1);
    table.d_bl.push_back(d);
  }

  table.fit_e0 = fit_rate(table.eps, table.e0, opt.floor_e0);
  table.fit_e1 = fit_rate(table.eps, table.e1, opt.floor_e1);
  table.fit_d = fit_rate(table.eps, table.d_bl, opt.floor_d);
  return table;
}

std::string residual_orders_csv(const ResidualOrders& t) {
  std::string out = "eps,e0,e1,d_bl\n";
  for (std::size_t i = 0; i < t.eps.size(); ++i)
    out += format_double(t.eps[i]) + "," + format_double(t.e0[i]) + "," +
           format_double(t.e1[i]) + "," + format_double(t.d_bl[i]) + "\n";
  out += "slope," + format_double(t.fit_e0.slope) + "," + format_double(t.fit_e1.slope) + "," +
         format_double(t.fit_d.slope) + "\n";
  return out;
}

nlohmann::json residual_orders_json(const ResidualOrders& t) {
  auto fit = [](const RateFit& f) {
    return nlohmann::json{{"slope", f.slope},
                          {"intercept", f.intercept},
                          {"residual", f.residual},
                          {"degenerate", f.degenerate},
                          {"used", f.used}};
  };
  return nlohmann::json{{"eps", t.eps},          {"e0", t.e0},
                        {"e1", t.e1},            {"d_bl", t.d_bl},
                        {"fit_e0", fit(t.fit_e0)}, {"fit_e1", fit(t.fit_e1)},
                        {"fit_d", fit(t.fit_d)}};
}

}  // namespace vfpns
