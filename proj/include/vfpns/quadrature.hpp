#pragma once

#include <vector>

#include "vfpns/fields.hpp"

// Midpoint quadrature on the tensor grid. On the periodic torus factor this is the
// trapezoid rule, spectrally accurate for smooth integrands; on the velocity box it
// is midpoint with cell-center nodes, so odd velocity moments vanish exactly.

namespace vfpns {

inline constexpr double kBulkVelocityFloor = 1e-12;

template <typename S>
S integrate(const ScalarFieldT<S>& g) {
  return g.values.sum() * static_cast<S>(g.grid.cell_area());
}

template <typename S>
S integrate_phase(const PhaseDensityT<S>& f) {
  return f.values.sum() * static_cast<S>(f.xg.cell_area() * f.vg.cell_area());
}

// Weighted variant: separable weight w_x(cell) * w_v(node); either factor may be
// empty, meaning 1.
template <typename S>
S integrate_phase(const PhaseDensityT<S>& f, const ArrayX<S>& weight_x, const ArrayX<S>& weight_v) {
  const S cell = static_cast<S>(f.xg.cell_area() * f.vg.cell_area());
  ArrayX<S> col_sums;  // one entry per velocity node
  if (weight_x.size() == 0) {
    col_sums = f.values.colwise().sum();
  } else {
    col_sums = (f.values.colwise() * weight_x).colwise().sum();
  }
  if (weight_v.size() == 0) return col_sums.sum() * cell;
  return (col_sums * weight_v).sum() * cell;
}

template <typename S>
ScalarFieldT<S> moment_density(const PhaseDensityT<S>& f) {
  ScalarFieldT<S> rho(f.xg);
  rho.values = f.values.rowwise().sum() * static_cast<S>(f.vg.cell_area());
  return rho;
}

namespace detail {
// Velocity node coordinates as flat arrays over velocity index.
template <typename S>
void velocity_coords(const VelocityGrid& vg, ArrayX<S>& xi1, ArrayX<S>& xi2) {
  xi1.resize(vg.cells());
  xi2.resize(vg.cells());
  for (int b = 0; b < vg.n_v; ++b)
    for (int a = 0; a < vg.n_v; ++a) {
      xi1(vg.index(a, b)) = static_cast<S>(vg.coord(a));
      xi2(vg.index(a, b)) = static_cast<S>(vg.coord(b));
    }
}
}  // namespace detail

template <typename S>
VectorFieldT<S> moment_momentum(const PhaseDensityT<S>& f) {
  ArrayX<S> xi1, xi2;
  detail::velocity_coords<S>(f.vg, xi1, xi2);
  VectorFieldT<S> m(f.xg);
  const S w = static_cast<S>(f.vg.cell_area());
  m.x = (f.values.rowwise() * xi1.transpose()).rowwise().sum() * w;
  m.y = (f.values.rowwise() * xi2.transpose()).rowwise().sum() * w;
  return m;
}

// Second-moment (pressure-like) tensor components per spatial cell:
// P_ab(x) = sum_v xi_a xi_b f h_v^2. Returned in the order (11, 12, 22).
template <typename S>
std::array<ScalarFieldT<S>, 3> moment_pressure(const PhaseDensityT<S>& f) {
  ArrayX<S> xi1, xi2;
  detail::velocity_coords<S>(f.vg, xi1, xi2);
  const S w = static_cast<S>(f.vg.cell_area());
  std::array<ScalarFieldT<S>, 3> P{ScalarFieldT<S>(f.xg), ScalarFieldT<S>(f.xg),
                                   ScalarFieldT<S>(f.xg)};
  P[0].values = (f.values.rowwise() * (xi1 * xi1).transpose()).rowwise().sum() * w;
  P[1].values = (f.values.rowwise() * (xi1 * xi2).transpose()).rowwise().sum() * w;
  P[2].values = (f.values.rowwise() * (xi2 * xi2).transpose()).rowwise().sum() * w;
  return P;
}

// Total scaled kinetic energy integrand moment: iint |xi|^2 f dxi dx.
template <typename S>
S moment_second(const PhaseDensityT<S>& f) {
  ArrayX<S> xi1, xi2;
  detail::velocity_coords<S>(f.vg, xi1, xi2);
  ArrayX<S> w2 = xi1 * xi1 + xi2 * xi2;
  ArrayX<S> none;
  return integrate_phase(f, none, w2);
}

template <typename S>
struct BulkVelocityResult {
  VectorFieldT<S> u;
  std::vector<Eigen::Index> vacuum_cells;  // cells where rho_f < floor; u forced to 0 there
};

template <typename S>
BulkVelocityResult<S> bulk_velocity(const PhaseDensityT<S>& f, S floor = S(kBulkVelocityFloor)) {
  ScalarFieldT<S> rho = moment_density(f);
  VectorFieldT<S> m = moment_momentum(f);
  BulkVelocityResult<S> out{VectorFieldT<S>(f.xg), {}};
  for (Eigen::Index i = 0; i < rho.values.size(); ++i) {
    if (rho.values(i) < floor) {
      out.vacuum_cells.push_back(i);
      out.u.x(i) = S(0);
      out.u.y(i) = S(0);
    } else {
      out.u.x(i) = m.x(i) / rho.values(i);
      out.u.y(i) = m.y(i) / rho.values(i);
    }
  }
  return out;
}

// Periodicized distance-to-origin weight: Euclidean norm of per-axis geodesic
// distances. Torus stand-in for the |x| moment weight.
template <typename S = double>
ArrayX<S> periodic_distance_weight(const SpatialGrid& g) {
  ArrayX<S> w(g.cells());
  for (int j = 0; j < g.n_x; ++j)
    for (int i = 0; i < g.n_x; ++i) {
      const double dx = g.axis_geodesic(g.coord(i));
      const double dy = g.axis_geodesic(g.coord(j));
      w(g.index(i, j)) = static_cast<S>(std::sqrt(dx * dx + dy * dy));
    }
  return w;
}

template <typename S>
S l1_norm(const ScalarFieldT<S>& g) {
  return g.values.abs().sum() * static_cast<S>(g.grid.cell_area());
}

template <typename S>
S l2_norm_sq(const ScalarFieldT<S>& g) {
  return g.values.square().sum() * static_cast<S>(g.grid.cell_area());
}

template <typename S>
S l2_norm_sq(const VectorFieldT<S>& v) {
  return (v.x.square() + v.y.square()).sum() * static_cast<S>(v.grid.cell_area());
}

// int |v(x)| dx with the Euclidean norm on components.
template <typename S>
S l1_norm(const VectorFieldT<S>& v) {
  return (v.x.square() + v.y.square()).sqrt().sum() * static_cast<S>(v.grid.cell_area());
}

template <typename S>
S l1_norm_phase(const PhaseDensityT<S>& f) {
  return f.values.abs().sum() * static_cast<S>(f.xg.cell_area() * f.vg.cell_area());
}

}  // namespace vfpns
