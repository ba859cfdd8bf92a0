#pragma once

#include <Eigen/Dense>

#include "vfpns/errors.hpp"
#include "vfpns/grid.hpp"

namespace vfpns {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Scalar function on the spatial torus, flat storage of length n_x^2,
// index (i, j) -> i + n_x*j.
template <typename Scalar = double>
struct ScalarFieldT {
  SpatialGrid grid;
  ArrayX<Scalar> values;

  ScalarFieldT() = default;
  explicit ScalarFieldT(const SpatialGrid& g) : grid(g), values(ArrayX<Scalar>::Zero(g.cells())) {}
  ScalarFieldT(const SpatialGrid& g, ArrayX<Scalar> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.cells()) throw ConfigError("ScalarField: size mismatch");
  }

  Scalar& operator()(int i, int j) { return values(grid.index(i, j)); }
  Scalar operator()(int i, int j) const { return values(grid.index(i, j)); }
};

// Velocity field (or any 2-vector field) on the spatial torus.
template <typename Scalar = double>
struct VectorFieldT {
  SpatialGrid grid;
  ArrayX<Scalar> x;  // component along axis 1
  ArrayX<Scalar> y;  // component along axis 2

  VectorFieldT() = default;
  explicit VectorFieldT(const SpatialGrid& g)
      : grid(g), x(ArrayX<Scalar>::Zero(g.cells())), y(ArrayX<Scalar>::Zero(g.cells())) {}
  VectorFieldT(const SpatialGrid& g, ArrayX<Scalar> vx, ArrayX<Scalar> vy)
      : grid(g), x(std::move(vx)), y(std::move(vy)) {
    if (x.size() != grid.cells() || y.size() != grid.cells())
      throw ConfigError("VectorField: size mismatch");
  }

  ArrayX<Scalar> squared_norm() const { return x * x + y * y; }
};

// Phase-space density f(x, xi) on torus x velocity box.
// Column k holds the spatial slab for velocity node k (column-major storage),
// so transport works on contiguous columns; rows are velocity slices per cell.
template <typename Scalar = double>
struct PhaseDensityT {
  SpatialGrid xg;
  VelocityGrid vg;
  ArrayXX<Scalar> values;  // rows: n_x^2 spatial cells, cols: n_v^2 velocity nodes

  PhaseDensityT() = default;
  PhaseDensityT(const SpatialGrid& x, const VelocityGrid& v)
      : xg(x), vg(v), values(ArrayXX<Scalar>::Zero(x.cells(), v.cells())) {}

  Scalar& at(int xi, int xj, int va, int vb) { return values(xg.index(xi, xj), vg.index(va, vb)); }
  Scalar at(int xi, int xj, int va, int vb) const {
    return values(xg.index(xi, xj), vg.index(va, vb));
  }

  bool all_finite() const { return values.isFinite().all(); }
};

using ScalarField = ScalarFieldT<double>;
using VectorField = VectorFieldT<double>;
using PhaseDensity = PhaseDensityT<double>;

}  // namespace vfpns
