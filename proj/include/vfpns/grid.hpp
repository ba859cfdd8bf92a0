#pragma once

#include <cmath>
#include <string>

#include "vfpns/errors.hpp"

namespace vfpns {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Uniform periodic grid on the square torus [0, L_x)^2.
// Nodes sit at x_i = i*h, i = 0..n_x-1 per dimension; index (i, j) -> i + n_x*j.
struct SpatialGrid {
  int n_x = 0;
  double L_x = 0.0;

  SpatialGrid() = default;
  SpatialGrid(int n, double length) : n_x(n), L_x(length) {
    if (n_x < 8 || !is_power_of_two(n_x))
      throw ConfigError("SpatialGrid: n_x must be a power of two >= 8, got " + std::to_string(n_x));
    if (!(L_x > 0.0)) throw ConfigError("SpatialGrid: L_x must be positive");
  }

  double h() const { return L_x / n_x; }
  int cells() const { return n_x * n_x; }
  double cell_area() const { return h() * h(); }
  double coord(int i) const { return i * h(); }
  int index(int i, int j) const { return i + n_x * j; }

  // Geodesic distance to 0 along one axis (used by the periodic |x| weight).
  double axis_geodesic(double x) const {
    double r = std::fmod(std::fmod(x, L_x) + L_x, L_x);
    return std::min(r, L_x - r);
  }

  bool operator==(const SpatialGrid&) const = default;
};

// Truncated velocity box [-v_max, v_max)^2, treated as periodic by the spectral
// machinery. Nodes at cell centers xi_j = -v_max + (j + 1/2)*h so the node set is
// symmetric under xi -> -xi and odd moments vanish exactly.
struct VelocityGrid {
  int n_v = 0;
  double v_max = 0.0;

  VelocityGrid() = default;
  VelocityGrid(int n, double vmax) : n_v(n), v_max(vmax) {
    if (n_v < 8) throw ConfigError("VelocityGrid: n_v must be >= 8, got " + std::to_string(n_v));
    if (!(v_max >= 5.0))
      throw ConfigError("VelocityGrid: v_max must be >= 5 to keep Maxwellian tail mass negligible");
  }

  double h() const { return 2.0 * v_max / n_v; }
  int cells() const { return n_v * n_v; }
  double cell_area() const { return h() * h(); }
  double coord(int j) const { return -v_max + (j + 0.5) * h(); }
  int index(int a, int b) const { return a + n_v * b; }
  double period() const { return 2.0 * v_max; }

  bool operator==(const VelocityGrid&) const = default;
};

}  // namespace vfpns
