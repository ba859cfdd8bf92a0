#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>

#include "vfpns/fields.hpp"

namespace vfpns {

// Fourier machinery for one periodic 2D grid (n nodes per dimension, given period).
// Transforms are dense DFT matrices applied as Eigen matrix products: exact,
// deterministic, and fast at the grid sizes this project uses. Mode index k carries
// the signed wavenumber m(k) = k for k <= n/2, k - n otherwise; derivative
// multipliers zero the Nyquist mode so grad/div/lap stay mutually consistent and
// real fields stay real under fractional shifts.
class SpectralOps2D {
 public:
  SpectralOps2D(int n, double period);

  int n() const { return n_; }
  double period() const { return period_; }

  // Flat field (length n^2, index i + n*j) <-> n x n mode matrix, rows = axis-1 modes.
  Eigen::MatrixXcd to_spectral(const Eigen::ArrayXd& field) const;
  Eigen::ArrayXd to_nodal(const Eigen::MatrixXcd& fhat) const;

  const Eigen::VectorXd& k_deriv() const { return k_deriv_; }
  const Eigen::VectorXd& k_full() const { return k_full_; }

  void grad(const Eigen::ArrayXd& g, Eigen::ArrayXd& g1, Eigen::ArrayXd& g2) const;
  Eigen::ArrayXd div(const Eigen::ArrayXd& v1, const Eigen::ArrayXd& v2) const;
  Eigen::ArrayXd lap(const Eigen::ArrayXd& g) const;

  // Removes the gradient part: v <- v - grad(lap^-1 div v). Mean modes untouched.
  void leray(Eigen::ArrayXd& v1, Eigen::ArrayXd& v2) const;

  // Zero-mean solution of Lap(u) = g (the mean of g is discarded).
  Eigen::ArrayXd inv_lap(const Eigen::ArrayXd& g) const;

  // Heat semigroup exp(t*Lap) with the full (Nyquist included) symbol.
  Eigen::ArrayXd heat(const Eigen::ArrayXd& g, double t) const;

  // 2/3-rule projection: zeroes modes with |m| > n/3.
  Eigen::ArrayXd dealias(const Eigen::ArrayXd& g) const;

  // Real one-dimensional periodic shift-by-s operator (trigonometric interpolation);
  // apply as S1 * F * S2^T for a 2D shift.
  Eigen::MatrixXd shift_matrix(double s) const;

  double h1_seminorm_sq(const Eigen::ArrayXd& g) const;

 private:
  int n_;
  double period_;
  Eigen::MatrixXcd W_;    // forward DFT
  Eigen::MatrixXcd Wi_;   // inverse DFT = conj(W)/n
  Eigen::VectorXd k_deriv_;
  Eigen::VectorXd k_full_;
  Eigen::ArrayXXd dealias_mask_;
};

// Shared per-grid instances so free functions stay cheap to call.
std::shared_ptr<const SpectralOps2D> spectral_ops(int n, double period);
inline std::shared_ptr<const SpectralOps2D> spectral_ops(const SpatialGrid& g) {
  return spectral_ops(g.n_x, g.L_x);
}
inline std::shared_ptr<const SpectralOps2D> spectral_ops(const VelocityGrid& g) {
  return spectral_ops(g.n_v, g.period());
}

VectorField spectral_grad(const ScalarField& g);
ScalarField spectral_div(const VectorField& v);
ScalarField spectral_lap(const ScalarField& g);

}  // namespace vfpns
