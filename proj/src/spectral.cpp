#include "vfpns/spectral.hpp"

#include <map>
#include <mutex>
#include <numbers>

namespace vfpns {

using Eigen::ArrayXd;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cd = std::complex<double>;

SpectralOps2D::SpectralOps2D(int n, double period) : n_(n), period_(period) {
  const double two_pi = 2.0 * std::numbers::pi;
  W_.resize(n, n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j) W_(k, j) = std::exp(cd(0.0, -two_pi * k * j / n));
  Wi_ = W_.conjugate() / double(n);

  k_deriv_.resize(n);
  k_full_.resize(n);
  for (int k = 0; k < n; ++k) {
    const int m = (k <= n / 2) ? k : k - n;
    const double kk = two_pi * m / period;
    k_full_(k) = kk;
    k_deriv_(k) = (k == n / 2) ? 0.0 : kk;  // Nyquist zeroed
  }

  dealias_mask_.resize(n, n);
  const int cut = n / 3;
  for (int k2 = 0; k2 < n; ++k2)
    for (int k1 = 0; k1 < n; ++k1) {
      const int m1 = (k1 <= n / 2) ? k1 : k1 - n;
      const int m2 = (k2 <= n / 2) ? k2 : k2 - n;
      dealias_mask_(k1, k2) = (std::abs(m1) <= cut && std::abs(m2) <= cut) ? 1.0 : 0.0;
    }
}

MatrixXcd SpectralOps2D::to_spectral(const ArrayXd& field) const {
  Eigen::Map<const MatrixXd> F(field.data(), n_, n_);
  return W_ * F * W_.transpose();
}

ArrayXd SpectralOps2D::to_nodal(const MatrixXcd& fhat) const {
  MatrixXcd F = Wi_ * fhat * Wi_.transpose();
  ArrayXd out(n_ * n_);
  Eigen::Map<MatrixXd>(out.data(), n_, n_) = F.real();
  return out;
}

void SpectralOps2D::grad(const ArrayXd& g, ArrayXd& g1, ArrayXd& g2) const {
  MatrixXcd ghat = to_spectral(g);
  MatrixXcd d1 = ghat, d2 = ghat;
  for (int k = 0; k < n_; ++k) {
    d1.row(k) *= cd(0.0, k_deriv_(k));
    d2.col(k) *= cd(0.0, k_deriv_(k));
  }
  g1 = to_nodal(d1);
  g2 = to_nodal(d2);
}

ArrayXd SpectralOps2D::div(const ArrayXd& v1, const ArrayXd& v2) const {
  MatrixXcd h1 = to_spectral(v1), h2 = to_spectral(v2);
  for (int k = 0; k < n_; ++k) {
    h1.row(k) *= cd(0.0, k_deriv_(k));
    h2.col(k) *= cd(0.0, k_deriv_(k));
  }
  return to_nodal(h1 + h2);
}

ArrayXd SpectralOps2D::lap(const ArrayXd& g) const {
  MatrixXcd ghat = to_spectral(g);
  for (int k2 = 0; k2 < n_; ++k2)
    for (int k1 = 0; k1 < n_; ++k1)
      ghat(k1, k2) *= -(k_deriv_(k1) * k_deriv_(k1) + k_deriv_(k2) * k_deriv_(k2));
  return to_nodal(ghat);
}

void SpectralOps2D::leray(ArrayXd& v1, ArrayXd& v2) const {
  MatrixXcd h1 = to_spectral(v1), h2 = to_spectral(v2);
  for (int k2 = 0; k2 < n_; ++k2)
    for (int k1 = 0; k1 < n_; ++k1) {
      const double a = k_deriv_(k1), b = k_deriv_(k2);
      const double kk = a * a + b * b;
      if (kk == 0.0) continue;
      const cd dot = (a * h1(k1, k2) + b * h2(k1, k2)) / kk;
      h1(k1, k2) -= a * dot;
      h2(k1, k2) -= b * dot;
    }
  v1 = to_nodal(h1);
  v2 = to_nodal(h2);
}

ArrayXd SpectralOps2D::inv_lap(const ArrayXd& g) const {
  MatrixXcd ghat = to_spectral(g);
  for (int k2 = 0; k2 < n_; ++k2)
    for (int k1 = 0; k1 < n_; ++k1) {
      const double kk = k_deriv_(k1) * k_deriv_(k1) + k_deriv_(k2) * k_deriv_(k2);
      ghat(k1, k2) = (kk == 0.0) ? cd(0.0) : ghat(k1, k2) / -kk;
    }
  return to_nodal(ghat);
}

ArrayXd SpectralOps2D::heat(const ArrayXd& g, double t) const {
  MatrixXcd ghat = to_spectral(g);
  for (int k2 = 0; k2 < n_; ++k2)
    for (int k1 = 0; k1 < n_; ++k1)
      ghat(k1, k2) *= std::exp(-(k_full_(k1) * k_full_(k1) + k_full_(k2) * k_full_(k2)) * t);
  return to_nodal(ghat);
}

ArrayXd SpectralOps2D::dealias(const ArrayXd& g) const {
  MatrixXcd ghat = to_spectral(g);
  ghat.array() *= dealias_mask_.cast<cd>();
  return to_nodal(ghat);
}

MatrixXd SpectralOps2D::shift_matrix(double s) const {
  MatrixXcd phase = MatrixXcd::Zero(n_, n_);
  for (int k = 0; k < n_; ++k) phase(k, k) = std::exp(cd(0.0, -k_deriv_(k) * s));
  return (Wi_ * phase * W_).real();
}

double SpectralOps2D::h1_seminorm_sq(const ArrayXd& g) const {
  ArrayXd g1, g2;
  grad(g, g1, g2);
  const double cell = (period_ / n_) * (period_ / n_);
  return (g1.square() + g2.square()).sum() * cell;
}

std::shared_ptr<const SpectralOps2D> spectral_ops(int n, double period) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::shared_ptr<const SpectralOps2D>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(n, period);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto ops = std::make_shared<const SpectralOps2D>(n, period);
  cache[key] = ops;
  return ops;
}

VectorField spectral_grad(const ScalarField& g) {
  auto ops = spectral_ops(g.grid);
  VectorField out(g.grid);
  ops->grad(g.values, out.x, out.y);
  return out;
}

ScalarField spectral_div(const VectorField& v) {
  auto ops = spectral_ops(v.grid);
  return ScalarField(v.grid, ops->div(v.x, v.y));
}

ScalarField spectral_lap(const ScalarField& g) {
  auto ops = spectral_ops(g.grid);
  return ScalarField(g.grid, ops->lap(g.values));
}

}  // namespace vfpns
