#pragma once

#include <Eigen/Dense>

#include <random>

#include "tfs/model.hpp"
#include "tfs/numerics.hpp"
#include "tfs/simulate.hpp"

namespace tfs::testutil {

// Damped oscillator with velocity noise and an integrated-position output,
// started at its stationary covariance diag(50/21, 5/7). The workhorse
// continuous example across the test suite.
inline LtvSystem oscillator_system(const TimeGrid& grid) {
  Matrix A(2, 2), B(2, 2), C(1, 2), D(1, 2);
  A << 0.0, 1.0, -0.3, -0.7;
  B << 0.0, 0.0, 1.0, 0.0;
  C << 1.0, 0.0;
  D << 0.0, 1.0;
  const Matrix P0 = stationary_initial_covariance(TimeKind::Continuous, A, B);
  return LtvSystem::constant(grid, TimeKind::Continuous, A, B, C, D, P0);
}

inline BalancedModel balanced_oscillator(const TimeGrid& grid) {
  const LtvSystem sys = oscillator_system(grid);
  return balance(sys, propagate_covariance(sys));
}

// Exactly discretized oscillator, rebalanced so the per-step identity
// A A' + B B' = I holds to roundoff. The workhorse discrete example.
inline BalancedModel discrete_balanced_oscillator(const TimeGrid& grid) {
  const LtvSystem disc = exact_discretize(forward_system(balanced_oscillator(grid)));
  return balance(disc, propagate_covariance(disc));
}

inline double max_abs_diff(const Matrix& A, const Matrix& B) {
  return (A - B).cwiseAbs().maxCoeff();
}

inline double max_abs(const Matrix& A) { return A.cwiseAbs().maxCoeff(); }

// Deterministic dense matrix with entries uniform in [-1, 1].
inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = u(rng);
  return M;
}

inline Matrix random_symmetric(std::mt19937_64& rng, int n) {
  const Matrix G = random_matrix(rng, n, n);
  return Matrix(0.5 * (G + G.transpose()));
}

// SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(std::mt19937_64& rng, int n, double lo, double hi) {
  const Matrix G = random_matrix(rng, n, n);
  Eigen::HouseholderQR<Matrix> qr(G);
  const Matrix Q = qr.householderQ();
  std::uniform_real_distribution<double> u(lo, hi);
  Vector d(n);
  for (int i = 0; i < n; ++i) d(i) = u(rng);
  return Matrix(Q * d.asDiagonal() * Q.transpose());
}

// Hurwitz matrix: random orthogonal similarity of a negative-definite
// diagonal plus a skew part.
inline Matrix random_hurwitz(std::mt19937_64& rng, int n) {
  const Matrix S = random_spd(rng, n, 0.2, 2.0);
  const Matrix G = random_matrix(rng, n, n);
  return Matrix(0.5 * (G - G.transpose()) - S);
}

// Schur-stable matrix: spectral radius scaled below rho.
inline Matrix random_schur_stable(std::mt19937_64& rng, int n, double rho) {
  Matrix A = random_matrix(rng, n, n);
  const double r = A.eigenvalues().cwiseAbs().maxCoeff();
  return Matrix(A * (rho / std::max(r, 1e-12)));
}

}  // namespace tfs::testutil
