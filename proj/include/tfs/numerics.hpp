#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error hierarchy. Every failure carries a message naming the offending
// quantity; callers may catch the base type or a specific one.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericsError : Error {
  using Error::Error;
};
struct NotHurwitzError : NumericsError {
  using NumericsError::NumericsError;
};
struct NotSchurStableError : NumericsError {
  using NumericsError::NumericsError;
};
struct NotSpdError : NumericsError {
  using NumericsError::NumericsError;
};
struct IndefiniteError : NumericsError {
  using NumericsError::NumericsError;
};
struct OffGridError : NumericsError {
  using NumericsError::NumericsError;
};
struct NonFiniteError : NumericsError {
  using NumericsError::NumericsError;
};
struct SingularError : NumericsError {
  using NumericsError::NumericsError;
};

// Uniform time grid t_k = t0 + k*h, k = 0..steps. All interval endpoints used
// by the rest of the library must land on nodes (relative tolerance 1e-9).
class TimeGrid {
 public:
  TimeGrid(double t0, double h, int steps);

  double t0() const { return t0_; }
  double h() const { return h_; }
  int steps() const { return steps_; }
  int node_count() const { return steps_ + 1; }
  double t_end() const { return node(steps_); }
  double node(int k) const { return t0_ + h_ * k; }

  // Maps a time to its node index; throws OffGridError when t is not a node.
  int index_of(double t) const;

 private:
  double t0_;
  double h_;
  int steps_;
};

// Solves A P + P A' + S = 0 for symmetric S >= 0 via the Kronecker-vectorized
// linear system. Throws NotHurwitzError when the system is singular or the
// solution fails the SPD check (S degenerate in an unreachable direction).
Matrix solve_lyapunov_continuous(const Matrix& A, const Matrix& S);

// Solves P = A P A' + S. Throws NotSchurStableError on singularity or a
// non-SPD solution.
Matrix solve_lyapunov_discrete(const Matrix& A, const Matrix& S);

// Symmetric positive definite square root. Eigenvalues below 1e-12 times the
// largest are rejected with NotSpdError.
Matrix sqrtm_spd(const Matrix& M);

// Positive semidefinite square root: negative eigenvalues are clamped to
// zero. Throws IndefiniteError when an eigenvalue is below -tol_scale.
Matrix psd_sqrt(const Matrix& M, double clamp_tol = 1e-10);

// Inverse of M + max(0, eps - lambda_min) I for symmetric M. Throws
// IndefiniteError when lambda_min < -eps.
Matrix psd_inverse(const Matrix& M, double eps);

// Derivative of t -> P(t)^{-1/2} given P and dP/dt, obtained from the
// Sylvester equation X P^{-1/2} + P^{-1/2} X = -P^{-1} Pdot P^{-1} solved in
// the eigenbasis of P. P must be SPD; Pdot is symmetrized on entry.
Matrix ddt_inv_sqrt(const Matrix& P, const Matrix& Pdot);

// One classical RK4 step of X' = rhs(t, X) from t with signed step dt.
Matrix rk4_step(const std::function<Matrix(double, const Matrix&)>& rhs,
                double t, const Matrix& X, double dt);

// Integrates X' = rhs(t, X) node to node over [grid.node(k_begin),
// grid.node(k_end)], k_begin <= k_end, one RK4 step per grid interval.
// Returns one matrix per node, X0 first. When symmetrize is set the state is
// replaced by its symmetric part after every step. Throws NonFiniteError if
// any state entry stops being finite.
std::vector<Matrix> integrate_matrix_ode(
    const std::function<Matrix(double, const Matrix&)>& rhs, const Matrix& X0,
    const TimeGrid& grid, int k_begin, int k_end, bool symmetrize = false);

// State transition matrix Phi(t2, t1) of x' = A(t) x for A sampled on the
// grid (one matrix per node, midpoints by linear interpolation). Requires
// t1 <= t2, both grid nodes.
Matrix transition_matrix(const std::vector<Matrix>& A_path,
                         const TimeGrid& grid, double t1, double t2);

// Linear interpolation helper for grid-sampled coefficient paths. t must lie
// inside the grid span; values between nodes are blended linearly.
Matrix interp_path(const std::vector<Matrix>& path, const TimeGrid& grid,
                   double t);

void require_finite(const Matrix& M, const char* what);

}  // namespace tfs
