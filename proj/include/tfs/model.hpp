#pragma once

#include <complex>
#include <vector>

#include "tfs/numerics.hpp"

namespace tfs {

using CMatrix = Eigen::MatrixXcd;

enum class TimeKind { Continuous, Discrete };

struct NotBalancedError : Error {
  using Error::Error;
};

// Linear time-varying Gauss-Markov model sampled on a uniform grid, one
// matrix per node. Continuous kind:
//   dx = A(t) x dt + B(t) dw,   dy = C(t) x dt + D(t) dw,
// discrete kind:
//   x(k+1) = A(k) x(k) + B(k) w(k),   y(k) = C(k) x(k) + D(k) w(k),
// with w standard (increments N(0, h I) respectively N(0, I)). For the
// discrete kind the matrices stored at the last node are unused padding.
// P0 is the initial state covariance (PSD; SPD required for balancing).
class LtvSystem {
 public:
  LtvSystem(TimeGrid grid, TimeKind kind, std::vector<Matrix> A,
            std::vector<Matrix> B, std::vector<Matrix> C,
            std::vector<Matrix> D, Matrix P0);

  static LtvSystem constant(const TimeGrid& grid, TimeKind kind,
                            const Matrix& A, const Matrix& B, const Matrix& C,
                            const Matrix& D, const Matrix& P0);

  const TimeGrid& grid() const { return grid_; }
  TimeKind kind() const { return kind_; }
  int n() const { return n_; }
  int m() const { return m_; }
  int p() const { return p_; }
  const std::vector<Matrix>& A() const { return A_; }
  const std::vector<Matrix>& B() const { return B_; }
  const std::vector<Matrix>& C() const { return C_; }
  const std::vector<Matrix>& D() const { return D_; }
  const Matrix& P0() const { return P0_; }

  std::vector<Matrix>& mutable_C() { return C_; }

 private:
  TimeGrid grid_;
  TimeKind kind_;
  std::vector<Matrix> A_, B_, C_, D_;
  Matrix P0_;
  int n_, m_, p_;
};

// State covariance P(t) from P0 under the open-loop dynamics, with cached
// square roots and, for the continuous kind, the balancing correction
// R(t) = [d/dt P(t)^{-1/2}] P(t)^{1/2} (zero for the discrete kind).
struct CovariancePath {
  std::vector<Matrix> P;
  std::vector<Matrix> sqrtP;
  std::vector<Matrix> inv_sqrtP;
  std::vector<Matrix> R;
};

// Continuous: dP/dt = A P + P A' + B B' integrated node to node (RK4,
// symmetrized). Discrete: P(k+1) = A P A' + B B'. Every node must stay SPD;
// NotSpdError otherwise.
CovariancePath propagate_covariance(const LtvSystem& sys);

// Model rewritten in the unit-covariance state x_bal = P^{-1/2} x, together
// with the matrices of the time-reversed representation of the same process:
//   continuous: d xbar = -A' xbar dt + Bbar dwbar, dy = Cbar xbar dt + D dwbar
//   discrete:   xbar(k-1) = A(k)' xbar(k) + Bbar(k) wbar(k),
//               y(k) = Cbar(k) xbar(k) + Dbar(k) wbar(k),
// where xbar(k) is the (k+1)-node state. Forward and backward share the unit
// state covariance.
struct BalancedModel {
  TimeGrid grid;
  TimeKind kind;
  std::vector<Matrix> A, B, C, D;
  std::vector<Matrix> Bbar, Cbar, Dbar;
  int n = 0, m = 0, p = 0;

  BalancedModel(TimeGrid g, TimeKind k) : grid(g), kind(k) {}
};

// Substitutes A <- P^{-1/2} A P^{1/2} + R, B <- P^{-1/2} B, C <- C P^{1/2}
// (continuous) respectively A(k) <- P(k+1)^{-1/2} A(k) P(k)^{1/2},
// B(k) <- P(k+1)^{-1/2} B(k), C(k) <- C(k) P(k)^{1/2} (discrete), then
// attaches the backward matrices. Verifies the balanced identity
// A + A' + B B' = 0 respectively A A' + B B' = I at every node to 1e-8;
// NotBalancedError otherwise.
BalancedModel balance(const LtvSystem& sys, const CovariancePath& cov);

// Fills Bbar, Cbar, Dbar of an already balanced model:
//   continuous: Bbar = B, Cbar = C + D B', Dbar = D
//   discrete:   Bbar = H', Cbar = C A' + D B', Dbar = C Bbar + D J'
// with (H, J) the rows completing [A B] to an orthogonal matrix.
void backward_model(BalancedModel& bal);

// Square completion U = [F G; H J] of the balanced pair, per node. The
// continuous kind stores H = -G', J = I. The discrete kind completes the
// orthonormal rows [F G] by QR, sign-fixed so det(U) = +1.
struct AllPassExtension {
  TimeKind kind;
  std::vector<Matrix> F, G, H, J;
};

AllPassExtension allpass_extension(const BalancedModel& bal);

struct StructuralFunctionValue {
  CMatrix U;
  double residual;  // || U(freq) U*(freq) - I ||_F at the dual point
};

// Evaluates U(freq) = J + H (freq I - F)^{-1} G at the given node, plus the
// all-pass residual against the adjoint evaluated at -freq (continuous) or
// 1/freq (discrete). Throws SingularError when freq or its dual point is too
// close to an eigenvalue of F (or freq ~ 0 for the discrete kind).
StructuralFunctionValue eval_structural_function(const AllPassExtension& ext,
                                                 int node,
                                                 std::complex<double> freq);

// W(s) = C (s I - A)^{-1} B + D. Shared by tests and the verification suite
// for transfer-function identities.
CMatrix eval_transfer(const Matrix& A, const Matrix& B, const Matrix& C,
                      const Matrix& D, std::complex<double> s);

// Stationary covariance of the node-0 model: the Lyapunov solution matching
// the time kind.
Matrix stationary_initial_covariance(TimeKind kind, const Matrix& A0,
                                     const Matrix& B0);

// Materializes the forward part of a balanced model as a system with unit
// initial covariance.
LtvSystem forward_system(const BalancedModel& bal);

}  // namespace tfs
