#include "tfs/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace tfs {

namespace {

// kron(A, B) for dense matrices, column-major vec convention:
// vec(B X A') = kron(A, B) vec(X).
Matrix kron(const Matrix& A, const Matrix& B) {
  Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

// SPD acceptance: smallest eigenvalue positive and not below 1e-12 times the
// largest. Returns false for the zero matrix.
bool is_spd(const Matrix& M, double* min_eig = nullptr) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M));
  if (es.info() != Eigen::Success) return false;
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (min_eig) *min_eig = lo;
  return hi > 0.0 && lo > 0.0 && lo >= 1e-12 * hi;
}

void require_square(const Matrix& M, const char* what) {
  if (M.rows() != M.cols())
    throw NumericsError(std::string(what) + ": matrix must be square");
}

}  // namespace

void require_finite(const Matrix& M, const char* what) {
  if (!M.allFinite())
    throw NonFiniteError(std::string(what) + ": non-finite entries");
}

TimeGrid::TimeGrid(double t0, double h, int steps)
    : t0_(t0), h_(h), steps_(steps) {
  if (!(h > 0.0) || steps < 1)
    throw NumericsError("TimeGrid: requires h > 0 and steps >= 1");
}

int TimeGrid::index_of(double t) const {
  const double raw = (t - t0_) / h_;
  const int k = static_cast<int>(std::lround(raw));
  const double scale = std::max({std::abs(t), std::abs(t0_), 1.0});
  if (k < 0 || k > steps_ || std::abs(node(k) - t) > 1e-9 * scale) {
    std::ostringstream msg;
    msg << "TimeGrid: t = " << t << " is not a grid node";
    throw OffGridError(msg.str());
  }
  return k;
}

Matrix solve_lyapunov_continuous(const Matrix& A, const Matrix& S) {
  require_square(A, "solve_lyapunov_continuous");
  if (S.rows() != A.rows() || S.cols() != A.cols())
    throw NumericsError("solve_lyapunov_continuous: S must match A");
  const Eigen::Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  // vec(AP) = kron(I, A) vec(P); vec(PA') = kron(A, I) vec(P).
  const Matrix M = kron(I, A) + kron(A, I);
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible())
    throw NotHurwitzError(
        "solve_lyapunov_continuous: vectorized system is singular");
  const Vector p = lu.solve(Vector(-symmetrized(S).reshaped()));
  Matrix P = symmetrized(p.reshaped(n, n));
  require_finite(P, "solve_lyapunov_continuous");
  if (!is_spd(P))
    throw NotHurwitzError(
        "solve_lyapunov_continuous: solution is not positive definite");
  const double residual = (A * P + P * A.transpose() + S).norm();
  const double scale = A.norm() * P.norm() + S.norm();
  if (residual > 1e-10 * std::max(scale, 1.0))
    throw NumericsError("solve_lyapunov_continuous: residual check failed");
  return P;
}

Matrix solve_lyapunov_discrete(const Matrix& A, const Matrix& S) {
  require_square(A, "solve_lyapunov_discrete");
  if (S.rows() != A.rows() || S.cols() != A.cols())
    throw NumericsError("solve_lyapunov_discrete: S must match A");
  const Eigen::Index n = A.rows();
  const Matrix M = Matrix::Identity(n * n, n * n) - kron(A, A);
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible())
    throw NotSchurStableError(
        "solve_lyapunov_discrete: vectorized system is singular");
  const Vector p = lu.solve(Vector(symmetrized(S).reshaped()));
  Matrix P = symmetrized(p.reshaped(n, n));
  require_finite(P, "solve_lyapunov_discrete");
  if (!is_spd(P))
    throw NotSchurStableError(
        "solve_lyapunov_discrete: solution is not positive definite");
  const double residual = (P - A * P * A.transpose() - S).norm();
  const double scale = A.norm() * P.norm() * A.norm() + S.norm();
  if (residual > 1e-10 * std::max(scale, 1.0))
    throw NumericsError("solve_lyapunov_discrete: residual check failed");
  return P;
}

Matrix sqrtm_spd(const Matrix& M) {
  require_square(M, "sqrtm_spd");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M));
  if (es.info() != Eigen::Success)
    throw NumericsError("sqrtm_spd: eigendecomposition failed");
  const Vector& d = es.eigenvalues();
  const double hi = d.maxCoeff();
  if (!(hi > 0.0) || d.minCoeff() < 1e-12 * hi)
    throw NotSpdError("sqrtm_spd: matrix is not positive definite");
  return symmetrized(es.eigenvectors() * d.cwiseSqrt().asDiagonal() *
                     es.eigenvectors().transpose());
}

Matrix psd_sqrt(const Matrix& M, double clamp_tol) {
  require_square(M, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M));
  if (es.info() != Eigen::Success)
    throw NumericsError("psd_sqrt: eigendecomposition failed");
  Vector d = es.eigenvalues();
  const double scale = std::max(d.cwiseAbs().maxCoeff(), 1.0);
  if (d.minCoeff() < -clamp_tol * scale)
    throw IndefiniteError("psd_sqrt: matrix has a negative eigenvalue");
  d = d.cwiseMax(0.0);
  return symmetrized(es.eigenvectors() * d.cwiseSqrt().asDiagonal() *
                     es.eigenvectors().transpose());
}

Matrix psd_inverse(const Matrix& M, double eps) {
  require_square(M, "psd_inverse");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M));
  if (es.info() != Eigen::Success)
    throw NumericsError("psd_inverse: eigendecomposition failed");
  const Vector& d = es.eigenvalues();
  const double lo = d.minCoeff();
  if (lo < -eps)
    throw IndefiniteError("psd_inverse: matrix is indefinite beyond jitter");
  const double shift = std::max(0.0, eps - lo);
  const Vector dinv = (d.array() + shift).inverse();
  return symmetrized(es.eigenvectors() * dinv.asDiagonal() *
                     es.eigenvectors().transpose());
}

Matrix ddt_inv_sqrt(const Matrix& P, const Matrix& Pdot) {
  require_square(P, "ddt_inv_sqrt");
  if (Pdot.rows() != P.rows() || Pdot.cols() != P.cols())
    throw NumericsError("ddt_inv_sqrt: Pdot must match P");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(P));
  if (es.info() != Eigen::Success)
    throw NumericsError("ddt_inv_sqrt: eigendecomposition failed");
  const Vector& d = es.eigenvalues();
  const double hi = d.maxCoeff();
  if (!(hi > 0.0) || d.minCoeff() < 1e-12 * hi)
    throw NotSpdError("ddt_inv_sqrt: P is not positive definite");
  const Matrix& V = es.eigenvectors();
  const Matrix Pd = V.transpose() * symmetrized(Pdot) * V;
  // In the eigenbasis the Sylvester equation decouples entrywise:
  // Y_ij (1/sqrt(d_i) + 1/sqrt(d_j)) = -Pd_ij / (d_i d_j).
  Matrix Y(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      const double si = std::sqrt(d(i)), sj = std::sqrt(d(j));
      Y(i, j) = -Pd(i, j) / (d(i) * d(j) * (1.0 / si + 1.0 / sj));
    }
  return symmetrized(V * Y * V.transpose());
}

Matrix rk4_step(const std::function<Matrix(double, const Matrix&)>& rhs,
                double t, const Matrix& X, double dt) {
  const Matrix k1 = rhs(t, X);
  const Matrix k2 = rhs(t + 0.5 * dt, X + (0.5 * dt) * k1);
  const Matrix k3 = rhs(t + 0.5 * dt, X + (0.5 * dt) * k2);
  const Matrix k4 = rhs(t + dt, X + dt * k3);
  return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<Matrix> integrate_matrix_ode(
    const std::function<Matrix(double, const Matrix&)>& rhs, const Matrix& X0,
    const TimeGrid& grid, int k_begin, int k_end, bool symmetrize) {
  if (k_begin < 0 || k_end > grid.steps() || k_begin > k_end)
    throw OffGridError("integrate_matrix_ode: node span out of range");
  std::vector<Matrix> out;
  out.reserve(k_end - k_begin + 1);
  out.push_back(X0);
  Matrix X = X0;
  for (int k = k_begin; k < k_end; ++k) {
    X = rk4_step(rhs, grid.node(k), X, grid.h());
    if (symmetrize) X = symmetrized(X);
    require_finite(X, "integrate_matrix_ode");
    out.push_back(X);
  }
  return out;
}

Matrix transition_matrix(const std::vector<Matrix>& A_path,
                         const TimeGrid& grid, double t1, double t2) {
  if (static_cast<int>(A_path.size()) != grid.node_count())
    throw NumericsError("transition_matrix: A_path does not match grid");
  const int k1 = grid.index_of(t1);
  const int k2 = grid.index_of(t2);
  if (k1 > k2) throw OffGridError("transition_matrix: requires t1 <= t2");
  const Eigen::Index n = A_path.front().rows();
  auto rhs = [&](double t, const Matrix& X) {
    return Matrix(interp_path(A_path, grid, t) * X);
  };
  return integrate_matrix_ode(rhs, Matrix::Identity(n, n), grid, k1, k2)
      .back();
}

Matrix interp_path(const std::vector<Matrix>& path, const TimeGrid& grid,
                   double t) {
  const double raw = (t - grid.t0()) / grid.h();
  const double scale = std::max({std::abs(t), std::abs(grid.t0()), 1.0});
  if (raw < -1e-9 * scale / grid.h() ||
      raw > grid.steps() + 1e-9 * scale / grid.h())
    throw OffGridError("interp_path: t outside grid span");
  const int k = std::min(static_cast<int>(std::floor(raw)), grid.steps() - 1);
  const double w = std::min(std::max(raw - k, 0.0), 1.0);
  if (w == 0.0) return path[k];
  return (1.0 - w) * path[k] + w * path[k + 1];
}

}  // namespace tfs
