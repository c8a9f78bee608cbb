#include "tfs/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <utility>

namespace tfs {

namespace {

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

void check_path(const std::vector<Matrix>& path, int rows, int cols,
                int nodes, const char* what) {
  if (static_cast<int>(path.size()) != nodes) {
    std::ostringstream msg;
    msg << what << ": expected " << nodes << " node matrices, got "
        << path.size();
    throw Error(msg.str());
  }
  for (const Matrix& M : path) {
    if (M.rows() != rows || M.cols() != cols)
      throw Error(std::string(what) + ": inconsistent dimensions across nodes");
    require_finite(M, what);
  }
}

}  // namespace

LtvSystem::LtvSystem(TimeGrid grid, TimeKind kind, std::vector<Matrix> A,
                     std::vector<Matrix> B, std::vector<Matrix> C,
                     std::vector<Matrix> D, Matrix P0)
    : grid_(grid),
      kind_(kind),
      A_(std::move(A)),
      B_(std::move(B)),
      C_(std::move(C)),
      D_(std::move(D)),
      P0_(std::move(P0)) {
  if (A_.empty()) throw Error("LtvSystem: empty coefficient path");
  n_ = static_cast<int>(A_.front().rows());
  p_ = static_cast<int>(B_.front().cols());
  m_ = static_cast<int>(C_.front().rows());
  const int nodes = grid_.node_count();
  check_path(A_, n_, n_, nodes, "LtvSystem A");
  check_path(B_, n_, p_, nodes, "LtvSystem B");
  check_path(C_, m_, n_, nodes, "LtvSystem C");
  check_path(D_, m_, p_, nodes, "LtvSystem D");
  if (P0_.rows() != n_ || P0_.cols() != n_)
    throw Error("LtvSystem: P0 must be n x n");
  require_finite(P0_, "LtvSystem P0");
  if ((P0_ - P0_.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, P0_.cwiseAbs().maxCoeff()))
    throw Error("LtvSystem: P0 must be symmetric");
}

LtvSystem LtvSystem::constant(const TimeGrid& grid, TimeKind kind,
                              const Matrix& A, const Matrix& B,
                              const Matrix& C, const Matrix& D,
                              const Matrix& P0) {
  const int nodes = grid.node_count();
  return LtvSystem(grid, kind, std::vector<Matrix>(nodes, A),
                   std::vector<Matrix>(nodes, B), std::vector<Matrix>(nodes, C),
                   std::vector<Matrix>(nodes, D), P0);
}

CovariancePath propagate_covariance(const LtvSystem& sys) {
  const TimeGrid& grid = sys.grid();
  const int nodes = grid.node_count();
  CovariancePath out;
  out.P.reserve(nodes);

  if (sys.kind() == TimeKind::Continuous) {
    auto rhs = [&](double t, const Matrix& P) {
      const Matrix At = interp_path(sys.A(), grid, t);
      const Matrix Bt = interp_path(sys.B(), grid, t);
      return Matrix(At * P + P * At.transpose() + Bt * Bt.transpose());
    };
    out.P = integrate_matrix_ode(rhs, symmetrized(sys.P0()), grid, 0,
                                 grid.steps(), true);
  } else {
    Matrix P = symmetrized(sys.P0());
    out.P.push_back(P);
    for (int k = 0; k < grid.steps(); ++k) {
      P = symmetrized(sys.A()[k] * P * sys.A()[k].transpose() +
                      sys.B()[k] * sys.B()[k].transpose());
      out.P.push_back(P);
    }
  }

  out.sqrtP.reserve(nodes);
  out.inv_sqrtP.reserve(nodes);
  out.R.reserve(nodes);
  for (int k = 0; k < nodes; ++k) {
    Matrix S;
    try {
      S = sqrtm_spd(out.P[k]);
    } catch (const NotSpdError&) {
      std::ostringstream msg;
      msg << "propagate_covariance: P lost positive definiteness at node "
          << k;
      throw NotSpdError(msg.str());
    }
    out.sqrtP.push_back(S);
    out.inv_sqrtP.push_back(S.inverse());
    if (sys.kind() == TimeKind::Continuous) {
      const Matrix Pdot = sys.A()[k] * out.P[k] +
                          out.P[k] * sys.A()[k].transpose() +
                          sys.B()[k] * sys.B()[k].transpose();
      out.R.push_back(ddt_inv_sqrt(out.P[k], Pdot) * S);
    } else {
      out.R.push_back(Matrix::Zero(sys.n(), sys.n()));
    }
  }
  return out;
}

BalancedModel balance(const LtvSystem& sys, const CovariancePath& cov) {
  const TimeGrid& grid = sys.grid();
  const int nodes = grid.node_count();
  if (static_cast<int>(cov.P.size()) != nodes)
    throw Error("balance: covariance path does not match the grid");

  BalancedModel bal(grid, sys.kind());
  bal.n = sys.n();
  bal.m = sys.m();
  bal.p = sys.p();
  bal.A.reserve(nodes);
  bal.B.reserve(nodes);
  bal.C.reserve(nodes);
  bal.D = sys.D();

  for (int k = 0; k < nodes; ++k) {
    bal.C.push_back(sys.C()[k] * cov.sqrtP[k]);
    if (sys.kind() == TimeKind::Continuous) {
      bal.A.push_back(cov.inv_sqrtP[k] * sys.A()[k] * cov.sqrtP[k] + cov.R[k]);
      bal.B.push_back(cov.inv_sqrtP[k] * sys.B()[k]);
    } else {
      const int kp = std::min(k + 1, nodes - 1);  // last node is padding
      bal.A.push_back(cov.inv_sqrtP[kp] * sys.A()[k] * cov.sqrtP[k]);
      bal.B.push_back(cov.inv_sqrtP[kp] * sys.B()[k]);
    }
  }

  const int check_nodes =
      sys.kind() == TimeKind::Continuous ? nodes : nodes - 1;
  for (int k = 0; k < check_nodes; ++k) {
    double residual;
    if (sys.kind() == TimeKind::Continuous) {
      residual = (bal.A[k] + bal.A[k].transpose() +
                  bal.B[k] * bal.B[k].transpose())
                     .cwiseAbs()
                     .maxCoeff();
    } else {
      residual = (bal.A[k] * bal.A[k].transpose() +
                  bal.B[k] * bal.B[k].transpose() -
                  Matrix::Identity(bal.n, bal.n))
                     .cwiseAbs()
                     .maxCoeff();
    }
    if (residual > 1e-8) {
      std::ostringstream msg;
      msg << "balance: balanced identity residual " << residual << " at node "
          << k;
      throw NotBalancedError(msg.str());
    }
  }

  backward_model(bal);
  return bal;
}

void backward_model(BalancedModel& bal) {
  const int nodes = bal.grid.node_count();
  bal.Bbar.clear();
  bal.Cbar.clear();
  bal.Dbar.clear();
  bal.Bbar.reserve(nodes);
  bal.Cbar.reserve(nodes);
  bal.Dbar.reserve(nodes);

  if (bal.kind == TimeKind::Continuous) {
    bal.Bbar = bal.B;
    bal.Dbar = bal.D;
    for (int k = 0; k < nodes; ++k)
      bal.Cbar.push_back(bal.C[k] + bal.D[k] * bal.B[k].transpose());
    return;
  }

  const AllPassExtension ext = allpass_extension(bal);
  for (int k = 0; k < nodes; ++k) {
    const Matrix Bbar = ext.H[k].transpose();
    bal.Bbar.push_back(Bbar);
    bal.Cbar.push_back(bal.C[k] * bal.A[k].transpose() +
                       bal.D[k] * bal.B[k].transpose());
    bal.Dbar.push_back(bal.C[k] * Bbar + bal.D[k] * ext.J[k].transpose());
  }
}

AllPassExtension allpass_extension(const BalancedModel& bal) {
  const int nodes = bal.grid.node_count();
  AllPassExtension ext;
  ext.kind = bal.kind;
  ext.F = bal.A;
  ext.G = bal.B;
  ext.H.reserve(nodes);
  ext.J.reserve(nodes);

  if (bal.kind == TimeKind::Continuous) {
    for (int k = 0; k < nodes; ++k) {
      ext.H.push_back(-bal.B[k].transpose());
      ext.J.push_back(Matrix::Identity(bal.p, bal.p));
    }
    return ext;
  }

  for (int k = 0; k < nodes; ++k) {
    const int n = bal.n, q = bal.p;
    Matrix FG(n, n + q);
    FG << bal.A[k], bal.B[k];
    // Orthogonal complement of the (orthonormal) rows of [F G]: the trailing
    // q columns of a full QR of [F G]'.
    Eigen::HouseholderQR<Matrix> qr(Matrix(FG.transpose()));
    const Matrix Q = qr.householderQ();
    Matrix HJ = Q.rightCols(q).transpose();
    Matrix U(n + q, n + q);
    U << FG, HJ;
    if (U.determinant() < 0.0) HJ.row(q - 1) *= -1.0;
    ext.H.push_back(HJ.leftCols(n));
    ext.J.push_back(HJ.rightCols(q));
  }
  return ext;
}

StructuralFunctionValue eval_structural_function(const AllPassExtension& ext,
                                                 int node,
                                                 std::complex<double> freq) {
  if (node < 0 || node >= static_cast<int>(ext.F.size()))
    throw Error("eval_structural_function: node out of range");
  const Matrix& F = ext.F[node];
  const Matrix& G = ext.G[node];
  const Matrix& H = ext.H[node];
  const Matrix& J = ext.J[node];
  const int n = static_cast<int>(F.rows());

  const Eigen::VectorXcd eigs = F.eigenvalues();
  auto check_resolvent_point = [&](std::complex<double> z) {
    const double dist = (eigs.array() - z).abs().minCoeff();
    if (dist < 1e-10 * std::max(1.0, std::abs(z)))
      throw SingularError(
          "eval_structural_function: frequency too close to a pole");
  };

  const CMatrix In = CMatrix::Identity(n, n);
  auto resolvent = [&](std::complex<double> z) {
    check_resolvent_point(z);
    return CMatrix((z * In - F.cast<std::complex<double>>()).partialPivLu()
                       .solve(In));
  };

  StructuralFunctionValue out{CMatrix(), 0.0};
  if (ext.kind == TimeKind::Continuous) {
    out.U = J.cast<std::complex<double>>() +
            H.cast<std::complex<double>>() * resolvent(freq) *
                G.cast<std::complex<double>>();
    // Adjoint at the mirrored point: U*(s) = J' - G' (s I + F')^{-1} H'.
    check_resolvent_point(-freq);
    const CMatrix Rm =
        (freq * In + F.transpose().cast<std::complex<double>>())
            .partialPivLu()
            .solve(In);
    const CMatrix Ustar = J.transpose().cast<std::complex<double>>() -
                          G.transpose().cast<std::complex<double>>() * Rm *
                              H.transpose().cast<std::complex<double>>();
    out.residual =
        (out.U * Ustar - CMatrix::Identity(J.rows(), J.cols())).norm();
  } else {
    if (std::abs(freq) < 1e-12)
      throw SingularError("eval_structural_function: z = 0 has no dual point");
    out.U = J.cast<std::complex<double>>() +
            H.cast<std::complex<double>>() * resolvent(freq) *
                G.cast<std::complex<double>>();
    // U*(z) = J' + G' (z^{-1} I - F')^{-1} H'.
    const std::complex<double> zi = 1.0 / freq;
    check_resolvent_point(zi);
    const CMatrix Ri =
        (zi * In - F.transpose().cast<std::complex<double>>())
            .partialPivLu()
            .solve(In);
    const CMatrix Ustar = J.transpose().cast<std::complex<double>>() +
                          G.transpose().cast<std::complex<double>>() * Ri *
                              H.transpose().cast<std::complex<double>>();
    out.residual =
        (out.U * Ustar - CMatrix::Identity(J.rows(), J.cols())).norm();
  }
  return out;
}

CMatrix eval_transfer(const Matrix& A, const Matrix& B, const Matrix& C,
                      const Matrix& D, std::complex<double> s) {
  const int n = static_cast<int>(A.rows());
  const CMatrix In = CMatrix::Identity(n, n);
  const CMatrix R =
      (s * In - A.cast<std::complex<double>>()).partialPivLu().solve(In);
  return C.cast<std::complex<double>>() * R * B.cast<std::complex<double>>() +
         D.cast<std::complex<double>>();
}

Matrix stationary_initial_covariance(TimeKind kind, const Matrix& A0,
                                     const Matrix& B0) {
  const Matrix S = B0 * B0.transpose();
  return kind == TimeKind::Continuous ? solve_lyapunov_continuous(A0, S)
                                      : solve_lyapunov_discrete(A0, S);
}

LtvSystem forward_system(const BalancedModel& bal) {
  return LtvSystem(bal.grid, bal.kind, bal.A, bal.B, bal.C, bal.D,
                   Matrix::Identity(bal.n, bal.n));
}

}  // namespace tfs
