#include "tfs/simulate.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace tfs {

std::uint64_t split_seed(std::uint64_t base, std::uint64_t counter) {
  // splitmix64 finalizer applied to the (base, counter) pair.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NoiseStream::NoiseStream(std::uint64_t seed) : rng_(seed) {}

double NoiseStream::uniform() {
  // 53-bit mantissa in (0, 1]; the shifted-by-one form keeps log() finite.
  return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
}

double NoiseStream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform()));
  const double theta = 2.0 * std::numbers::pi * uniform();
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

Vector NoiseStream::normal_vector(int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Trajectory simulate(const LtvSystem& sys, std::uint64_t seed,
                    const std::optional<Vector>& x0) {
  const TimeGrid& grid = sys.grid();
  const int steps = grid.steps();
  NoiseStream noise(seed);

  Trajectory traj(grid);
  traj.seed = seed;
  traj.x.reserve(steps + 1);
  traj.y.reserve(steps + 1);
  traj.dw.reserve(steps);

  if (x0) {
    if (x0->size() != sys.n()) throw Error("simulate: x0 size mismatch");
    traj.x.push_back(*x0);
  } else {
    traj.x.push_back(psd_sqrt(sys.P0()) * noise.normal_vector(sys.n()));
  }
  traj.y.push_back(Vector::Zero(sys.m()));

  const bool continuous = sys.kind() == TimeKind::Continuous;
  const double h = grid.h();
  const double noise_scale = continuous ? std::sqrt(h) : 1.0;
  const double drift_scale = continuous ? h : 1.0;

  for (int k = 0; k < steps; ++k) {
    const Vector dw = noise_scale * noise.normal_vector(sys.p());
    const Vector& xk = traj.x.back();
    Vector xn;
    Vector dy;
    if (continuous) {
      xn = xk + drift_scale * (sys.A()[k] * xk) + sys.B()[k] * dw;
      dy = drift_scale * (sys.C()[k] * xk) + sys.D()[k] * dw;
    } else {
      xn = sys.A()[k] * xk + sys.B()[k] * dw;
      dy = sys.C()[k] * xk + sys.D()[k] * dw;
    }
    traj.dw.push_back(dw);
    traj.x.push_back(xn);
    traj.y.push_back(traj.y.back() + dy);
  }
  return traj;
}

namespace {

GapUpdate make_gap_update(const TimeGrid& grid, TimeKind kind,
                          const std::vector<Matrix>& A,
                          const std::vector<Matrix>& B,
                          const std::vector<Matrix>& C,
                          const std::vector<Matrix>& D, double t1, double t2) {
  const int k1 = grid.index_of(t1);
  const int k2 = grid.index_of(t2);
  if (k1 > k2) throw OffGridError("exact_discretize_gap: requires t1 <= t2");
  const int n = static_cast<int>(A.front().rows());
  const int m = static_cast<int>(C.front().rows());
  const int na = n + m;

  GapUpdate gap;
  gap.t1 = t1;
  gap.t2 = t2;

  Matrix Psi = Matrix::Identity(na, na);
  Matrix W = Matrix::Zero(na, na);

  if (kind == TimeKind::Continuous) {
    // State [Psi | W] of the augmented pair: Psi' = Ahat Psi,
    // W' = Ahat W + W Ahat' + Bhat Bhat', from Psi = I, W = 0 at t1.
    auto augmented = [&](double t) {
      const Matrix At = interp_path(A, grid, t);
      const Matrix Ct = interp_path(C, grid, t);
      Matrix Ahat = Matrix::Zero(na, na);
      Ahat.topLeftCorner(n, n) = At;
      Ahat.bottomLeftCorner(m, n) = Ct;
      return Ahat;
    };
    auto noise_sq = [&](double t) {
      const Matrix Bt = interp_path(B, grid, t);
      const Matrix Dt = interp_path(D, grid, t);
      Matrix Bhat(na, Bt.cols());
      Bhat << Bt, Dt;
      return Matrix(Bhat * Bhat.transpose());
    };
    auto rhs = [&](double t, const Matrix& X) {
      const Matrix Ahat = augmented(t);
      const Matrix Xpsi = X.leftCols(na);
      const Matrix Xw = X.rightCols(na);
      Matrix out(na, 2 * na);
      out.leftCols(na) = Ahat * Xpsi;
      out.rightCols(na) =
          Ahat * Xw + Xw * Ahat.transpose() + noise_sq(t);
      return out;
    };
    Matrix X0(na, 2 * na);
    X0 << Psi, W;
    const Matrix Xend =
        integrate_matrix_ode(rhs, X0, grid, k1, k2).back();
    Psi = Xend.leftCols(na);
    W = 0.5 * (Xend.rightCols(na) + Xend.rightCols(na).transpose());
  } else {
    for (int k = k1; k < k2; ++k) {
      Matrix T = Matrix::Identity(na, na);
      T.topLeftCorner(n, n) = A[k];
      T.bottomLeftCorner(m, n) = C[k];
      Matrix Bhat(na, B[k].cols());
      Bhat << B[k], D[k];
      W = T * W * T.transpose() + Bhat * Bhat.transpose();
      W = 0.5 * (W + W.transpose());
      Psi = T * Psi;
    }
  }

  gap.Ad = Psi.topLeftCorner(n, n);
  gap.Cd = Psi.bottomLeftCorner(m, n);
  gap.gramian = W;
  const Matrix factor = psd_sqrt(W);
  gap.Bd = factor.topRows(n);
  gap.Dd = factor.bottomRows(m);
  return gap;
}

}  // namespace

GapUpdate exact_discretize_gap(const LtvSystem& sys, double t1, double t2) {
  return make_gap_update(sys.grid(), sys.kind(), sys.A(), sys.B(), sys.C(),
                         sys.D(), t1, t2);
}

GapUpdate exact_discretize_gap(const BalancedModel& bal, double t1,
                               double t2) {
  return make_gap_update(bal.grid, bal.kind, bal.A, bal.B, bal.C, bal.D, t1,
                         t2);
}

LtvSystem exact_discretize(const LtvSystem& sys) {
  if (sys.kind() != TimeKind::Discrete) {
    const TimeGrid& grid = sys.grid();
    std::vector<Matrix> A, B, C, D;
    const int steps = grid.steps();
    A.reserve(steps + 1);
    B.reserve(steps + 1);
    C.reserve(steps + 1);
    D.reserve(steps + 1);
    for (int k = 0; k < steps; ++k) {
      const GapUpdate gap =
          exact_discretize_gap(sys, grid.node(k), grid.node(k + 1));
      A.push_back(gap.Ad);
      B.push_back(gap.Bd);
      C.push_back(gap.Cd);
      D.push_back(gap.Dd);
    }
    A.push_back(A.back());  // last node is padding, matching the convention
    B.push_back(B.back());
    C.push_back(C.back());
    D.push_back(D.back());
    return LtvSystem(grid, TimeKind::Discrete, std::move(A), std::move(B),
                     std::move(C), std::move(D), sys.P0());
  }
  return sys;
}

}  // namespace tfs
