#include "tfs/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace tfs {

namespace {

double inversion_floor(const Matrix& M) {
  return 1e-12 * std::max(1.0, M.trace() / M.rows());
}

bool same_grid(const TimeGrid& a, const TimeGrid& b) {
  return a.t0() == b.t0() && a.h() == b.h() && a.steps() == b.steps();
}

}  // namespace

SmootherResult fuse(const FilterResult& fwd, const FilterResult& bwd) {
  if (fwd.direction != FilterDirection::Forward ||
      bwd.direction != FilterDirection::Backward)
    throw PatternMismatchError("fuse: expected one forward and one backward pass");
  if (!same_grid(fwd.grid, bwd.grid))
    throw PatternMismatchError("fuse: passes live on different grids");
  if (fwd.estimate.size() != bwd.estimate.size() ||
      fwd.estimate.empty() ||
      fwd.estimate.front().size() != bwd.estimate.front().size())
    throw PatternMismatchError("fuse: pass shapes do not match");

  const int n = static_cast<int>(fwd.estimate.front().size());
  const Matrix I = Matrix::Identity(n, n);

  SmootherResult out(fwd.grid);
  const int nodes = fwd.grid.node_count();
  out.estimate.reserve(nodes);
  out.covariance.reserve(nodes);
  out.forward_weight.reserve(nodes);
  out.backward_weight.reserve(nodes);

  for (int j = 0; j < nodes; ++j) {
    const Matrix& Qf = fwd.covariance[j];
    const Matrix& Qb = bwd.covariance[j];
    const Matrix Qfi = psd_inverse(Qf, inversion_floor(Qf));
    const Matrix Qbi = psd_inverse(Qb, inversion_floor(Qb));
    const Matrix M = Qfi + Qbi - I;
    Matrix Q = psd_inverse(M, inversion_floor(M));
    Q = 0.5 * (Q + Q.transpose());
    out.covariance.push_back(Q);
    out.estimate.push_back(Q * (Qfi * fwd.estimate[j] + Qbi * bwd.estimate[j]));
    out.forward_weight.push_back(Q * Qfi);
    out.backward_weight.push_back(Q * Qbi);
  }
  return out;
}

BatchOracle::BatchOracle(const LtvSystem& sys,
                         const ObservationPattern& pattern)
    : grid_(sys.grid()), n_(sys.n()), m_(sys.m()) {
  if (sys.kind() != TimeKind::Discrete)
    throw Error("batch oracle: requires a discrete-kind model");
  pattern.validate(grid_);
  const LtvSystem model = pattern.mode() == InfoMode::SignalLoss
                              ? apply_signal_loss(sys, pattern)
                              : sys;

  const int N = grid_.steps();
  const int q = sys.p();
  const int dim = n_ + N * q;

  xmap_.resize(N + 1);
  dymap_.resize(N);
  xmap_[0] = Matrix::Zero(n_, dim);
  xmap_[0].leftCols(n_) = psd_sqrt(model.P0());
  for (int k = 0; k < N; ++k) {
    Matrix w = Matrix::Zero(q, dim);
    w.middleCols(n_ + k * q, q) = Matrix::Identity(q, q);
    xmap_[k + 1] = model.A()[k] * xmap_[k] + model.B()[k] * w;
    dymap_[k] = model.C()[k] * xmap_[k] + model.D()[k] * w;
  }

  if (pattern.mode() == InfoMode::SignalLoss) {
    for (int k = 0; k < N; ++k) entries_.push_back({dymap_[k], k, k});
    return;
  }
  for (const auto& blk : pattern.blocks(grid_)) {
    if (blk.observed) {
      for (int k = blk.begin; k < blk.end; ++k)
        entries_.push_back({dymap_[k], k, k});
    } else if (pattern.mode() == InfoMode::ProcessValues) {
      Matrix map = Matrix::Zero(m_, dim);
      for (int k = blk.begin; k < blk.end; ++k) map += dymap_[k];
      entries_.push_back({map, blk.begin, blk.end - 1});
    }
  }
}

NodeMoments BatchOracle::condition_on(int node,
                                      const std::vector<Vector>& increments,
                                      bool use_forward,
                                      bool use_backward) const {
  if (node < 0 || node > grid_.steps())
    throw Error("batch oracle: node out of range");
  if (static_cast<int>(increments.size()) != grid_.steps())
    throw PatternMismatchError(
        "batch oracle: increment count does not match the grid");

  std::vector<const Entry*> admissible;
  for (const Entry& e : entries_)
    if ((use_forward && e.last < node) || (use_backward && e.first >= node))
      admissible.push_back(&e);

  const Matrix& X = xmap_[node];
  if (admissible.empty())
    return {Vector::Zero(n_), Matrix(X * X.transpose())};

  int rows = 0;
  for (const Entry* e : admissible) rows += static_cast<int>(e->map.rows());
  Matrix O(rows, X.cols());
  Vector v(rows);
  int at = 0;
  for (const Entry* e : admissible) {
    O.middleRows(at, e->map.rows()) = e->map;
    Vector value = Vector::Zero(m_);
    for (int k = e->first; k <= e->last; ++k) value += increments[k];
    v.segment(at, e->map.rows()) = value;
    at += static_cast<int>(e->map.rows());
  }

  const Matrix Soo = O * O.transpose();
  const Eigen::LDLT<Matrix> ldlt(Soo);
  if (ldlt.info() != Eigen::Success)
    throw SingularError("batch oracle: observation covariance is singular");
  const Matrix W = ldlt.solve(O * X.transpose()).transpose();
  return {Vector(W * v),
          Matrix(X * X.transpose() - W * (O * X.transpose()))};
}

NodeMoments BatchOracle::forward(int node,
                                 const std::vector<Vector>& increments) const {
  return condition_on(node, increments, true, false);
}

NodeMoments BatchOracle::backward(
    int node, const std::vector<Vector>& increments) const {
  return condition_on(node, increments, false, true);
}

NodeMoments BatchOracle::smoothed(
    int node, const std::vector<Vector>& increments) const {
  return condition_on(node, increments, true, true);
}

std::vector<NodeMoments> batch_oracle(const LtvSystem& sys,
                                      const ObservationPattern& pattern,
                                      const std::vector<Vector>& increments) {
  const BatchOracle oracle(sys, pattern);
  std::vector<NodeMoments> out;
  out.reserve(sys.grid().node_count());
  for (int j = 0; j <= sys.grid().steps(); ++j)
    out.push_back(oracle.smoothed(j, increments));
  return out;
}

}  // namespace tfs
