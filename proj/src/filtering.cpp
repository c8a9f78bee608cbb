#include "tfs/filtering.hpp"

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>

namespace tfs {

namespace {

Matrix sym(const Matrix& M) { return 0.5 * (M + M.transpose()); }

// Inverse of a small symmetric positive definite matrix with an explicit
// conditioning guard; an innovation covariance losing rank means the output
// model is degenerate, not that the recursion should limp on.
Matrix inverse_spd_checked(const Matrix& S, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(S));
  const Vector& ev = es.eigenvalues();
  const double hi = ev.maxCoeff();
  if (!(ev.minCoeff() > 0.0) || ev.minCoeff() <= 1e-13 * std::max(hi, 1.0))
    throw SingularError(std::string(what) +
                        ": innovation covariance is singular");
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

ObservationPattern::ObservationPattern(InfoMode mode,
                                       std::vector<PatternInterval> intervals)
    : mode_(mode), intervals_(std::move(intervals)) {
  if (intervals_.empty())
    throw PatternMismatchError("observation pattern has no intervals");
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    if (!(intervals_[i].start < intervals_[i].end))
      throw PatternMismatchError("observation pattern interval is empty");
    if (i > 0 && intervals_[i].start < intervals_[i - 1].end)
      throw PatternMismatchError("observation pattern intervals overlap");
  }
}

ObservationPattern ObservationPattern::fully_observed(double t0,
                                                      double t_end) {
  return ObservationPattern(InfoMode::IncrementsOnly, {{t0, t_end, true}});
}

std::vector<ObservationPattern::Block> ObservationPattern::blocks(
    const TimeGrid& grid) const {
  std::vector<Block> out;
  out.reserve(intervals_.size());
  int expected_begin = 0;
  for (const PatternInterval& iv : intervals_) {
    Block b;
    b.begin = grid.index_of(iv.start);
    b.end = grid.index_of(iv.end);
    b.observed = iv.observed;
    if (b.begin != expected_begin)
      throw PatternMismatchError(
          "observation pattern does not tile the grid horizon");
    if (b.begin >= b.end)
      throw PatternMismatchError("observation pattern interval is empty");
    expected_begin = b.end;
    out.push_back(b);
  }
  if (out.back().end != grid.steps())
    throw PatternMismatchError(
        "observation pattern does not reach the end of the horizon");
  return out;
}

std::vector<char> ObservationPattern::step_observed(
    const TimeGrid& grid) const {
  std::vector<char> flags(grid.steps(), 0);
  if (mode_ == InfoMode::SignalLoss) {
    std::fill(flags.begin(), flags.end(), 1);
    return flags;
  }
  for (const Block& b : blocks(grid))
    if (b.observed)
      for (int k = b.begin; k < b.end; ++k) flags[k] = 1;
  return flags;
}

LtvSystem apply_signal_loss(const LtvSystem& sys,
                            const ObservationPattern& pattern) {
  LtvSystem out = sys;
  for (const auto& blk : pattern.blocks(sys.grid()))
    if (!blk.observed)
      for (int k = blk.begin; k < blk.end; ++k)
        out.mutable_C()[k].setZero();
  return out;
}

BalancedModel apply_signal_loss(const BalancedModel& bal,
                                const ObservationPattern& pattern) {
  BalancedModel out = bal;
  for (const auto& blk : pattern.blocks(bal.grid))
    if (!blk.observed)
      for (int k = blk.begin; k < blk.end; ++k) out.C[k].setZero();
  backward_model(out);  // Cbar and Dbar depend on C
  return out;
}

namespace {

// Conditions the gap-end state on the aggregated increment, anchored at the
// gap-start estimate: x(b) = Ad x(a) + noise, dy = Cd x(a) + noise with
// joint noise covariance `gramian`.
void add_forward_jump(FilterPlan& plan, const BalancedModel& bal,
                      const ObservationPattern::Block& blk) {
  const int n = plan.n;
  const int m = plan.m;
  const GapUpdate gap = exact_discretize_gap(bal, plan.grid.node(blk.begin),
                                             plan.grid.node(blk.end));
  const Matrix& Qa = plan.covariance[blk.begin];
  const Matrix Wxy = gap.gramian.topRightCorner(n, m);
  const Matrix Wyy = gap.gramian.bottomRightCorner(m, m);
  const Matrix S = gap.Cd * Qa * gap.Cd.transpose() + Wyy;
  const Matrix K = (gap.Ad * Qa * gap.Cd.transpose() + Wxy) *
                   inverse_spd_checked(S, "forward gap update");
  plan.covariance[blk.end] =
      sym(gap.Ad * Qa * gap.Ad.transpose() + gap.gramian.topLeftCorner(n, n) -
          K * S * K.transpose());
  plan.jumps.push_back({blk.begin, blk.end, gap.Ad - K * gap.Cd, K});
}

// Same information consumed against the flow of time. The forward gap map is
// first reversed against the unit stationary covariance: with
// Sbb = Cov(x(b)), the regression of (x(a), dy) on x(b) has coefficients
// [Abar; Cbar] = Cov((x(a), dy), x(b)) Sbb^{-1} and a residual independent
// of x(b) and of everything after the gap.
void add_backward_jump(FilterPlan& plan, const BalancedModel& bal,
                       const ObservationPattern::Block& blk) {
  const int n = plan.n;
  const int m = plan.m;
  const GapUpdate gap = exact_discretize_gap(bal, plan.grid.node(blk.begin),
                                             plan.grid.node(blk.end));
  const Matrix Wxx = gap.gramian.topLeftCorner(n, n);
  const Matrix Wyx = gap.gramian.bottomLeftCorner(m, n);
  const Matrix Wyy = gap.gramian.bottomRightCorner(m, m);

  const Matrix Sbb = gap.Ad * gap.Ad.transpose() + Wxx;
  Matrix cross(n + m, n);  // Cov((x(a), dy), x(b)) under the unit prior
  cross.topRows(n) = gap.Ad.transpose();
  cross.bottomRows(m) = gap.Cd * gap.Ad.transpose() + Wyx;
  Matrix prior(n + m, n + m);  // Cov((x(a), dy))
  prior.topLeftCorner(n, n) = Matrix::Identity(n, n);
  prior.topRightCorner(n, m) = gap.Cd.transpose();
  prior.bottomLeftCorner(m, n) = gap.Cd;
  prior.bottomRightCorner(m, m) = gap.Cd * gap.Cd.transpose() + Wyy;

  const Matrix reg =
      cross * inverse_spd_checked(Sbb, "backward gap update");
  const Matrix resid = sym(prior - reg * cross.transpose());
  const Matrix Abar = reg.topRows(n);
  const Matrix Cbar = reg.bottomRows(m);
  const Matrix Rxx = resid.topLeftCorner(n, n);
  const Matrix Rxy = resid.topRightCorner(n, m);
  const Matrix Ryy = resid.bottomRightCorner(m, m);

  const Matrix& Qb = plan.covariance[blk.end];
  const Matrix S = Cbar * Qb * Cbar.transpose() + Ryy;
  const Matrix K = (Abar * Qb * Cbar.transpose() + Rxy) *
                   inverse_spd_checked(S, "backward gap update");
  plan.covariance[blk.begin] =
      sym(Abar * Qb * Abar.transpose() + Rxx - K * S * K.transpose());
  plan.jumps.push_back({blk.begin, blk.end, Abar - K * Cbar, K});
}

}  // namespace

FilterPlan forward_plan(const BalancedModel& bal,
                        const ObservationPattern& pattern) {
  if (pattern.mode() == InfoMode::SignalLoss) {
    FilterPlan plan = forward_plan(
        apply_signal_loss(bal, pattern),
        ObservationPattern::fully_observed(bal.grid.t0(), bal.grid.t_end()));
    plan.mode = InfoMode::SignalLoss;
    return plan;
  }

  const TimeGrid& grid = bal.grid;
  const int n = bal.n;
  const int m = bal.m;
  const double h = grid.h();

  FilterPlan plan(grid);
  plan.direction = FilterDirection::Forward;
  plan.mode = pattern.mode();
  plan.n = n;
  plan.m = m;
  plan.observed = pattern.step_observed(grid);
  plan.covariance.assign(grid.node_count(), Matrix());
  plan.transition.assign(grid.steps(), Matrix());
  plan.gain.assign(grid.steps(), Matrix::Zero(n, m));
  plan.covariance[0] = Matrix::Identity(n, n);

  const bool continuous = bal.kind == TimeKind::Continuous;
  for (const auto& blk : pattern.blocks(grid)) {
    for (int k = blk.begin; k < blk.end; ++k) {
      const Matrix& Q = plan.covariance[k];
      if (continuous) {
        // Coefficients are frozen over the step at the same node the gain
        // uses, so a pattern boundary never leaks into the adjacent step.
        const Matrix& A = bal.A[k];
        const Matrix BB = bal.B[k] * bal.B[k].transpose();
        if (blk.observed) {
          const Matrix& C = bal.C[k];
          const Matrix BD = bal.B[k] * bal.D[k].transpose();
          const Matrix Rinv = inverse_spd_checked(
              bal.D[k] * bal.D[k].transpose(), "forward filter");
          const Matrix K = (Q * C.transpose() + BD) * Rinv;
          plan.gain[k] = K;
          plan.transition[k] = Matrix::Identity(n, n) + h * (A - K * C);
          auto riccati_rhs = [&](double, const Matrix& X) {
            const Matrix G = X * C.transpose() + BD;
            return Matrix(A * X + X * A.transpose() + BB -
                          G * Rinv * G.transpose());
          };
          plan.covariance[k + 1] =
              sym(rk4_step(riccati_rhs, grid.node(k), Q, h));
        } else {
          auto lyapunov_rhs = [&](double, const Matrix& X) {
            return Matrix(A * X + X * A.transpose() + BB);
          };
          plan.transition[k] = Matrix::Identity(n, n) + h * A;
          plan.covariance[k + 1] =
              sym(rk4_step(lyapunov_rhs, grid.node(k), Q, h));
        }
      } else {
        if (blk.observed) {
          const Matrix S =
              bal.C[k] * Q * bal.C[k].transpose() +
              bal.D[k] * bal.D[k].transpose();
          const Matrix K =
              (bal.A[k] * Q * bal.C[k].transpose() +
               bal.B[k] * bal.D[k].transpose()) *
              inverse_spd_checked(S, "forward filter");
          plan.gain[k] = K;
          plan.transition[k] = bal.A[k] - K * bal.C[k];
          plan.covariance[k + 1] =
              sym(bal.A[k] * Q * bal.A[k].transpose() +
                  bal.B[k] * bal.B[k].transpose() - K * S * K.transpose());
        } else {
          plan.transition[k] = bal.A[k];
          plan.covariance[k + 1] =
              sym(bal.A[k] * Q * bal.A[k].transpose() +
                  bal.B[k] * bal.B[k].transpose());
        }
      }
      require_finite(plan.covariance[k + 1], "forward filter covariance");
    }
    if (!blk.observed && pattern.mode() == InfoMode::ProcessValues)
      add_forward_jump(plan, bal, blk);
  }
  return plan;
}

FilterPlan backward_plan(const BalancedModel& bal,
                         const ObservationPattern& pattern) {
  if (pattern.mode() == InfoMode::SignalLoss) {
    BalancedModel mod = bal;
    if (bal.kind == TimeKind::Continuous) {
      // The reversed representation samples each step at its right endpoint,
      // so the silent stretch covering steps [a, b) zeroes nodes (a, b].
      for (const auto& blk : pattern.blocks(bal.grid))
        if (!blk.observed)
          for (int k = blk.begin; k < blk.end; ++k) mod.C[k + 1].setZero();
      backward_model(mod);
    } else {
      mod = apply_signal_loss(bal, pattern);
    }
    FilterPlan plan = backward_plan(
        mod,
        ObservationPattern::fully_observed(bal.grid.t0(), bal.grid.t_end()));
    plan.mode = InfoMode::SignalLoss;
    return plan;
  }

  const TimeGrid& grid = bal.grid;
  const int n = bal.n;
  const int m = bal.m;
  const double h = grid.h();

  FilterPlan plan(grid);
  plan.direction = FilterDirection::Backward;
  plan.mode = pattern.mode();
  plan.n = n;
  plan.m = m;
  plan.observed = pattern.step_observed(grid);
  plan.covariance.assign(grid.node_count(), Matrix());
  plan.transition.assign(grid.steps(), Matrix());
  plan.gain.assign(grid.steps(), Matrix::Zero(n, m));
  plan.covariance[grid.steps()] = Matrix::Identity(n, n);

  const bool continuous = bal.kind == TimeKind::Continuous;
  const auto blocks = pattern.blocks(grid);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    const auto& blk = *it;
    for (int k = blk.end - 1; k >= blk.begin; --k) {
      const Matrix& Q = plan.covariance[k + 1];
      if (continuous) {
        // The time-reversed representation is sampled at the right endpoint
        // of the step, where its noise is independent of the current state.
        // Rates are reversed-time rates, run with a negative original-time
        // step and coefficients frozen at that endpoint.
        const int j = k + 1;
        const Matrix At = bal.A[j].transpose();
        const Matrix BB = bal.Bbar[j] * bal.Bbar[j].transpose();
        if (blk.observed) {
          const Matrix& C = bal.Cbar[j];
          const Matrix BD = bal.Bbar[j] * bal.Dbar[j].transpose();
          const Matrix Rinv = inverse_spd_checked(
              bal.Dbar[j] * bal.Dbar[j].transpose(), "backward filter");
          const Matrix K = (Q * C.transpose() - BD) * Rinv;
          plan.gain[k] = K;
          plan.transition[k] = Matrix::Identity(n, n) + h * (At - K * C);
          auto riccati_rhs = [&](double, const Matrix& X) {
            const Matrix G = X * C.transpose() - BD;
            return Matrix(-(At * X + X * At.transpose() + BB -
                            G * Rinv * G.transpose()));
          };
          plan.covariance[k] =
              sym(rk4_step(riccati_rhs, grid.node(j), Q, -h));
        } else {
          auto lyapunov_rhs = [&](double, const Matrix& X) {
            return Matrix(-(At * X + X * At.transpose() + BB));
          };
          plan.transition[k] = Matrix::Identity(n, n) + h * At;
          plan.covariance[k] =
              sym(rk4_step(lyapunov_rhs, grid.node(j), Q, -h));
        }
      } else {
        if (blk.observed) {
          const Matrix S = bal.Cbar[k] * Q * bal.Cbar[k].transpose() +
                           bal.Dbar[k] * bal.Dbar[k].transpose();
          const Matrix K = (bal.A[k].transpose() * Q *
                                bal.Cbar[k].transpose() +
                            bal.Bbar[k] * bal.Dbar[k].transpose()) *
                           inverse_spd_checked(S, "backward filter");
          plan.gain[k] = K;
          plan.transition[k] = bal.A[k].transpose() - K * bal.Cbar[k];
          plan.covariance[k] =
              sym(bal.A[k].transpose() * Q * bal.A[k] +
                  bal.Bbar[k] * bal.Bbar[k].transpose() -
                  K * S * K.transpose());
        } else {
          plan.transition[k] = bal.A[k].transpose();
          plan.covariance[k] =
              sym(bal.A[k].transpose() * Q * bal.A[k] +
                  bal.Bbar[k] * bal.Bbar[k].transpose());
        }
      }
      require_finite(plan.covariance[k], "backward filter covariance");
    }
    if (!blk.observed && pattern.mode() == InfoMode::ProcessValues)
      add_backward_jump(plan, bal, blk);
  }
  return plan;
}

FilterResult apply_plan(const FilterPlan& plan,
                        const std::vector<Vector>& increments) {
  const int steps = plan.grid.steps();
  if (static_cast<int>(increments.size()) != steps)
    throw PatternMismatchError("increment count does not match the grid");
  for (const Vector& dy : increments)
    if (dy.size() != plan.m)
      throw PatternMismatchError("increment dimension mismatch");

  FilterResult res(plan.grid);
  res.direction = plan.direction;
  res.covariance = plan.covariance;
  res.gain = plan.gain;
  res.estimate.assign(plan.grid.node_count(), Vector());

  auto aggregate = [&](const GapJump& jump) {
    Vector agg = Vector::Zero(plan.m);
    for (int k = jump.a; k < jump.b; ++k) agg += increments[k];
    return agg;
  };

  if (plan.direction == FilterDirection::Forward) {
    res.estimate[0] = Vector::Zero(plan.n);
    auto jump = plan.jumps.begin();
    for (int k = 0; k < steps; ++k) {
      Vector next = plan.transition[k] * res.estimate[k];
      if (plan.observed[k]) next += plan.gain[k] * increments[k];
      res.estimate[k + 1] = std::move(next);
      if (jump != plan.jumps.end() && jump->b == k + 1) {
        res.estimate[k + 1] =
            jump->coef * res.estimate[jump->a] + jump->gain * aggregate(*jump);
        ++jump;
      }
    }
  } else {
    res.estimate[steps] = Vector::Zero(plan.n);
    auto jump = plan.jumps.begin();  // stored with decreasing start node
    for (int k = steps - 1; k >= 0; --k) {
      Vector prev = plan.transition[k] * res.estimate[k + 1];
      if (plan.observed[k]) prev += plan.gain[k] * increments[k];
      res.estimate[k] = std::move(prev);
      if (jump != plan.jumps.end() && jump->a == k) {
        res.estimate[k] =
            jump->coef * res.estimate[jump->b] + jump->gain * aggregate(*jump);
        ++jump;
      }
    }
  }
  return res;
}

FilterResult forward_filter(const BalancedModel& bal,
                            const ObservationPattern& pattern,
                            const std::vector<Vector>& increments) {
  return apply_plan(forward_plan(bal, pattern), increments);
}

FilterResult backward_filter(const BalancedModel& bal,
                             const ObservationPattern& pattern,
                             const std::vector<Vector>& increments) {
  return apply_plan(backward_plan(bal, pattern), increments);
}

}  // namespace tfs
