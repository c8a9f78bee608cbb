#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "tfs/filtering.hpp"
#include "tfs/model.hpp"
#include "tfs/simulate.hpp"

using namespace tfs;
using testutil::balanced_oscillator;
using testutil::discrete_balanced_oscillator;
using testutil::max_abs;
using testutil::max_abs_diff;

namespace {

// ---- Direct-conditioning oracle for discrete models -----------------------
// Every node state and every output increment is written as a linear map of
// Z = (x(0), w(0), ..., w(N-1)) ~ N(0, I); conditional moments then follow
// from plain Gaussian algebra, with no recursion shared with the filters.

struct JointMaps {
  int dim = 0;
  std::vector<Matrix> x;   // per node, n x dim
  std::vector<Matrix> dy;  // per step, m x dim
};

JointMaps joint_maps(const BalancedModel& bal) {
  const int N = bal.grid.steps();
  const int q = static_cast<int>(bal.B[0].cols());
  JointMaps maps;
  maps.dim = bal.n + N * q;
  maps.x.resize(N + 1);
  maps.dy.resize(N);
  maps.x[0] = Matrix::Zero(bal.n, maps.dim);
  maps.x[0].leftCols(bal.n) = Matrix::Identity(bal.n, bal.n);
  for (int k = 0; k < N; ++k) {
    Matrix w = Matrix::Zero(q, maps.dim);
    w.middleCols(bal.n + k * q, q) = Matrix::Identity(q, q);
    maps.x[k + 1] = bal.A[k] * maps.x[k] + bal.B[k] * w;
    maps.dy[k] = bal.C[k] * maps.x[k] + bal.D[k] * w;
  }
  return maps;
}

// One observation the estimators may or may not see: a linear map of Z, its
// realized value, and the step span it aggregates.
struct ObsEntry {
  Matrix map;
  Vector value;
  int first = 0;
  int last = 0;
};

std::vector<ObsEntry> collect_entries(const BalancedModel& bal,
                                      const ObservationPattern& pattern,
                                      const JointMaps& maps,
                                      const Trajectory& traj) {
  std::vector<ObsEntry> out;
  if (pattern.mode() == InfoMode::SignalLoss) {
    for (int k = 0; k < bal.grid.steps(); ++k)
      out.push_back({maps.dy[k], traj.increment(k), k, k});
    return out;
  }
  for (const auto& blk : pattern.blocks(bal.grid)) {
    if (blk.observed) {
      for (int k = blk.begin; k < blk.end; ++k)
        out.push_back({maps.dy[k], traj.increment(k), k, k});
    } else if (pattern.mode() == InfoMode::ProcessValues) {
      Matrix map = Matrix::Zero(bal.m, maps.dim);
      Vector value = Vector::Zero(bal.m);
      for (int k = blk.begin; k < blk.end; ++k) {
        map += maps.dy[k];
        value += traj.increment(k);
      }
      out.push_back({map, value, blk.begin, blk.end - 1});
    }
  }
  return out;
}

struct OracleMoments {
  Vector estimate;
  Matrix covariance;
};

// E[x | chosen observations] and its covariance from the stacked maps.
OracleMoments condition(const Matrix& xmap, const std::vector<ObsEntry>& obs) {
  int rows = 0;
  for (const ObsEntry& e : obs) rows += static_cast<int>(e.map.rows());
  if (rows == 0)
    return {Vector::Zero(xmap.rows()), Matrix(xmap * xmap.transpose())};
  Matrix O(rows, xmap.cols());
  Vector v(rows);
  int at = 0;
  for (const ObsEntry& e : obs) {
    O.middleRows(at, e.map.rows()) = e.map;
    v.segment(at, e.map.rows()) = e.value;
    at += static_cast<int>(e.map.rows());
  }
  const Matrix Soo = O * O.transpose();
  const Matrix W = Soo.ldlt().solve(O * xmap.transpose()).transpose();
  return {Vector(W * v), Matrix(xmap * xmap.transpose() - W * (O * xmap.transpose()))};
}

OracleMoments oracle_at(const std::vector<ObsEntry>& entries,
                        const Matrix& xmap, bool forward, int j) {
  std::vector<ObsEntry> admissible;
  for (const ObsEntry& e : entries)
    if (forward ? e.last < j : e.first >= j) admissible.push_back(e);
  return condition(xmap, admissible);
}

std::vector<Vector> increments_of(const Trajectory& traj) {
  std::vector<Vector> incs;
  incs.reserve(traj.grid.steps());
  for (int k = 0; k < traj.grid.steps(); ++k) incs.push_back(traj.increment(k));
  return incs;
}

double min_eig(const Matrix& M) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (M + M.transpose()))
      .eigenvalues()
      .minCoeff();
}

// Scalar state driven by both noise channels: B D' = 0.8, so the output
// stays informative even with the signal term removed.
LtvSystem correlated_scalar(const TimeGrid& grid) {
  Matrix A(1, 1), B(1, 2), C(1, 1), D(1, 2);
  A << -0.5;
  B << 0.6, 0.8;
  C << 1.0;
  D << 0.0, 1.0;
  return LtvSystem::constant(grid, TimeKind::Continuous, A, B, C, D,
                             Matrix::Identity(1, 1));
}

}  // namespace

TEST_CASE("discrete filters match direct conditioning") {
  TimeGrid grid(0.0, 0.25, 12);
  const BalancedModel dbal = discrete_balanced_oscillator(grid);

  const std::vector<std::vector<PatternInterval>> tilings = {
      {{0.0, 1.0, true}, {1.0, 2.25, false}, {2.25, 3.0, true}},
      {{0.0, 0.75, false}, {0.75, 2.0, true}, {2.0, 3.0, false}}};
  const InfoMode modes[] = {InfoMode::IncrementsOnly, InfoMode::ProcessValues,
                            InfoMode::SignalLoss};

  for (const auto& tiling : tilings) {
    for (const InfoMode mode : modes) {
      const int mode_tag = static_cast<int>(mode);
      CAPTURE(mode_tag);
      const ObservationPattern pattern(mode, tiling);
      const BalancedModel data_model = mode == InfoMode::SignalLoss
                                           ? apply_signal_loss(dbal, pattern)
                                           : dbal;
      const Trajectory traj = simulate(forward_system(data_model), 8112);
      const JointMaps maps = joint_maps(data_model);
      const auto entries = collect_entries(data_model, pattern, maps, traj);
      const std::vector<Vector> incs = increments_of(traj);

      const FilterResult fwd = forward_filter(dbal, pattern, incs);
      const FilterResult bwd = backward_filter(dbal, pattern, incs);
      for (int j = 0; j <= grid.steps(); ++j) {
        CAPTURE(j);
        const OracleMoments of = oracle_at(entries, maps.x[j], true, j);
        CHECK(max_abs_diff(fwd.estimate[j], of.estimate) < 1e-8);
        CHECK(max_abs_diff(fwd.covariance[j], of.covariance) < 1e-8);
        const OracleMoments ob = oracle_at(entries, maps.x[j], false, j);
        CHECK(max_abs_diff(bwd.estimate[j], ob.estimate) < 1e-8);
        CHECK(max_abs_diff(bwd.covariance[j], ob.covariance) < 1e-8);
      }
    }
  }
}

TEST_CASE("scalar backward pass mirrors the forward pass on reversed data") {
  TimeGrid grid(0.0, 0.01, 300);
  Matrix A(1, 1), B(1, 2), C(1, 1), D(1, 2);
  A << -0.5;
  B << 1.0, 0.0;
  C << 1.3;
  D << 0.0, 0.8;
  const LtvSystem sys = LtvSystem::constant(grid, TimeKind::Continuous, A, B,
                                            C, D, Matrix::Identity(1, 1));
  const BalancedModel bal = balance(sys, propagate_covariance(sys));
  // Orthogonal noise channels and a symmetric state matrix make the
  // time-reversed representation coincide with the forward one, so filtering
  // the reversed increments forward is an independent oracle for the
  // backward pass.
  REQUIRE(max_abs(Matrix(bal.B[0] * bal.D[0].transpose())) < 1e-12);

  const Trajectory traj = simulate(sys, 2468);
  const std::vector<Vector> incs = increments_of(traj);
  std::vector<Vector> reversed(incs.rbegin(), incs.rend());

  // The tiling is symmetric under time reversal, so one pattern serves both.
  const ObservationPattern pattern(
      InfoMode::IncrementsOnly,
      {{0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}});

  const FilterResult bwd = backward_filter(bal, pattern, incs);
  const FilterResult fwd_rev = forward_filter(bal, pattern, reversed);
  const int N = grid.steps();
  for (int i = 0; i <= N; ++i) {
    CHECK(max_abs_diff(bwd.estimate[N - i], fwd_rev.estimate[i]) < 1e-8);
    CHECK(max_abs_diff(bwd.covariance[N - i], fwd_rev.covariance[i]) < 1e-8);
  }
}

TEST_CASE("an unobserved horizon returns the prior") {
  TimeGrid grid(0.0, 0.02, 150);
  const BalancedModel bal = balanced_oscillator(grid);
  const ObservationPattern all_gap(InfoMode::IncrementsOnly,
                                   {{0.0, 3.0, false}});
  const Trajectory traj = simulate(forward_system(bal), 11);
  const std::vector<Vector> incs = increments_of(traj);

  const FilterResult fres = forward_filter(bal, all_gap, incs);
  const FilterResult bres = backward_filter(bal, all_gap, incs);
  for (const FilterResult* res : {&fres, &bres}) {
    for (int j = 0; j <= grid.steps(); ++j) {
      CHECK(max_abs(res->estimate[j]) == 0.0);
      CHECK(max_abs_diff(res->covariance[j], Matrix::Identity(2, 2)) < 1e-10);
    }
  }

  // With the aggregate released, only the closing node learns anything.
  const ObservationPattern agg(InfoMode::ProcessValues, {{0.0, 3.0, false}});
  const FilterResult fwd = forward_filter(bal, agg, incs);
  CHECK(max_abs(fwd.estimate[grid.steps() - 1]) == 0.0);
  CHECK(max_abs(fwd.estimate[grid.steps()]) > 1e-4);
  CHECK(fwd.covariance[grid.steps()].trace() < 2.0 - 1e-3);

  const FilterResult bwd = backward_filter(bal, agg, incs);
  CHECK(max_abs(bwd.estimate[1]) == 0.0);
  CHECK(max_abs(bwd.estimate[0]) > 1e-4);
  CHECK(bwd.covariance[0].trace() < 2.0 - 1e-3);
}

TEST_CASE("the gap aggregate tightens the closing node") {
  TimeGrid grid(0.0, 0.05, 60);
  const BalancedModel bal = balanced_oscillator(grid);
  const std::vector<PatternInterval> tiling = {
      {0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}};
  const Trajectory traj = simulate(forward_system(bal), 909);
  const std::vector<Vector> incs = increments_of(traj);

  const FilterResult io =
      forward_filter(bal, {InfoMode::IncrementsOnly, tiling}, incs);
  const FilterResult pv =
      forward_filter(bal, {InfoMode::ProcessValues, tiling}, incs);
  const int b = grid.index_of(2.0);
  for (int j = 0; j < b; ++j) {
    CHECK(max_abs_diff(io.estimate[j], pv.estimate[j]) < 1e-13);
    CHECK(max_abs_diff(io.covariance[j], pv.covariance[j]) < 1e-13);
  }
  // The two covariances come from different integration routes (per-step
  // recursion against a whole-gap propagation), so the semidefinite ordering
  // only holds to their mutual consistency here; the discrete block below
  // checks it tightly.
  CHECK(min_eig(io.covariance[b] - pv.covariance[b]) > -1e-6);
  CHECK(io.covariance[b].trace() - pv.covariance[b].trace() > 1e-3);
  CHECK(max_abs_diff(io.estimate[b], pv.estimate[b]) > 1e-6);

  // Mirror statement for the backward pass at the gap-opening node.
  const FilterResult bio =
      backward_filter(bal, {InfoMode::IncrementsOnly, tiling}, incs);
  const FilterResult bpv =
      backward_filter(bal, {InfoMode::ProcessValues, tiling}, incs);
  const int a = grid.index_of(1.0);
  for (int j = a + 1; j <= grid.steps(); ++j) {
    CHECK(max_abs_diff(bio.estimate[j], bpv.estimate[j]) < 1e-13);
    CHECK(max_abs_diff(bio.covariance[j], bpv.covariance[j]) < 1e-13);
  }
  CHECK(min_eig(bio.covariance[a] - bpv.covariance[a]) > -1e-6);
  CHECK(bio.covariance[a].trace() - bpv.covariance[a].trace() > 1e-3);

  // On a discrete model every route is an exact composition, so the
  // ordering is clean to roundoff.
  const BalancedModel dbal = discrete_balanced_oscillator(grid);
  const FilterPlan dio =
      forward_plan(dbal, {InfoMode::IncrementsOnly, tiling});
  const FilterPlan dpv =
      forward_plan(dbal, {InfoMode::ProcessValues, tiling});
  CHECK(min_eig(dio.covariance[b] - dpv.covariance[b]) > -1e-12);
  const FilterPlan dbio =
      backward_plan(dbal, {InfoMode::IncrementsOnly, tiling});
  const FilterPlan dbpv =
      backward_plan(dbal, {InfoMode::ProcessValues, tiling});
  CHECK(min_eig(dbio.covariance[a] - dbpv.covariance[a]) > -1e-12);
}

TEST_CASE("signal loss with orthogonal noise channels degenerates to a plain gap") {
  TimeGrid grid(0.0, 0.05, 60);
  const BalancedModel bal = balanced_oscillator(grid);  // B D' = 0
  const std::vector<PatternInterval> tiling = {
      {0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}};
  const Trajectory traj = simulate(forward_system(bal), 17);
  const std::vector<Vector> incs = increments_of(traj);

  const FilterResult io =
      forward_filter(bal, {InfoMode::IncrementsOnly, tiling}, incs);
  const FilterResult sl =
      forward_filter(bal, {InfoMode::SignalLoss, tiling}, incs);
  const FilterResult bio =
      backward_filter(bal, {InfoMode::IncrementsOnly, tiling}, incs);
  const FilterResult bsl =
      backward_filter(bal, {InfoMode::SignalLoss, tiling}, incs);
  for (int j = 0; j <= grid.steps(); ++j) {
    CHECK(max_abs_diff(io.estimate[j], sl.estimate[j]) < 1e-12);
    CHECK(max_abs_diff(io.covariance[j], sl.covariance[j]) < 1e-12);
    CHECK(max_abs_diff(bio.estimate[j], bsl.estimate[j]) < 1e-12);
    CHECK(max_abs_diff(bio.covariance[j], bsl.covariance[j]) < 1e-12);
  }
}

TEST_CASE("signal loss with correlated noise still sharpens the gap") {
  TimeGrid grid(0.0, 0.02, 150);
  const LtvSystem sys = correlated_scalar(grid);
  const BalancedModel bal = balance(sys, propagate_covariance(sys));
  const std::vector<PatternInterval> tiling = {
      {0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}};

  const FilterPlan io = forward_plan(bal, {InfoMode::IncrementsOnly, tiling});
  const FilterPlan sl = forward_plan(bal, {InfoMode::SignalLoss, tiling});
  const int b = grid.index_of(2.0);
  for (int j = 0; j <= grid.steps(); ++j)
    CHECK(io.covariance[j](0, 0) - sl.covariance[j](0, 0) > -1e-10);
  CHECK(io.covariance[b](0, 0) - sl.covariance[b](0, 0) > 1e-3);
}

TEST_CASE("conditional covariances stay within the prior") {
  TimeGrid grid(0.0, 0.05, 60);
  const BalancedModel bal = balanced_oscillator(grid);
  const std::vector<PatternInterval> tiling = {
      {0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}};
  for (const InfoMode mode : {InfoMode::IncrementsOnly,
                              InfoMode::ProcessValues, InfoMode::SignalLoss}) {
    const ObservationPattern pattern(mode, tiling);
    for (const FilterPlan& plan :
         {forward_plan(bal, pattern), backward_plan(bal, pattern)}) {
      for (const Matrix& Q : plan.covariance) {
        const Eigen::SelfAdjointEigenSolver<Matrix> es(Q);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK(es.eigenvalues().maxCoeff() < 1.0 + 1e-8);
      }
    }
  }
  // Gap steps consume no data under the plain-gap treatment.
  const FilterPlan plan =
      forward_plan(bal, {InfoMode::IncrementsOnly, tiling});
  CHECK(max_abs(plan.gain[grid.index_of(1.0) + 2]) == 0.0);
}

TEST_CASE("refining a gap into observations cannot lose information") {
  TimeGrid grid(0.0, 0.05, 60);
  const BalancedModel bal = balanced_oscillator(grid);
  const FilterPlan coarse = forward_plan(
      bal, {InfoMode::IncrementsOnly, {{0.0, 1.0, true}, {1.0, 3.0, false}}});
  const FilterPlan fine = forward_plan(
      bal, {InfoMode::IncrementsOnly,
            {{0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}}});
  const int N = grid.steps();
  CHECK(min_eig(coarse.covariance[N] - fine.covariance[N]) > -1e-10);
  CHECK(coarse.covariance[N].trace() - fine.covariance[N].trace() > 1e-3);
}

TEST_CASE("grid filters track the exactly discretized reference") {
  TimeGrid grid(0.0, 0.005, 400);
  const BalancedModel bal = balanced_oscillator(grid);
  const BalancedModel dbal = discrete_balanced_oscillator(grid);
  const Trajectory traj = simulate(forward_system(dbal), 4242);
  const std::vector<Vector> incs = increments_of(traj);
  const std::vector<PatternInterval> tiling = {
      {0.0, 0.75, true}, {0.75, 1.25, false}, {1.25, 2.0, true}};

  for (const InfoMode mode : {InfoMode::IncrementsOnly,
                              InfoMode::ProcessValues}) {
    const ObservationPattern pattern(mode, tiling);
    const FilterResult fc = forward_filter(bal, pattern, incs);
    const FilterResult fd = forward_filter(dbal, pattern, incs);
    const FilterResult bc = backward_filter(bal, pattern, incs);
    const FilterResult bd = backward_filter(dbal, pattern, incs);
    double worst = 0.0;
    for (int j = 0; j <= grid.steps(); ++j) {
      worst = std::max(worst, max_abs_diff(fc.estimate[j], fd.estimate[j]));
      worst = std::max(worst, max_abs_diff(fc.covariance[j], fd.covariance[j]));
      worst = std::max(worst, max_abs_diff(bc.estimate[j], bd.estimate[j]));
      worst = std::max(worst, max_abs_diff(bc.covariance[j], bd.covariance[j]));
    }
    // The grid recursions are first-order consistent with the exact
    // conditional moments; at h = 0.005 the gap is a fraction of a percent.
    CHECK(worst < 0.05);
  }
}

TEST_CASE("pattern and input validation") {
  TimeGrid grid(0.0, 0.05, 60);
  const BalancedModel bal = balanced_oscillator(grid);

  CHECK_THROWS_AS(ObservationPattern(InfoMode::IncrementsOnly, {}),
                  PatternMismatchError);
  CHECK_THROWS_AS(
      ObservationPattern(InfoMode::IncrementsOnly, {{1.0, 1.0, true}}),
      PatternMismatchError);
  CHECK_THROWS_AS(ObservationPattern(
                      InfoMode::IncrementsOnly,
                      {{0.0, 2.0, true}, {1.5, 3.0, false}}),
                  PatternMismatchError);

  // Tiling violations surface when the pattern meets the grid.
  const ObservationPattern hole(InfoMode::IncrementsOnly,
                                {{0.0, 1.0, true}, {1.5, 3.0, false}});
  CHECK_THROWS_AS(hole.validate(grid), PatternMismatchError);
  const ObservationPattern shy(InfoMode::IncrementsOnly, {{0.0, 2.5, true}});
  CHECK_THROWS_AS(shy.validate(grid), PatternMismatchError);
  const ObservationPattern off(InfoMode::IncrementsOnly,
                               {{0.0, 1.513, true}, {1.513, 3.0, false}});
  CHECK_THROWS_AS(off.validate(grid), OffGridError);

  const ObservationPattern ok = ObservationPattern::fully_observed(0.0, 3.0);
  CHECK(ok.blocks(grid).size() == 1);
  CHECK(ok.blocks(grid)[0].end == 60);

  std::vector<Vector> incs(59, Vector::Zero(1));
  CHECK_THROWS_AS(forward_filter(bal, ok, incs), PatternMismatchError);
  std::vector<Vector> wide(60, Vector::Zero(2));
  CHECK_THROWS_AS(forward_filter(bal, ok, wide), PatternMismatchError);
}
