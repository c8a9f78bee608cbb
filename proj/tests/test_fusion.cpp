#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "tfs/filtering.hpp"
#include "tfs/fusion.hpp"
#include "tfs/model.hpp"
#include "tfs/simulate.hpp"

using namespace tfs;
using testutil::balanced_oscillator;
using testutil::discrete_balanced_oscillator;
using testutil::max_abs;
using testutil::max_abs_diff;

namespace {

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

FilterResult constant_pass(FilterDirection dir, const TimeGrid& grid,
                           double mean, double var) {
  FilterResult res(grid);
  res.direction = dir;
  for (int j = 0; j <= grid.steps(); ++j) {
    res.estimate.push_back(Vector::Constant(1, mean));
    res.covariance.push_back(Matrix::Constant(1, 1, var));
  }
  return res;
}

}  // namespace

TEST_CASE("scalar fusion reproduces hand-computed moments") {
  // Both passes at variance 1/2: the combined information is 2 + 2 - 1 = 3,
  // so the fused variance is 1/3 and each pass enters with weight 2/3.
  TimeGrid grid(0.0, 1.0, 2);
  const FilterResult fwd =
      constant_pass(FilterDirection::Forward, grid, 0.9, 0.5);
  const FilterResult bwd =
      constant_pass(FilterDirection::Backward, grid, 1.2, 0.5);

  const SmootherResult sm = fuse(fwd, bwd);
  REQUIRE(sm.estimate.size() == 3);
  for (int j = 0; j <= 2; ++j) {
    CHECK(sm.covariance[j](0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(sm.estimate[j](0) ==
          doctest::Approx((1.8 + 2.4) / 3.0).epsilon(1e-12));
    CHECK(sm.forward_weight[j](0, 0) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(sm.backward_weight[j](0, 0) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("fused moments match direct conditioning") {
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
      const Trajectory traj = simulate(forward_system(data_model), 515);
      const std::vector<Vector> incs = increments_of(traj);

      const FilterResult fwd = forward_filter(dbal, pattern, incs);
      const FilterResult bwd = backward_filter(dbal, pattern, incs);
      const SmootherResult sm = fuse(fwd, bwd);

      // The oracle receives the unmodified model; signal loss is applied
      // internally, so both routes see the same information.
      const BatchOracle oracle(forward_system(dbal), pattern);
      for (int j = 0; j <= grid.steps(); ++j) {
        CAPTURE(j);
        const NodeMoments of = oracle.forward(j, incs);
        CHECK(max_abs_diff(fwd.estimate[j], of.estimate) < 1e-8);
        CHECK(max_abs_diff(fwd.covariance[j], of.covariance) < 1e-8);
        const NodeMoments ob = oracle.backward(j, incs);
        CHECK(max_abs_diff(bwd.estimate[j], ob.estimate) < 1e-8);
        CHECK(max_abs_diff(bwd.covariance[j], ob.covariance) < 1e-8);
        const NodeMoments os = oracle.smoothed(j, incs);
        CHECK(max_abs_diff(sm.estimate[j], os.estimate) < 1e-8);
        CHECK(max_abs_diff(sm.covariance[j], os.covariance) < 1e-8);
      }

      const auto all = batch_oracle(forward_system(dbal), pattern, incs);
      for (int j : {0, grid.steps() / 2, grid.steps()}) {
        const NodeMoments os = oracle.smoothed(j, incs);
        CHECK(max_abs_diff(all[j].estimate, os.estimate) < 1e-13);
        CHECK(max_abs_diff(all[j].covariance, os.covariance) < 1e-13);
      }
    }
  }
}

TEST_CASE("fusion never loses information and the weights close") {
  TimeGrid grid(0.0, 0.02, 150);
  const BalancedModel bal = balanced_oscillator(grid);
  const ObservationPattern pattern(
      InfoMode::ProcessValues,
      {{0.0, 1.0, true}, {1.0, 2.0, false}, {2.0, 3.0, true}});
  const Trajectory traj = simulate(forward_system(bal), 4041);
  const std::vector<Vector> incs = increments_of(traj);

  const FilterResult fwd = forward_filter(bal, pattern, incs);
  const FilterResult bwd = backward_filter(bal, pattern, incs);
  const SmootherResult sm = fuse(fwd, bwd);

  const Matrix I = Matrix::Identity(2, 2);
  for (int j = 0; j <= grid.steps(); ++j) {
    CAPTURE(j);
    // Fusing can only remove uncertainty relative to either pass.
    CHECK(min_eig(fwd.covariance[j] - sm.covariance[j]) > -1e-10);
    CHECK(min_eig(bwd.covariance[j] - sm.covariance[j]) > -1e-10);
    // The weights resolve the identity minus one copy of the fused
    // covariance (the shared unit prior counted twice).
    const Matrix closure =
        sm.forward_weight[j] + sm.backward_weight[j] - sm.covariance[j];
    CHECK(max_abs_diff(closure, I) < 1e-10);
  }
}

TEST_CASE("oracle with no admissible data returns the prior") {
  TimeGrid grid(0.0, 0.25, 8);
  const BalancedModel dbal = discrete_balanced_oscillator(grid);
  const ObservationPattern all_gap(InfoMode::IncrementsOnly,
                                   {{0.0, 2.0, false}});
  const Trajectory traj = simulate(forward_system(dbal), 99);
  const std::vector<Vector> incs = increments_of(traj);

  const BatchOracle oracle(forward_system(dbal), all_gap);
  for (int j = 0; j <= grid.steps(); ++j) {
    const NodeMoments os = oracle.smoothed(j, incs);
    CHECK(max_abs(os.estimate) == 0.0);
    // Balanced recursion: the open-loop node covariance stays the identity.
    CHECK(max_abs_diff(os.covariance, Matrix::Identity(2, 2)) < 1e-12);
  }
}

TEST_CASE("noise-free observation collapses the smoothed covariance") {
  TimeGrid grid(0.0, 1.0, 6);
  Matrix A(1, 1), B(1, 1), C(1, 1), D(1, 1);
  A << 0.5;
  B << std::sqrt(0.75);
  C << 1.0;
  D << 0.0;
  const LtvSystem sys = LtvSystem::constant(
      grid, TimeKind::Discrete, A, B, C, D, Matrix::Identity(1, 1));
  const ObservationPattern pattern =
      ObservationPattern::fully_observed(0.0, 6.0);
  const Trajectory traj = simulate(sys, 321);
  const std::vector<Vector> incs = increments_of(traj);

  // y(k) = x(k) exactly, so conditioning on step k pins the state at node k.
  const BatchOracle oracle(sys, pattern);
  for (int j = 0; j < grid.steps(); ++j) {
    const NodeMoments os = oracle.smoothed(j, incs);
    CHECK(std::abs(os.covariance(0, 0)) < 1e-12);
    CHECK(std::abs(os.estimate(0) - incs[j](0)) < 1e-10);
  }
}

TEST_CASE("fuse and the oracle validate their inputs") {
  TimeGrid grid(0.0, 1.0, 2);
  const FilterResult fwd =
      constant_pass(FilterDirection::Forward, grid, 0.0, 1.0);
  const FilterResult bwd =
      constant_pass(FilterDirection::Backward, grid, 0.0, 1.0);

  CHECK_THROWS_AS((void)fuse(bwd, fwd), PatternMismatchError);
  CHECK_THROWS_AS((void)fuse(fwd, fwd), PatternMismatchError);

  const FilterResult other =
      constant_pass(FilterDirection::Backward, TimeGrid(0.0, 0.5, 4), 0.0, 1.0);
  CHECK_THROWS_AS((void)fuse(fwd, other), PatternMismatchError);

  const BalancedModel bal = balanced_oscillator(TimeGrid(0.0, 0.25, 8));
  const ObservationPattern pattern =
      ObservationPattern::fully_observed(0.0, 2.0);
  CHECK_THROWS_AS(BatchOracle(forward_system(bal), pattern), Error);

  const BalancedModel dbal = discrete_balanced_oscillator(TimeGrid(0.0, 0.25, 8));
  const BatchOracle oracle(forward_system(dbal), pattern);
  const std::vector<Vector> short_incs(3, Vector::Zero(1));
  CHECK_THROWS_AS((void)oracle.smoothed(0, short_incs), PatternMismatchError);
  CHECK_THROWS_AS((void)oracle.smoothed(-1, short_incs), Error);
}
