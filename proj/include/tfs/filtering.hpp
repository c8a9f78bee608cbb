#pragma once

#include <vector>

#include "tfs/model.hpp"
#include "tfs/numerics.hpp"
#include "tfs/simulate.hpp"

namespace tfs {

struct PatternMismatchError : Error {
  using Error::Error;
};

// What the estimator is told about the output during unobserved stretches:
//   IncrementsOnly: gap data is discarded entirely.
//   ProcessValues:  the aggregated increment y(end) - y(start) of each gap
//                   becomes available once the gap closes.
//   SignalLoss:     the output still streams during gaps but carries no
//                   signal term (C is zeroed there); every step is consumed.
enum class InfoMode { IncrementsOnly, ProcessValues, SignalLoss };

struct PatternInterval {
  double start = 0.0;
  double end = 0.0;
  bool observed = true;
};

// Contiguous tiling of the time horizon into observed intervals and gaps.
// Interval endpoints must land on grid nodes when a grid is attached.
class ObservationPattern {
 public:
  ObservationPattern(InfoMode mode, std::vector<PatternInterval> intervals);

  static ObservationPattern fully_observed(double t0, double t_end);

  InfoMode mode() const { return mode_; }
  const std::vector<PatternInterval>& intervals() const { return intervals_; }

  // Node-index image of one interval.
  struct Block {
    int begin = 0;
    int end = 0;
    bool observed = true;
  };

  // Maps the intervals onto the grid and checks that they tile
  // [grid.t0(), grid.t_end()] exactly. Throws PatternMismatchError (or
  // OffGridError for endpoints between nodes).
  std::vector<Block> blocks(const TimeGrid& grid) const;
  void validate(const TimeGrid& grid) const { (void)blocks(grid); }

  // Per-step flags; step k covers [t_k, t_{k+1}). SignalLoss reports every
  // step as consumed since the (modified) output never stops streaming.
  std::vector<char> step_observed(const TimeGrid& grid) const;

 private:
  InfoMode mode_;
  std::vector<PatternInterval> intervals_;
};

// Copy of the model with the output matrix zeroed at every node inside a gap
// (nodes [start, end) of each unobserved interval). The balanced overload
// also refreshes the backward output matrices, which depend on C.
LtvSystem apply_signal_loss(const LtvSystem& sys,
                            const ObservationPattern& pattern);
BalancedModel apply_signal_loss(const BalancedModel& bal,
                                const ObservationPattern& pattern);

enum class FilterDirection { Forward, Backward };

// Aggregated-increment update attached to one gap under ProcessValues: the
// estimate at the closing node is coef * (estimate at the anchor node) +
// gain * (y(end) - y(start)). Forward anchors at the gap start and closes at
// the gap end; backward the other way around.
struct GapJump {
  int a = 0;  // gap start node
  int b = 0;  // gap end node
  Matrix coef;
  Matrix gain;
};

// Data-independent half of a filter pass: the covariance path, the per-step
// estimate recursion estimate(next) = transition(k) estimate(cur) +
// gain(k) dy(k), and any gap jumps. Replications over the same model and
// pattern reuse one plan and pay only for the estimate recursion.
struct FilterPlan {
  FilterDirection direction = FilterDirection::Forward;
  InfoMode mode = InfoMode::IncrementsOnly;
  TimeGrid grid;
  int n = 0, m = 0;
  std::vector<char> observed;      // per step: whether dy(k) is consumed
  std::vector<Matrix> covariance;  // per node
  std::vector<Matrix> transition;  // per step
  std::vector<Matrix> gain;        // per step, zero when dy(k) is unused
  std::vector<GapJump> jumps;      // ProcessValues only

  explicit FilterPlan(const TimeGrid& g) : grid(g) {}
};

struct FilterResult {
  FilterDirection direction = FilterDirection::Forward;
  TimeGrid grid;
  std::vector<Vector> estimate;    // per node
  std::vector<Matrix> covariance;  // per node
  std::vector<Matrix> gain;        // per step

  explicit FilterResult(const TimeGrid& g) : grid(g) {}
};

// Forward pass: estimate at node j conditions on consumed data from steps
// before j, starting from the balanced prior (zero mean, unit covariance).
// Continuous kind: explicit-Euler estimate update with the node gain and one
// RK4 step per interval for the covariance. Discrete kind: exact recursion.
FilterPlan forward_plan(const BalancedModel& bal,
                        const ObservationPattern& pattern);

// Backward pass: estimate at node j conditions on consumed data from steps
// at or after j, starting from the unit-covariance prior at the final node.
// Runs the time-reversed representation (Bbar, Cbar, Dbar) toward t0.
FilterPlan backward_plan(const BalancedModel& bal,
                         const ObservationPattern& pattern);

// Runs the estimate recursion of a plan over one increment sequence
// (increments[k] = y(k+1) - y(k), one per step).
FilterResult apply_plan(const FilterPlan& plan,
                        const std::vector<Vector>& increments);

FilterResult forward_filter(const BalancedModel& bal,
                            const ObservationPattern& pattern,
                            const std::vector<Vector>& increments);
FilterResult backward_filter(const BalancedModel& bal,
                             const ObservationPattern& pattern,
                             const std::vector<Vector>& increments);

}  // namespace tfs
