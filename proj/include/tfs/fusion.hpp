#pragma once

#include <vector>

#include "tfs/filtering.hpp"
#include "tfs/model.hpp"
#include "tfs/numerics.hpp"

namespace tfs {

struct SmootherResult {
  TimeGrid grid;
  std::vector<Vector> estimate;
  std::vector<Matrix> covariance;
  std::vector<Matrix> forward_weight;   // applied to the forward estimate
  std::vector<Matrix> backward_weight;  // applied to the backward estimate

  explicit SmootherResult(const TimeGrid& g) : grid(g) {}
};

// Per-node fusion of the two one-sided passes. Each pass carries the unit
// prior, so the information forms add with one prior copy removed:
//   Q^{-1} = Qf^{-1} + Qb^{-1} - I,
//   xhat   = Q (Qf^{-1} xf + Qb^{-1} xb),
// and the returned weights are Q Qf^{-1} and Q Qb^{-1}. Throws
// IndefiniteError when the combined information matrix fails to be positive
// semidefinite and PatternMismatchError when the passes do not pair up.
SmootherResult fuse(const FilterResult& fwd, const FilterResult& bwd);

struct NodeMoments {
  Vector estimate;
  Matrix covariance;
};

// Brute-force conditional moments on a discrete model: every node state and
// every consumed observation is a linear map of the stacked standard-normal
// sources, and each query is one dense Gaussian conditioning. Shares no
// recursion with the filters; exists to cross-check them.
//
// An observation is tagged with the step span it aggregates. The forward
// pass at node j may use spans ending before j, the backward pass spans
// starting at or after j, and the smoothed query the union of both, which
// excludes exactly the aggregate of a gap straddling j.
class BatchOracle {
 public:
  BatchOracle(const LtvSystem& sys, const ObservationPattern& pattern);

  const TimeGrid& grid() const { return grid_; }

  NodeMoments forward(int node, const std::vector<Vector>& increments) const;
  NodeMoments backward(int node, const std::vector<Vector>& increments) const;
  NodeMoments smoothed(int node, const std::vector<Vector>& increments) const;

 private:
  struct Entry {
    Matrix map;
    int first = 0;
    int last = 0;
  };

  NodeMoments condition_on(int node, const std::vector<Vector>& increments,
                           bool use_forward, bool use_backward) const;

  TimeGrid grid_;
  int n_ = 0, m_ = 0;
  std::vector<Matrix> xmap_;   // per node
  std::vector<Matrix> dymap_;  // per step
  std::vector<Entry> entries_;
};

// Smoothed moments at every node in one call.
std::vector<NodeMoments> batch_oracle(const LtvSystem& sys,
                                      const ObservationPattern& pattern,
                                      const std::vector<Vector>& increments);

}  // namespace tfs
