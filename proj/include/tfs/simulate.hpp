#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "tfs/model.hpp"
#include "tfs/numerics.hpp"

namespace tfs {

// Derives the seed of substream `counter` from a base seed (splitmix64
// finalizer). Replications seeded this way are mutually independent and may
// run in any order.
std::uint64_t split_seed(std::uint64_t base, std::uint64_t counter);

// Deterministic standard-normal stream: mt19937_64 driving a Box-Muller
// transform. Identical seeds give identical draw sequences.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed);

  double normal();
  Vector normal_vector(int n);

 private:
  double uniform();  // in (0, 1]
  std::mt19937_64 rng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Sampled path of states, accumulated outputs and driving noise increments.
// y starts at zero; consumers read output data through increment(k) so that
// simulation, filtering and the conditioning oracle all see identical
// numbers.
struct Trajectory {
  TimeGrid grid;
  std::vector<Vector> x;   // per node
  std::vector<Vector> y;   // per node, y[0] = 0
  std::vector<Vector> dw;  // per step
  std::uint64_t seed = 0;

  explicit Trajectory(const TimeGrid& g) : grid(g) {}
  Vector increment(int k) const { return y[k + 1] - y[k]; }
};

// Samples one path. Continuous kind (Euler-Maruyama, increments N(0, h I)):
//   x(k+1) = x(k) + A x(k) h + B dw(k),  y(k+1) = y(k) + C x(k) h + D dw(k).
// Discrete kind: x(k+1) = A x + B w, y(k+1) = y(k) + (C x(k) + D w(k)),
// w ~ N(0, I). x(0) is P0^{1/2} times a standard normal vector (PSD square
// root, so a zero P0 pins x(0) = 0) unless x0 overrides it.
Trajectory simulate(const LtvSystem& sys, std::uint64_t seed,
                    const std::optional<Vector>& x0 = std::nullopt);

// One-step observation model aggregated across [t1, t2]:
//   x(t2) = Ad x(t1) + Bd v,  dy(t1..t2) = Cd x(t1) + Dd v,  v ~ N(0, I_q),
// q = n + m, with gramian = [Bd; Dd] [Bd; Dd]' the joint noise covariance.
// Bd, Dd come from the PSD square root of the gramian (rank deficiency is
// expected for short gaps).
struct GapUpdate {
  double t1 = 0.0, t2 = 0.0;
  Matrix Ad, Cd, Bd, Dd;
  Matrix gramian;
};

// Continuous kind: propagates the augmented pair (transition matrix and
// reachability gramian of [[A,0],[C,0]] with input [B; D]) across [t1, t2]
// with the shared RK4 integrator; no nested quadrature. Discrete kind: exact
// composition of the per-step maps. Requires t1 <= t2, both grid nodes.
GapUpdate exact_discretize_gap(const LtvSystem& sys, double t1, double t2);
GapUpdate exact_discretize_gap(const BalancedModel& bal, double t1, double t2);

// Per-step exact discretization of a continuous-kind model: step k of the
// result reproduces the joint law of (x(t_{k+1}), y increment over step k).
// The result has q = n + m noise channels and inherits grid and P0.
LtvSystem exact_discretize(const LtvSystem& sys);

}  // namespace tfs
