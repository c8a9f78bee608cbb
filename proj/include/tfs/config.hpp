#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tfs/filtering.hpp"
#include "tfs/model.hpp"
#include "tfs/numerics.hpp"

namespace tfs {

struct ConfigError : Error {
  using Error::Error;
};

// One experiment: a continuous-time model on [0, T], the observation
// pattern, and the run controls. Each system matrix independently holds
// either one entry (constant in time) or one entry per grid node.
struct RunConfig {
  std::vector<Matrix> A, B, C, D;
  double T = 0.0;
  double h = 0.0;
  bool stationary_p0 = true;
  Matrix P0;  // consulted only when stationary_p0 is false
  InfoMode mode = InfoMode::ProcessValues;
  std::vector<PatternInterval> intervals;  // empty means fully observed
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int replications = 20000;

  // T/h must be a whole number of steps to within 1e-9 relative.
  TimeGrid grid() const;
  // Materializes the continuous-kind model with P0 resolved (stationary
  // Lyapunov solution of the node-0 matrices unless given explicitly).
  LtvSystem system() const;
  ObservationPattern pattern() const;
};

// UTF-8 JSON, schema mirroring RunConfig:
//   {"system": {"n":..,"m":..,"p":.., "A": [[..]], "B":.., "C":.., "D":..},
//    "T":.., "h":.., "P0": "stationary" | [[..]],
//    "pattern": {"mode": "dy"|"y"|"signal-loss",
//                "intervals": [{"start":..,"end":..,"state":"observed"|"gap"}]},
//    "seed":.., "out_dir":.., "replications":..}
// System matrices may also be given per node (one extra nesting level).
// Unknown keys are rejected; every diagnostic names the offending field.
RunConfig parse_config(const std::string& json_text);
std::string serialize_config(const RunConfig& cfg);

// Reads and parses a config file; throws MissingInputError when absent.
RunConfig load_config(const std::string& path);

// Built-in configurations. "paper-example" is the reference diffusion
//   A=[[0,1],[-0.3,-0.7]], B=[[0,0],[1,0]], C=[[1,0]], D=[[0,1]]
// on [0, 45] with h=0.01, stationary P0, consecutive interval lengths
// 1,2,...,9 of which the 1st, 3rd, 5th and 9th are observed, mode "y".
// "paper-example-coarse" is the same clipped to T=5 with h=0.05.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Copy with the horizon clipped to at most T_max and the step retargeted to
// h_new (adjusted so the horizon stays a whole number of steps). Interval
// endpoints are snapped to the new grid; degenerate intervals are dropped
// and adjacent intervals with equal state merged. Per-node matrices are
// linearly resampled at the new node times.
RunConfig coarsen(const RunConfig& cfg, double T_max, double h_new);

}  // namespace tfs
