#pragma once

#include <string>
#include <vector>

#include "tfs/config.hpp"
#include "tfs/io.hpp"

namespace tfs {

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunReport {
  std::vector<std::string> outputs;  // files written, in order
  Report checks;
  double oracle_max_error = 0.0;
  std::vector<StageTiming> timings;

  bool ok() const { return all_pass(checks); }
};

// Full run: simulate -> balance -> filter both directions -> fuse, then the
// run invariants and the clipped oracle comparison. Writes trajectory.csv,
// forward.csv, backward.csv, smoothed.csv and report.json under
// cfg.out_dir. Deterministic given config + seed.
RunReport run_pipeline(const RunConfig& cfg);

// Stage subsets. Later stages read the earlier stages' CSV outputs from
// cfg.out_dir and raise MissingInputError when one is absent.
RunReport run_simulate(const RunConfig& cfg);  // writes trajectory.csv
RunReport run_filter(const RunConfig& cfg);    // writes forward/backward.csv
RunReport run_smooth(const RunConfig& cfg);    // writes smoothed.csv

// The full verification suite (model identities, oracle equivalence, run
// invariants, Monte-Carlo statistics, step-halving convergence,
// determinism); writes report.json under cfg.out_dir.
RunReport run_verify(const RunConfig& cfg);

}  // namespace tfs
