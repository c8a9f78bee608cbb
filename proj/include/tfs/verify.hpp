#pragma once

#include "tfs/config.hpp"
#include "tfs/filtering.hpp"
#include "tfs/fusion.hpp"
#include "tfs/io.hpp"
#include "tfs/model.hpp"

namespace tfs {

// Invariant checks over one completed smoothing run (shared by run_pipeline
// and the verification suite): covariance identity, PSD dominance, weight
// closure, gap trace growth, trace dominance, and a count of nodes where a
// pass covariance came within jitter of singular (informational, never
// failing).
Report fusion_identity_checks(const BalancedModel& bal,
                              const ObservationPattern& pattern,
                              const FilterResult& fwd, const FilterResult& bwd,
                              const SmootherResult& sm);

// Balanced identity, covariance re-propagation, and the all-pass
// certificates (random imaginary-axis points for the config's model, exact
// unitarity of the completion for a random balanced 3-state discrete model).
Report verify_model_identities(const RunConfig& cfg);

// Fused smoother vs the brute-force conditioning oracle on a clipped
// (T <= 5, h ~ 0.05) exactly-discretized copy of the config, once per
// availability mode over the config's interval tiling.
Report verify_oracle_equivalence(const RunConfig& cfg);

// fusion_identity_checks over a fresh run of the config itself.
Report verify_fusion_identities(const RunConfig& cfg);

// Statistical suite on a clipped (T <= 5, h ~ 0.02) copy: error-covariance
// consistency, forward/backward cross-covariance, fusion orthogonality
// (tolerance 5/sqrt(N)), and whiteness of the reversed-time noise increments
// (tolerance 4/sqrt(N)).
Report verify_monte_carlo(const RunConfig& cfg, int replications);

// Step-halving study on a clipped copy: the filter estimate error is O(h),
// so consecutive max-node differences must shrink by about 2x.
Report verify_convergence(const RunConfig& cfg);

// Two full pipeline runs with the same seed must produce byte-identical
// CSV outputs (written under <out_dir>/determinism/).
Report verify_determinism(const RunConfig& cfg);

struct VerifyOptions {
  int replications = 20000;
  bool monte_carlo = true;
  bool convergence = true;
  bool determinism = true;
};

Report verify_all(const RunConfig& cfg, const VerifyOptions& opt = {});

}  // namespace tfs
