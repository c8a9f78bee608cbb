#include "tfs/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <vector>

#include "tfs/filtering.hpp"
#include "tfs/fusion.hpp"
#include "tfs/simulate.hpp"
#include "tfs/verify.hpp"

namespace tfs {

namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(RunReport& report) : report_(report) { reset(); }

  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    report_.timings.push_back(
        {stage, std::chrono::duration<double>(now - last_).count()});
    last_ = now;
  }

  void reset() { last_ = std::chrono::steady_clock::now(); }

 private:
  RunReport& report_;
  std::chrono::steady_clock::time_point last_;
};

std::string out_path(const RunConfig& cfg, const char* name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

std::vector<Vector> increments_of(const Trajectory& traj) {
  std::vector<Vector> incs;
  incs.reserve(traj.grid.steps());
  for (int k = 0; k < traj.grid.steps(); ++k) incs.push_back(traj.increment(k));
  return incs;
}

BalancedModel balanced_of(const LtvSystem& sys) {
  return balance(sys, propagate_covariance(sys));
}

BalancedModel data_model_of(const BalancedModel& bal,
                            const ObservationPattern& pattern) {
  return pattern.mode() == InfoMode::SignalLoss
             ? apply_signal_loss(bal, pattern)
             : bal;
}

void require_matching_grid(const TimeGrid& file_grid, const TimeGrid& cfg_grid,
                           const std::string& path) {
  if (file_grid.steps() != cfg_grid.steps() ||
      std::abs(file_grid.t0() - cfg_grid.t0()) > 1e-9 ||
      std::abs(file_grid.h() - cfg_grid.h()) >
          1e-9 * std::max(1.0, cfg_grid.h()))
    throw Error("'" + path + "': grid does not match the configuration");
}

}  // namespace

RunReport run_simulate(const RunConfig& cfg) {
  RunReport report;
  Stopwatch watch(report);
  const LtvSystem sys = cfg.system();
  const ObservationPattern pattern = cfg.pattern();
  const BalancedModel bal = balanced_of(sys);
  watch.lap("balance");
  const Trajectory traj =
      simulate(forward_system(data_model_of(bal, pattern)), cfg.seed);
  watch.lap("simulate");
  const std::string path = out_path(cfg, "trajectory.csv");
  write_trajectory_csv(path, traj, node_availability(bal.grid, pattern));
  report.outputs.push_back(path);
  watch.lap("write");
  return report;
}

RunReport run_filter(const RunConfig& cfg) {
  RunReport report;
  Stopwatch watch(report);
  const LtvSystem sys = cfg.system();
  const ObservationPattern pattern = cfg.pattern();
  const BalancedModel bal = balanced_of(sys);
  watch.lap("balance");

  const std::string traj_path = (fs::path(cfg.out_dir) / "trajectory.csv").string();
  const Trajectory traj = read_trajectory_csv(traj_path);
  require_matching_grid(traj.grid, bal.grid, traj_path);
  const std::vector<Vector> incs = increments_of(traj);
  watch.lap("read");

  const FilterResult fwd = forward_filter(bal, pattern, incs);
  const FilterResult bwd = backward_filter(bal, pattern, incs);
  watch.lap("filter");

  const auto avail = node_availability(bal.grid, pattern);
  const std::string fwd_path = out_path(cfg, "forward.csv");
  const std::string bwd_path = out_path(cfg, "backward.csv");
  write_filter_csv(fwd_path, fwd, avail);
  write_filter_csv(bwd_path, bwd, avail);
  report.outputs = {fwd_path, bwd_path};
  watch.lap("write");
  return report;
}

RunReport run_smooth(const RunConfig& cfg) {
  RunReport report;
  Stopwatch watch(report);
  const FilterResult fwd = read_filter_csv(
      (fs::path(cfg.out_dir) / "forward.csv").string(),
      FilterDirection::Forward);
  const FilterResult bwd = read_filter_csv(
      (fs::path(cfg.out_dir) / "backward.csv").string(),
      FilterDirection::Backward);
  watch.lap("read");
  const SmootherResult sm = fuse(fwd, bwd);
  watch.lap("smooth");
  const std::string path = out_path(cfg, "smoothed.csv");
  write_smoothed_csv(path, sm);
  report.outputs.push_back(path);
  watch.lap("write");
  return report;
}

RunReport run_pipeline(const RunConfig& cfg) {
  RunReport report;
  Stopwatch watch(report);
  const LtvSystem sys = cfg.system();
  const ObservationPattern pattern = cfg.pattern();
  const BalancedModel bal = balanced_of(sys);
  watch.lap("balance");

  const Trajectory traj =
      simulate(forward_system(data_model_of(bal, pattern)), cfg.seed);
  const std::vector<Vector> incs = increments_of(traj);
  watch.lap("simulate");

  const FilterResult fwd = forward_filter(bal, pattern, incs);
  const FilterResult bwd = backward_filter(bal, pattern, incs);
  const SmootherResult sm = fuse(fwd, bwd);
  watch.lap("filter");

  const auto avail = node_availability(bal.grid, pattern);
  const std::string traj_path = out_path(cfg, "trajectory.csv");
  const std::string fwd_path = out_path(cfg, "forward.csv");
  const std::string bwd_path = out_path(cfg, "backward.csv");
  const std::string sm_path = out_path(cfg, "smoothed.csv");
  write_trajectory_csv(traj_path, traj, avail);
  write_filter_csv(fwd_path, fwd, avail);
  write_filter_csv(bwd_path, bwd, avail);
  write_smoothed_csv(sm_path, sm);
  watch.lap("write");

  report.checks = fusion_identity_checks(bal, pattern, fwd, bwd, sm);
  const Report oracle = verify_oracle_equivalence(cfg);
  for (const auto& [name, check] : oracle)
    report.oracle_max_error = std::max(report.oracle_max_error,
                                       check.residual);
  report.checks.insert(oracle.begin(), oracle.end());
  watch.lap("verify");

  const std::string report_path = out_path(cfg, "report.json");
  write_report_json(report_path, report.checks);
  report.outputs = {traj_path, fwd_path, bwd_path, sm_path, report_path};
  return report;
}

RunReport run_verify(const RunConfig& cfg) {
  RunReport report;
  Stopwatch watch(report);
  VerifyOptions opt;
  opt.replications = cfg.replications;
  report.checks = verify_all(cfg, opt);
  for (const auto& [name, check] : report.checks)
    if (name.rfind("oracle_equivalence_", 0) == 0)
      report.oracle_max_error =
          std::max(report.oracle_max_error, check.residual);
  watch.lap("verify");
  const std::string report_path = out_path(cfg, "report.json");
  write_report_json(report_path, report.checks);
  report.outputs.push_back(report_path);
  watch.lap("write");
  return report;
}

}  // namespace tfs
