#pragma once

#include <map>
#include <string>
#include <vector>

#include "tfs/filtering.hpp"
#include "tfs/fusion.hpp"
#include "tfs/simulate.hpp"

namespace tfs {

struct MissingInputError : Error {
  using Error::Error;
};

// Per-node 0/1 flags: 1 when the node's time lies in an observed interval.
// Boundary nodes belong to the later interval; the final node to the last.
std::vector<int> node_availability(const TimeGrid& grid,
                                   const ObservationPattern& pattern);

// All CSV files share the format: comma separator, LF line endings, header
// row, floats printed with 17 significant digits (lossless round-trip).
// Every row is one grid node.
//
//   trajectory.csv  t, x1..xn, y1..ym, avail
//   forward.csv     t, xm1..xmn, Qm11..Qmnn (row-major), avail
//   backward.csv    t, xp1..xpn, Qp11..Qpnn (row-major), avail
//   smoothed.csv    t, xs1..xsn, Qs11..Qsnn (row-major)
void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const std::vector<int>& avail);
void write_filter_csv(const std::string& path, const FilterResult& res,
                      const std::vector<int>& avail);
void write_smoothed_csv(const std::string& path, const SmootherResult& sm);

// Readers rebuild the grid from the t column (uniform to 1e-9) and validate
// the header against the writer's schema. Missing files raise
// MissingInputError; malformed content raises Error naming the file. The
// returned Trajectory carries no noise increments (dw stays empty).
Trajectory read_trajectory_csv(const std::string& path);
FilterResult read_filter_csv(const std::string& path, FilterDirection dir);

struct CheckResult {
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Flat map check-name -> {residual, tolerance, pass}.
using Report = std::map<std::string, CheckResult>;

void write_report_json(const std::string& path, const Report& report);
Report read_report_json(const std::string& path);

bool all_pass(const Report& report);

}  // namespace tfs
