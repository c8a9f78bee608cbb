#include "tfs/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tfs/io.hpp"

namespace tfs {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

void reject_unknown_keys(const json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      fail(where.empty() ? item.key() : where + "." + item.key(),
           "unknown key");
}

double get_number(const json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "expected a number");
  return j.get<double>();
}

Matrix parse_matrix(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) fail(field, "expected a non-empty matrix");
  const auto rows = static_cast<int>(j.size());
  int cols = -1;
  Matrix M;
  for (int r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array() || row.empty())
      fail(field, "expected every matrix row to be a non-empty array");
    if (cols < 0) {
      cols = static_cast<int>(row.size());
      M.resize(rows, cols);
    } else if (static_cast<int>(row.size()) != cols) {
      fail(field, "ragged matrix rows");
    }
    for (int c = 0; c < cols; ++c)
      M(r, c) = get_number(row[c], field + "[" + std::to_string(r) + "][" +
                                       std::to_string(c) + "]");
  }
  return M;
}

bool looks_per_node(const json& j) {
  // Constant: [[num,..],..]; per node: [[[num,..],..],..].
  return j.is_array() && !j.empty() && j[0].is_array() && !j[0].empty() &&
         j[0][0].is_array();
}

std::vector<Matrix> parse_matrix_list(const json& j, const std::string& field) {
  if (!looks_per_node(j)) return {parse_matrix(j, field)};
  std::vector<Matrix> out;
  out.reserve(j.size());
  for (int k = 0; k < static_cast<int>(j.size()); ++k)
    out.push_back(parse_matrix(j[k], field + "[" + std::to_string(k) + "]"));
  return out;
}

json dump_matrix(const Matrix& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

json dump_matrix_list(const std::vector<Matrix>& v) {
  if (v.size() == 1) return dump_matrix(v[0]);
  json out = json::array();
  for (const Matrix& M : v) out.push_back(dump_matrix(M));
  return out;
}

void check_shapes(const RunConfig& cfg) {
  const int n = static_cast<int>(cfg.A[0].rows());
  const int p = static_cast<int>(cfg.B[0].cols());
  const int m = static_cast<int>(cfg.C[0].rows());
  for (const Matrix& M : cfg.A)
    if (M.rows() != n || M.cols() != n) fail("system.A", "expected n x n");
  for (const Matrix& M : cfg.B)
    if (M.rows() != n || M.cols() != p)
      fail("system.B", "row count must match A");
  for (const Matrix& M : cfg.C)
    if (M.rows() != m || M.cols() != n)
      fail("system.C", "column count must match A");
  for (const Matrix& M : cfg.D)
    if (M.rows() != m || M.cols() != p)
      fail("system.D", "shape must pair C's rows with B's columns");
  if (!cfg.stationary_p0 &&
      (cfg.P0.rows() != n || cfg.P0.cols() != n))
    fail("P0", "shape must match the state dimension");
}

int steps_of(double T, double h, const std::string& field) {
  if (!(h > 0.0)) fail("h", "must be positive");
  if (!(T > 0.0)) fail("T", "must be positive");
  const double ratio = T / h;
  const auto steps = static_cast<int>(std::llround(ratio));
  if (steps < 1 || std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio))
    fail(field, "horizon is not a whole number of steps");
  return steps;
}

InfoMode mode_from_string(const std::string& s) {
  if (s == "dy") return InfoMode::IncrementsOnly;
  if (s == "y") return InfoMode::ProcessValues;
  if (s == "signal-loss") return InfoMode::SignalLoss;
  fail("pattern.mode", "expected one of \"dy\", \"y\", \"signal-loss\"");
}

std::string mode_to_string(InfoMode mode) {
  switch (mode) {
    case InfoMode::IncrementsOnly: return "dy";
    case InfoMode::ProcessValues: return "y";
    case InfoMode::SignalLoss: return "signal-loss";
  }
  return "y";
}

}  // namespace

TimeGrid RunConfig::grid() const {
  return TimeGrid(0.0, h, steps_of(T, h, "T"));
}

LtvSystem RunConfig::system() const {
  check_shapes(*this);
  const TimeGrid g = grid();
  const Matrix P0r = stationary_p0
                         ? stationary_initial_covariance(TimeKind::Continuous,
                                                         A[0], B[0])
                         : P0;
  if (A.size() == 1 && B.size() == 1 && C.size() == 1 && D.size() == 1)
    return LtvSystem::constant(g, TimeKind::Continuous, A[0], B[0], C[0],
                               D[0], P0r);
  // Each matrix is independently constant or per-node; constants broadcast.
  const auto nodes = static_cast<std::size_t>(g.node_count());
  const auto expand = [&](const std::vector<Matrix>& list, const char* name) {
    if (list.size() == 1) return std::vector<Matrix>(nodes, list[0]);
    if (list.size() != nodes)
      fail(std::string("system.") + name,
           "per-node matrix lists must have one entry per grid node");
    return list;
  };
  return LtvSystem(g, TimeKind::Continuous, expand(A, "A"), expand(B, "B"),
                   expand(C, "C"), expand(D, "D"), P0r);
}

ObservationPattern RunConfig::pattern() const {
  if (intervals.empty())
    return ObservationPattern(mode, {{0.0, T, true}});
  return ObservationPattern(mode, intervals);
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown_keys(root, "",
                      {"system", "T", "h", "P0", "pattern", "seed", "out_dir",
                       "replications"});
  for (const char* key : {"system", "T", "h", "pattern"})
    if (!root.contains(key)) fail(key, "required key missing");

  RunConfig cfg;
  const json& sys = root["system"];
  if (!sys.is_object()) fail("system", "expected an object");
  reject_unknown_keys(sys, "system", {"n", "m", "p", "A", "B", "C", "D"});
  for (const char* key : {"A", "B", "C", "D"})
    if (!sys.contains(key)) fail(std::string("system.") + key,
                                 "required key missing");
  cfg.A = parse_matrix_list(sys["A"], "system.A");
  cfg.B = parse_matrix_list(sys["B"], "system.B");
  cfg.C = parse_matrix_list(sys["C"], "system.C");
  cfg.D = parse_matrix_list(sys["D"], "system.D");
  const auto check_dim = [&](const char* key, int actual) {
    if (sys.contains(key) && sys[key].get<int>() != actual)
      fail(std::string("system.") + key,
           "does not match the matrix shapes");
  };
  check_dim("n", static_cast<int>(cfg.A[0].rows()));
  check_dim("m", static_cast<int>(cfg.C[0].rows()));
  check_dim("p", static_cast<int>(cfg.B[0].cols()));

  cfg.T = get_number(root["T"], "T");
  cfg.h = get_number(root["h"], "h");

  if (root.contains("P0")) {
    const json& p0 = root["P0"];
    if (p0.is_string()) {
      if (p0.get<std::string>() != "stationary")
        fail("P0", "expected \"stationary\" or an explicit matrix");
      cfg.stationary_p0 = true;
    } else {
      cfg.stationary_p0 = false;
      cfg.P0 = parse_matrix(p0, "P0");
    }
  }

  const json& pat = root["pattern"];
  if (!pat.is_object()) fail("pattern", "expected an object");
  reject_unknown_keys(pat, "pattern", {"mode", "intervals"});
  if (!pat.contains("mode")) fail("pattern.mode", "required key missing");
  if (!pat["mode"].is_string()) fail("pattern.mode", "expected a string");
  cfg.mode = mode_from_string(pat["mode"].get<std::string>());
  if (pat.contains("intervals")) {
    const json& list = pat["intervals"];
    if (!list.is_array()) fail("pattern.intervals", "expected an array");
    for (int i = 0; i < static_cast<int>(list.size()); ++i) {
      const std::string where = "pattern.intervals[" + std::to_string(i) + "]";
      const json& item = list[i];
      if (!item.is_object()) fail(where, "expected an object");
      reject_unknown_keys(item, where, {"start", "end", "state"});
      for (const char* key : {"start", "end", "state"})
        if (!item.contains(key)) fail(where + "." + key,
                                      "required key missing");
      PatternInterval iv;
      iv.start = get_number(item["start"], where + ".start");
      iv.end = get_number(item["end"], where + ".end");
      const std::string state = item["state"].is_string()
                                    ? item["state"].get<std::string>()
                                    : std::string();
      if (state == "observed")
        iv.observed = true;
      else if (state == "gap")
        iv.observed = false;
      else
        fail(where + ".state", "expected \"observed\" or \"gap\"");
      cfg.intervals.push_back(iv);
    }
  }

  if (root.contains("seed")) {
    if (!root["seed"].is_number_integer() && !root["seed"].is_number_unsigned())
      fail("seed", "expected an integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  }
  if (root.contains("out_dir")) {
    if (!root["out_dir"].is_string()) fail("out_dir", "expected a string");
    cfg.out_dir = root["out_dir"].get<std::string>();
  }
  if (root.contains("replications")) {
    if (!root["replications"].is_number_integer())
      fail("replications", "expected an integer");
    cfg.replications = root["replications"].get<int>();
    if (cfg.replications < 0) fail("replications", "must be non-negative");
  }

  // Surface dimension and grid problems at parse time, not first use.
  (void)cfg.system();
  cfg.pattern().validate(cfg.grid());
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  json sys;
  sys["n"] = static_cast<int>(cfg.A[0].rows());
  sys["m"] = static_cast<int>(cfg.C[0].rows());
  sys["p"] = static_cast<int>(cfg.B[0].cols());
  sys["A"] = dump_matrix_list(cfg.A);
  sys["B"] = dump_matrix_list(cfg.B);
  sys["C"] = dump_matrix_list(cfg.C);
  sys["D"] = dump_matrix_list(cfg.D);

  json pat;
  pat["mode"] = mode_to_string(cfg.mode);
  pat["intervals"] = json::array();
  for (const PatternInterval& iv : cfg.intervals)
    pat["intervals"].push_back({{"start", iv.start},
                                {"end", iv.end},
                                {"state", iv.observed ? "observed" : "gap"}});

  json root;
  root["system"] = sys;
  root["T"] = cfg.T;
  root["h"] = cfg.h;
  root["P0"] = cfg.stationary_p0 ? json("stationary") : dump_matrix(cfg.P0);
  root["pattern"] = pat;
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  root["replications"] = cfg.replications;
  return root.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

RunConfig preset(const std::string& name) {
  if (name == "paper-example") {
    RunConfig cfg;
    Matrix A(2, 2), B(2, 2), C(1, 2), D(1, 2);
    A << 0.0, 1.0, -0.3, -0.7;
    B << 0.0, 0.0, 1.0, 0.0;
    C << 1.0, 0.0;
    D << 0.0, 1.0;
    cfg.A = {A};
    cfg.B = {B};
    cfg.C = {C};
    cfg.D = {D};
    cfg.T = 45.0;
    cfg.h = 0.01;
    cfg.stationary_p0 = true;
    cfg.mode = InfoMode::ProcessValues;
    double t = 0.0;
    for (int i = 1; i <= 9; ++i) {
      const bool observed = i == 1 || i == 3 || i == 5 || i == 9;
      cfg.intervals.push_back({t, t + i, observed});
      t += i;
    }
    cfg.seed = 12345;
    cfg.out_dir = "out";
    cfg.replications = 20000;
    return cfg;
  }
  if (name == "paper-example-coarse") {
    RunConfig cfg = coarsen(preset("paper-example"), 5.0, 0.05);
    cfg.replications = 4000;
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "'; available: paper-example, paper-example-coarse");
}

std::vector<std::string> preset_names() {
  return {"paper-example", "paper-example-coarse"};
}

RunConfig coarsen(const RunConfig& cfg, double T_max, double h_new) {
  RunConfig out = cfg;
  out.T = std::min(cfg.T, T_max);
  const auto steps =
      std::max<long long>(1, std::llround(out.T / h_new));
  out.h = out.T / static_cast<double>(steps);

  const TimeGrid old_grid = cfg.grid();
  const TimeGrid new_grid(0.0, out.h, static_cast<int>(steps));
  // Per-node matrices are resampled on the new grid; constants pass through.
  const auto resample = [&](const std::vector<Matrix>& path) {
    if (path.size() == 1) return path;
    std::vector<Matrix> r;
    r.reserve(new_grid.node_count());
    for (int j = 0; j <= new_grid.steps(); ++j)
      r.push_back(interp_path(path, old_grid, new_grid.node(j)));
    return r;
  };
  out.A = resample(cfg.A);
  out.B = resample(cfg.B);
  out.C = resample(cfg.C);
  out.D = resample(cfg.D);

  out.intervals.clear();
  double at = 0.0;
  for (const PatternInterval& iv : cfg.intervals) {
    if (at >= out.T) break;
    double end = std::min(iv.end, out.T);
    end = out.h * std::llround(end / out.h);
    if (end <= at) continue;
    if (!out.intervals.empty() && out.intervals.back().observed == iv.observed)
      out.intervals.back().end = end;
    else
      out.intervals.push_back({at, end, iv.observed});
    at = end;
  }
  if (out.intervals.empty())
    out.intervals.push_back({0.0, out.T, true});
  out.intervals.back().end = out.T;
  return out;
}

}  // namespace tfs
