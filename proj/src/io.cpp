#include "tfs/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tfs {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingInputError("missing input file: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv(line));
  }
  if (rows.size() < 2)
    throw Error("'" + path + "': expected a header row and at least one node");
  return rows;
}

double parse_double(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw Error("'" + path + "': malformed number '" + s + "'");
  return v;
}

void require_header(const std::vector<std::string>& actual,
                    const std::vector<std::string>& expected,
                    const std::string& path) {
  if (actual != expected) {
    std::string want;
    for (const std::string& c : expected) want += (want.empty() ? "" : ",") + c;
    throw Error("'" + path + "': unexpected header; expected " + want);
  }
}

TimeGrid grid_from_times(const std::vector<double>& t,
                         const std::string& path) {
  if (t.size() < 2) throw Error("'" + path + "': need at least two nodes");
  const double t0 = t[0];
  const double h = t[1] - t[0];
  if (!(h > 0.0)) throw Error("'" + path + "': time column is not increasing");
  for (std::size_t k = 0; k < t.size(); ++k)
    if (std::abs(t[k] - (t0 + h * static_cast<double>(k))) >
        1e-9 * std::max(1.0, std::abs(t[k])))
      throw Error("'" + path + "': time column is not uniformly spaced");
  return TimeGrid(t0, h, static_cast<int>(t.size()) - 1);
}

std::vector<std::string> vector_names(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

std::vector<std::string> matrix_names(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j)
      out.push_back(prefix + std::to_string(i) + std::to_string(j));
  return out;
}

void append(std::vector<std::string>& dst, std::vector<std::string> src) {
  for (std::string& s : src) dst.push_back(std::move(s));
}

int count_prefixed(const std::vector<std::string>& header,
                   const std::string& prefix, std::size_t from) {
  int n = 0;
  for (std::size_t i = from; i < header.size(); ++i) {
    const std::string want = prefix + std::to_string(n + 1);
    if (header[i] == want)
      ++n;
    else
      break;
  }
  return n;
}

}  // namespace

std::vector<int> node_availability(const TimeGrid& grid,
                                   const ObservationPattern& pattern) {
  const auto blocks = pattern.blocks(grid);
  std::vector<int> avail(grid.node_count(), 0);
  for (const auto& blk : blocks)
    for (int j = blk.begin; j < blk.end; ++j) avail[j] = blk.observed ? 1 : 0;
  avail[grid.steps()] = blocks.back().observed ? 1 : 0;
  return avail;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const std::vector<int>& avail) {
  const int n = static_cast<int>(traj.x[0].size());
  const int m = static_cast<int>(traj.y[0].size());
  std::ofstream out = open_out(path);
  std::vector<std::string> header{"t"};
  append(header, vector_names("x", n));
  append(header, vector_names("y", m));
  header.push_back("avail");
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (int k = 0; k <= traj.grid.steps(); ++k) {
    out << fmt(traj.grid.node(k));
    for (int i = 0; i < n; ++i) out << "," << fmt(traj.x[k](i));
    for (int i = 0; i < m; ++i) out << "," << fmt(traj.y[k](i));
    out << "," << avail[k] << "\n";
  }
}

void write_filter_csv(const std::string& path, const FilterResult& res,
                      const std::vector<int>& avail) {
  const bool fwd = res.direction == FilterDirection::Forward;
  const std::string xp = fwd ? "xm" : "xp";
  const std::string qp = fwd ? "Qm" : "Qp";
  const int n = static_cast<int>(res.estimate[0].size());
  std::ofstream out = open_out(path);
  std::vector<std::string> header{"t"};
  append(header, vector_names(xp, n));
  append(header, matrix_names(qp, n));
  header.push_back("avail");
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (int k = 0; k <= res.grid.steps(); ++k) {
    out << fmt(res.grid.node(k));
    for (int i = 0; i < n; ++i) out << "," << fmt(res.estimate[k](i));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out << "," << fmt(res.covariance[k](i, j));
    out << "," << avail[k] << "\n";
  }
}

void write_smoothed_csv(const std::string& path, const SmootherResult& sm) {
  const int n = static_cast<int>(sm.estimate[0].size());
  std::ofstream out = open_out(path);
  std::vector<std::string> header{"t"};
  append(header, vector_names("xs", n));
  append(header, matrix_names("Qs", n));
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (int k = 0; k <= sm.grid.steps(); ++k) {
    out << fmt(sm.grid.node(k));
    for (int i = 0; i < n; ++i) out << "," << fmt(sm.estimate[k](i));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out << "," << fmt(sm.covariance[k](i, j));
    out << "\n";
  }
}

Trajectory read_trajectory_csv(const std::string& path) {
  const auto rows = read_rows(path);
  const auto& header = rows[0];
  const int n = count_prefixed(header, "x", 1);
  const int m = count_prefixed(header, "y", 1 + n);
  if (n < 1 || m < 1)
    throw Error("'" + path + "': could not infer state/output dimensions");
  std::vector<std::string> expected{"t"};
  append(expected, vector_names("x", n));
  append(expected, vector_names("y", m));
  expected.push_back("avail");
  require_header(header, expected, path);

  std::vector<double> t;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != expected.size())
      throw Error("'" + path + "': row " + std::to_string(r) +
                  " has the wrong number of fields");
    t.push_back(parse_double(rows[r][0], path));
  }
  Trajectory traj(grid_from_times(t, path));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    Vector x(n), y(m);
    for (int i = 0; i < n; ++i) x(i) = parse_double(rows[r][1 + i], path);
    for (int i = 0; i < m; ++i) y(i) = parse_double(rows[r][1 + n + i], path);
    traj.x.push_back(x);
    traj.y.push_back(y);
  }
  return traj;
}

FilterResult read_filter_csv(const std::string& path, FilterDirection dir) {
  const bool fwd = dir == FilterDirection::Forward;
  const std::string xp = fwd ? "xm" : "xp";
  const std::string qp = fwd ? "Qm" : "Qp";
  const auto rows = read_rows(path);
  const auto& header = rows[0];
  const int n = count_prefixed(header, xp, 1);
  if (n < 1)
    throw Error("'" + path + "': could not infer the state dimension");
  std::vector<std::string> expected{"t"};
  append(expected, vector_names(xp, n));
  append(expected, matrix_names(qp, n));
  expected.push_back("avail");
  require_header(header, expected, path);

  std::vector<double> t;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != expected.size())
      throw Error("'" + path + "': row " + std::to_string(r) +
                  " has the wrong number of fields");
    t.push_back(parse_double(rows[r][0], path));
  }
  FilterResult res(grid_from_times(t, path));
  res.direction = dir;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    Vector x(n);
    Matrix Q(n, n);
    for (int i = 0; i < n; ++i) x(i) = parse_double(rows[r][1 + i], path);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        Q(i, j) = parse_double(rows[r][1 + n + i * n + j], path);
    res.estimate.push_back(x);
    res.covariance.push_back(Q);
  }
  return res;
}

void write_report_json(const std::string& path, const Report& report) {
  nlohmann::json root;
  for (const auto& [name, check] : report)
    root[name] = {{"residual", check.residual},
                  {"tolerance", check.tolerance},
                  {"pass", check.pass}};
  std::ofstream out = open_out(path);
  out << root.dump(2) << "\n";
}

Report read_report_json(const std::string& path) {
  std::ifstream in = open_in(path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("'" + path + "': " + e.what());
  }
  Report report;
  for (const auto& item : root.items()) {
    CheckResult check;
    check.residual = item.value().at("residual").get<double>();
    check.tolerance = item.value().at("tolerance").get<double>();
    check.pass = item.value().at("pass").get<bool>();
    report[item.key()] = check;
  }
  return report;
}

bool all_pass(const Report& report) {
  for (const auto& [name, check] : report)
    if (!check.pass) return false;
  return true;
}

}  // namespace tfs
