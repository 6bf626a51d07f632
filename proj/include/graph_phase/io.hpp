#pragma once

// Text formats for graphs and fields, and result files (log.csv,
// final_state.txt, report.json). Numbers are written with 17 significant
// digits so that parsing a written file reproduces the values exactly.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "graph_phase/error.hpp"
#include "graph_phase/graph.hpp"
#include "graph_phase/multi_class.hpp"
#include "graph_phase/trajectory.hpp"

namespace graph_phase {

/// %.17g formatting; non-finite values become "nan", "inf", "-inf".
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

inline bool is_skippable(const std::vector<std::string>& tokens) {
  return tokens.empty() || tokens.front().front() == '#';
}

[[noreturn]] inline void parse_fail(const std::string& source, int line, const std::string& what) {
  throw Error(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

inline long parse_int(const std::string& tok, const std::string& source, int line) {
  long v = 0;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || ptr != end) parse_fail(source, line, "expected integer, got '" + tok + "'");
  return v;
}

inline double parse_real(const std::string& tok, const std::string& source, int line) {
  double v = 0.0;
  const char* begin = tok.data();
  if (!tok.empty() && tok.front() == '+') ++begin;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    parse_fail(source, line, "expected finite number, got '" + tok + "'");
  }
  return v;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return in;
}

}  // namespace detail

/// Header `vertices N r R`, then one `i j w` edge per line; `#` starts a
/// comment line.
inline Graph parse_graph(std::istream& in, const std::string& source = "<graph>") {
  int line_no = 0;
  bool have_header = false;
  long n = 0;
  double r = 0.0;
  std::vector<Edge> edges;
  std::set<std::pair<long, long>> seen;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto tok = detail::split_tokens(line);
    if (detail::is_skippable(tok)) continue;
    if (!have_header) {
      if (tok.size() != 4 || tok[0] != "vertices" || tok[2] != "r") {
        detail::parse_fail(source, line_no, "expected header 'vertices N r R'");
      }
      n = detail::parse_int(tok[1], source, line_no);
      r = detail::parse_real(tok[3], source, line_no);
      if (n < 2 || n > 1000000) detail::parse_fail(source, line_no, "vertex count out of range");
      have_header = true;
      continue;
    }
    if (tok.size() != 3) detail::parse_fail(source, line_no, "expected 'i j w'");
    const long i = detail::parse_int(tok[0], source, line_no);
    const long j = detail::parse_int(tok[1], source, line_no);
    const double w = detail::parse_real(tok[2], source, line_no);
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw Error(ErrorKind::IndexOutOfRange,
                  source + ":" + std::to_string(line_no) + ": vertex index out of range");
    }
    if (!seen.insert({std::min(i, j), std::max(i, j)}).second) {
      throw Error(ErrorKind::DuplicateEdge,
                  source + ":" + std::to_string(line_no) + ": edge (" + std::to_string(i) + ", " +
                      std::to_string(j) + ") repeated");
    }
    edges.push_back({static_cast<int>(i), static_cast<int>(j), w});
  }
  if (!have_header) detail::parse_fail(source, line_no, "missing header 'vertices N r R'");
  return build_graph(static_cast<int>(n), std::move(edges), r);
}

inline Graph parse_graph_file(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_graph(in, path);
}

namespace detail {

/// Reads `i v1 ... vK` rows, one per vertex, every vertex exactly once.
inline Eigen::MatrixXd parse_rows(std::istream& in, const std::string& source, int n, int K) {
  Eigen::MatrixXd values(n, K);
  std::vector<char> filled(static_cast<std::size_t>(n), 0);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto tok = split_tokens(line);
    if (is_skippable(tok)) continue;
    if (static_cast<int>(tok.size()) != K + 1) {
      parse_fail(source, line_no, "expected vertex index and " + std::to_string(K) + " value(s)");
    }
    const long i = parse_int(tok[0], source, line_no);
    if (i < 0 || i >= n) parse_fail(source, line_no, "vertex index out of range");
    if (filled[i]) parse_fail(source, line_no, "vertex " + std::to_string(i) + " given twice");
    filled[i] = 1;
    for (int k = 0; k < K; ++k) values(i, k) = parse_real(tok[k + 1], source, line_no);
  }
  for (int i = 0; i < n; ++i) {
    if (!filled[i]) throw Error(ErrorKind::MissingVertex, source + ": no value for vertex " + std::to_string(i));
  }
  return values;
}

}  // namespace detail

/// Two-class field: `i value` per vertex, values in [0, 1].
inline Field parse_field(std::istream& in, const Graph& g, const std::string& source = "<field>") {
  const Eigen::MatrixXd values = detail::parse_rows(in, source, g.num_vertices(), 1);
  Field u = values.col(0);
  for (int i = 0; i < g.num_vertices(); ++i) {
    if (!(u[i] >= 0.0 && u[i] <= 1.0)) {
      throw Error(ErrorKind::DomainViolation,
                  source + ": vertex " + std::to_string(i) + " value " + format_double(u[i]) +
                      " outside [0, 1]");
    }
  }
  return u;
}

inline Field parse_field_file(const std::string& path, const Graph& g) {
  auto in = detail::open_input(path);
  return parse_field(in, g, path);
}

/// Multi-class field: `i v1 ... vK` per vertex, nonnegative entries whose row
/// sum is within 1e-8 of 1; rows are renormalized to sum to 1.
inline SimplexField parse_simplex_field(std::istream& in, const Graph& g, int K,
                                        const std::string& source = "<field>") {
  if (K < 2) throw Error(ErrorKind::InvalidParameter, "need at least 2 classes");
  SimplexField U = detail::parse_rows(in, source, g.num_vertices(), K);
  for (int i = 0; i < g.num_vertices(); ++i) {
    if (U.row(i).minCoeff() < 0.0) {
      throw Error(ErrorKind::DomainViolation,
                  source + ": vertex " + std::to_string(i) + " has a negative class weight");
    }
    const double sum = U.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-8) {
      throw Error(ErrorKind::ParseError,
                  source + ": row of vertex " + std::to_string(i) + " sums to " + format_double(sum));
    }
    U.row(i) /= sum;
  }
  return U;
}

inline SimplexField parse_simplex_field_file(const std::string& path, const Graph& g, int K) {
  auto in = detail::open_input(path);
  return parse_simplex_field(in, g, K, path);
}

inline void write_rows(std::ostream& out, const Eigen::MatrixXd& values) {
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < values.cols(); ++k) out << ' ' << format_double(values(i, k));
    out << '\n';
  }
}

inline void write_graph(std::ostream& out, const Graph& g) {
  out << "vertices " << g.num_vertices() << " r " << format_double(g.r()) << '\n';
  for (const auto& e : g.edges()) out << e.i << ' ' << e.j << ' ' << format_double(e.weight) << '\n';
}

inline void write_log_csv(std::ostream& out, const std::vector<LogEntry>& log) {
  out << "step,mass,H,H_tau,GL,max_change,multiplier\n";
  for (const auto& e : log) {
    out << e.step << ',' << format_double(e.mass) << ',' << format_double(e.H) << ','
        << format_double(e.H_tau) << ',' << format_double(e.GL) << ','
        << format_double(e.max_change) << ',' << format_double(e.multiplier) << '\n';
  }
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace detail

inline std::filesystem::path ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error(ErrorKind::IoError, "cannot create output directory " + dir);
  }
  return dir;
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  auto out = detail::open_output(path);
  writer(out);
  detail::finish_output(out, path);
}

/// Writes log.csv and final_state.txt for a trajectory.
inline void write_trajectory_outputs(const Trajectory& traj, const std::string& dir) {
  const auto root = ensure_directory(dir);
  write_file(root / "log.csv", [&](std::ostream& out) { write_log_csv(out, traj.log); });
  write_file(root / "final_state.txt",
             [&](std::ostream& out) { write_rows(out, traj.final_state()); });
}

/// Writes report.json with keys mode, params, rows (plus any extra keys).
inline void write_report(const std::string& dir, const std::string& mode,
                         const nlohmann::json& params, const nlohmann::json& rows,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  const auto root = ensure_directory(dir);
  nlohmann::json report = extra;
  report["mode"] = mode;
  report["params"] = params;
  report["rows"] = rows;
  write_file(root / "report.json", [&](std::ostream& out) { out << report.dump(2) << '\n'; });
}

}  // namespace graph_phase
