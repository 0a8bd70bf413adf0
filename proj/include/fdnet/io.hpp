#pragma once

// Text formats: edge lists, FCAP holdings tables, dense CSV matrices.
// Numbers are written with 17 significant digits and '.' as the decimal
// separator regardless of the process locale.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fdnet/error.hpp"
#include "fdnet/netgen.hpp"

namespace fdnet::io {

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ParseError("not a number: '" + std::string(field) + "'", line);
  }
  return v;
}

inline std::uint64_t parse_id(std::string_view field, std::size_t line) {
  field = trim(field);
  std::uint64_t v = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || v == 0) {
    throw ParseError("node ids must be positive integers, got '" + std::string(field) + "'", line);
  }
  return v;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

inline bool skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

/// Reads `i<TAB>j[<TAB>weight]` records with 1-based ids. `n` of zero means
/// "largest id seen".
inline Graph read_edgelist(std::istream& in, bool weighted, Index n = 0) {
  std::vector<Edge> edges;
  std::string raw;
  std::size_t line = 0;
  std::uint64_t max_id = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (skippable(raw)) continue;
    const auto fields = split(trim(raw), '\t');
    const std::size_t expected = weighted ? 3 : 2;
    if (fields.size() != expected) {
      throw ParseError("expected " + std::to_string(expected) + " tab-separated fields", line);
    }
    const std::uint64_t a = parse_id(fields[0], line);
    const std::uint64_t b = parse_id(fields[1], line);
    const double w = weighted ? parse_double(fields[2], line) : 1.0;
    if (w < 0.0) throw DataError("line " + std::to_string(line) + ": negative weight");
    if (a == b) throw DataError("line " + std::to_string(line) + ": self-loop");
    max_id = std::max({max_id, a, b});
    edges.push_back({static_cast<Index>(a - 1), static_cast<Index>(b - 1), w});
  }
  if (n == 0) n = static_cast<Index>(max_id);
  if (max_id > n) throw DataError("edge list references node " + std::to_string(max_id) + " beyond n");
  return Graph(n, std::move(edges));
}

inline Graph read_edgelist(const std::string& path, bool weighted, Index n = 0) {
  auto in = open_input(path);
  return read_edgelist(in, weighted, n);
}

inline void write_edgelist(std::ostream& out, const Graph& g, bool weighted,
                           const std::vector<std::string>& header = {}) {
  for (const auto& h : header) out << "# " << h << '\n';
  for (const Edge& e : g.edges()) {
    out << (e.i + 1) << '\t' << (e.j + 1);
    if (weighted) out << '\t' << format_double(e.weight);
    out << '\n';
  }
}

/// Builds the fund common-ownership graph from a holdings table
/// `fund_id<TAB>stock_id<TAB>shares<TAB>price<TAB>shares_outstanding`:
/// a_ij = sum over funds holding both of (S_i^f P_i + S_j^f P_j) / (S_i P_i + S_j P_j).
inline Graph read_fcap_holdings(std::istream& in, Index n = 0) {
  struct Holding {
    Index stock;
    double value;  // shares held times price
  };
  std::map<std::string, std::vector<Holding>> funds;
  std::unordered_map<Index, double> capitalisation;  // S_i P_i
  std::string raw;
  std::size_t line = 0;
  std::uint64_t max_id = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (skippable(raw)) continue;
    const auto f = split(trim(raw), '\t');
    if (f.size() != 5) throw ParseError("expected 5 tab-separated fields", line);
    const std::string fund(trim(f[0]));
    if (fund.empty()) throw ParseError("empty fund id", line);
    const std::uint64_t stock = parse_id(f[1], line);
    const double shares = parse_double(f[2], line);
    const double price = parse_double(f[3], line);
    const double outstanding = parse_double(f[4], line);
    if (shares < 0.0 || price <= 0.0 || outstanding <= 0.0) {
      throw DataError("line " + std::to_string(line) + ": holdings need shares >= 0, price > 0, outstanding > 0");
    }
    const auto id = static_cast<Index>(stock - 1);
    const double cap = outstanding * price;
    const auto [it, inserted] = capitalisation.emplace(id, cap);
    if (!inserted && it->second != cap) {
      throw DataError("line " + std::to_string(line) + ": inconsistent price or shares outstanding for stock " +
                      std::to_string(stock));
    }
    auto& held = funds[fund];
    for (const Holding& h : held) {
      if (h.stock == id) throw DataError("line " + std::to_string(line) + ": duplicate fund/stock row");
    }
    held.push_back({id, shares * price});
    max_id = std::max(max_id, stock);
  }
  if (n == 0) n = static_cast<Index>(max_id);
  if (max_id > n) throw DataError("holdings reference stock beyond n");

  std::map<std::pair<Index, Index>, double> weight;
  for (const auto& [fund, held] : funds) {
    for (std::size_t a = 0; a < held.size(); ++a) {
      for (std::size_t b = a + 1; b < held.size(); ++b) {
        Index i = held[a].stock, j = held[b].stock;
        const double term = (held[a].value + held[b].value) / (capitalisation.at(i) + capitalisation.at(j));
        if (i > j) std::swap(i, j);
        weight[{i, j}] += term;
      }
    }
  }
  std::vector<Edge> edges;
  edges.reserve(weight.size());
  for (const auto& [pair, w] : weight) edges.push_back({pair.first, pair.second, w});
  return Graph(n, std::move(edges));
}

inline Graph read_fcap_holdings(const std::string& path, Index n = 0) {
  auto in = open_input(path);
  return read_fcap_holdings(in, n);
}

enum class EdgeSchema { binary, weighted, fcap };

inline EdgeSchema parse_schema(std::string_view s) {
  if (s == "binary") return EdgeSchema::binary;
  if (s == "weighted") return EdgeSchema::weighted;
  if (s == "fcap") return EdgeSchema::fcap;
  throw ParameterError("unknown edge-list schema '" + std::string(s) + "'");
}

inline std::string_view schema_name(EdgeSchema s) {
  switch (s) {
    case EdgeSchema::binary: return "binary";
    case EdgeSchema::weighted: return "weighted";
    case EdgeSchema::fcap: return "fcap";
  }
  return "?";
}

inline Graph read_graph(const std::string& path, EdgeSchema schema, Index n = 0) {
  return schema == EdgeSchema::fcap ? read_fcap_holdings(path, n)
                                    : read_edgelist(path, schema == EdgeSchema::weighted, n);
}

/// Raw (unnormalised) adjacency weights from a file; call row_normalize as needed.
inline WeightsMatrix ingest_edgelist(const std::string& path, EdgeSchema schema, Index n = 0) {
  const Graph g = read_graph(path, schema, n);
  return WeightsMatrix(g.adjacency_matrix(), false,
                       Provenance{"ingest", {{"path", path}, {"schema", std::string(schema_name(schema))}}, {}});
}

inline void write_dense_csv(std::ostream& out, const Eigen::MatrixXd& m, const std::vector<std::string>& header = {}) {
  for (const auto& h : header) out << "# " << h << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_dense_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (skippable(raw)) continue;
    std::vector<double> row;
    for (auto field : split(trim(raw), ',')) row.push_back(parse_double(field, line));
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged CSV row", line);
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline Eigen::MatrixXd read_dense_csv(const std::string& path) {
  auto in = open_input(path);
  return read_dense_csv(in);
}

}  // namespace fdnet::io
