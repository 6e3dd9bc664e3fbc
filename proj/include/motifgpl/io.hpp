#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "motifgpl/config.hpp"
#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/node_table.hpp"

namespace motifgpl {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

namespace detail {

template <typename T>
T parse_cell(const std::string& cell, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ValidationError(where + ": cannot parse '" + cell + "'");
  return v;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace detail

/// Edge list CSV: header `src,dst,weight`, 0-based node ids.
inline std::vector<Edge> read_edge_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  if (const auto h = split_csv_line(line); h != std::vector<std::string>{"src", "dst", "weight"})
    throw ValidationError(path + ":1: expected header src,dst,weight");
  std::vector<Edge> edges;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cells.size() != 3) throw ValidationError(where + ": expected 3 fields, got " + std::to_string(cells.size()));
    edges.push_back({detail::parse_cell<NodeId>(cells[0], where), detail::parse_cell<NodeId>(cells[1], where),
                     detail::parse_cell<double>(cells[2], where)});
  }
  return edges;
}

inline void write_edge_csv(const std::string& path, const Graph& g) {
  auto out = detail::open_out(path);
  out << "src,dst,weight\n";
  for (const Edge& e : g.edges()) out << e.u << ',' << e.v << ',' << fmt_double(e.weight) << '\n';
}

struct RawNodeTable {
  Eigen::MatrixXd features;
  Eigen::MatrixXd socio;
};

/// Node table CSV: `node_id,f_0..f_{d-1},tau_0..tau_{c-1}`; rows must list ids 0..n-1 in order.
inline RawNodeTable read_node_csv(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "node_id") throw ValidationError(path + ":1: first column must be node_id");
  std::size_t d = 0, c = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] == "f_" + std::to_string(d) && c == 0) ++d;
    else if (header[i] == "tau_" + std::to_string(c)) ++c;
    else throw ValidationError(path + ":1: unexpected column '" + header[i] + "'");
  }
  if (c < 2) throw ValidationError(path + ":1: need at least two tau columns");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cells.size() != header.size())
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    const auto id = detail::parse_cell<std::size_t>(cells[0], where);
    if (id != rows.size()) throw ValidationError(where + ": node ids must be 0..n-1 in order (got " + cells[0] + ")");
    std::vector<double> row(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i) row[i - 1] = detail::parse_cell<double>(cells[i], where);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path + ": no node rows");
  RawNodeTable t;
  const auto n = static_cast<Eigen::Index>(rows.size());
  t.features.resize(n, static_cast<Eigen::Index>(d));
  t.socio.resize(n, static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < d; ++j) t.features(i, static_cast<Eigen::Index>(j)) = r[j];
    for (std::size_t j = 0; j < c; ++j) t.socio(i, static_cast<Eigen::Index>(j)) = r[d + j];
  }
  return t;
}

inline void write_node_csv(const std::string& path, const NodeTable& t) {
  auto out = detail::open_out(path);
  out << "node_id";
  for (Eigen::Index j = 0; j < t.features.cols(); ++j) out << ",f_" << j;
  for (Eigen::Index j = 0; j < t.socio.cols(); ++j) out << ",tau_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < t.features.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < t.features.cols(); ++j) out << ',' << fmt_double(t.features(i, j));
    for (Eigen::Index j = 0; j < t.socio.cols(); ++j) out << ',' << fmt_double(t.socio(i, j));
    out << '\n';
  }
}

}  // namespace motifgpl
