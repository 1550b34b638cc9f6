#pragma once

// CSV artifacts. Every file has a fixed header; numbers use the shortest
// representation that round-trips, so equal runs give equal bytes.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evogame/ensemble.hpp"
#include "evogame/error.hpp"
#include "evogame/metrics.hpp"
#include "evogame/replicator.hpp"
#include "evogame/simplex.hpp"

namespace evogame::io {

inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> coordinate_columns(int d, std::string_view prefix = "p_") {
  std::vector<std::string> cols;
  for (int i = 1; i <= d; ++i) cols.push_back(std::string(prefix) + std::to_string(i));
  return cols;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(Errc::kIo, "cannot write " + path.string());
    width_ = header.size();
    write_line(header);
  }

  void row(const std::vector<double>& values) {
    if (values.size() != width_) throw Error(Errc::kIo, "row width differs from header");
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    write_line(cells);
  }

  void close() {
    out_.close();
    if (!out_) throw Error(Errc::kIo, "failed writing " + path_.string());
  }

 private:
  void write_line(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out_ << ',';
      out_ << cells[k];
    }
    out_ << '\n';
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kParse, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw Error(Errc::kParse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                    std::to_string(table.header.size()) + " fields");
    }
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto& s = cells[k];
      auto res = std::from_chars(s.data(), s.data() + s.size(), row[k]);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error(Errc::kParse,
                    path.string() + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline void expect_header(const CsvTable& table, const std::vector<std::string>& want,
                          const std::filesystem::path& path) {
  if (table.header != want) {
    std::string got;
    for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
    throw Error(Errc::kParse, path.string() + ": unexpected header '" + got + "'");
  }
}

inline int dim_from_header(const CsvTable& table, std::string_view first,
                           const std::filesystem::path& path) {
  const int d = static_cast<int>(table.header.size()) - 1;
  if (d < 2) throw Error(Errc::kParse, path.string() + ": too few columns");
  std::vector<std::string> want{std::string(first)};
  for (const auto& c : coordinate_columns(d)) want.push_back(c);
  expect_header(table, want, path);
  return d;
}

// weight,p_1,...,p_d
inline void write_ensemble(const std::filesystem::path& path, const ParticleEnsemble& ens) {
  std::vector<std::string> header{"weight"};
  for (const auto& c : coordinate_columns(ens.dim())) header.push_back(c);
  CsvWriter w(path, header);
  for (int k = 0; k < ens.size(); ++k) {
    std::vector<double> row{ens.weights[k]};
    for (int i = 0; i < ens.dim(); ++i) row.push_back(ens.points[k][i]);
    w.row(row);
  }
  w.close();
}

inline ParticleEnsemble read_ensemble(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const int d = dim_from_header(table, "weight", path);
  ParticleEnsemble ens;
  for (const auto& row : table.rows) {
    ens.weights.push_back(row[0]);
    Vec p(d);
    for (int i = 0; i < d; ++i) p[i] = row[i + 1];
    ens.points.emplace_back(p);
  }
  ens.validate();
  return ens;
}

// time,p_1,...,p_d
inline void write_trajectory(const std::filesystem::path& path, const std::vector<double>& times,
                             const std::vector<SimplexPoint>& states) {
  if (times.size() != states.size() || states.empty()) {
    throw Error(Errc::kIo, "trajectory needs matching, nonempty times and states");
  }
  std::vector<std::string> header{"time"};
  for (const auto& c : coordinate_columns(states.front().dim())) header.push_back(c);
  CsvWriter w(path, header);
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> row{times[k]};
    for (int i = 0; i < states[k].dim(); ++i) row.push_back(states[k][i]);
    w.row(row);
  }
  w.close();
}

inline void write_trajectory(const std::filesystem::path& path, const ReplicatorTrajectory& traj) {
  write_trajectory(path, traj.times, traj.states);
}

inline ReplicatorTrajectory read_trajectory(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  const int d = dim_from_header(table, "time", path);
  ReplicatorTrajectory traj;
  for (const auto& row : table.rows) {
    traj.times.push_back(row[0]);
    Vec p(d);
    for (int i = 0; i < d; ++i) p[i] = row[i + 1];
    traj.states.emplace_back(p);
  }
  return traj;
}

// edge_lo,edge_hi,mass
inline void write_histogram(const std::filesystem::path& path, const Histogram& hist) {
  CsvWriter w(path, {"edge_lo", "edge_hi", "mass"});
  for (std::size_t k = 0; k < hist.masses.size(); ++k) {
    w.row({hist.edges[k], hist.edges[k + 1], hist.masses[k]});
  }
  w.close();
}

inline Histogram read_histogram(const std::filesystem::path& path, int axis = 0) {
  const auto table = read_csv(path);
  expect_header(table, {"edge_lo", "edge_hi", "mass"}, path);
  Histogram hist;
  hist.axis = axis;
  for (const auto& row : table.rows) {
    if (hist.edges.empty()) hist.edges.push_back(row[0]);
    if (row[0] != hist.edges.back()) throw Error(Errc::kParse, path.string() + ": gap in bins");
    hist.edges.push_back(row[1]);
    hist.masses.push_back(row[2]);
  }
  if (hist.masses.empty()) throw Error(Errc::kParse, path.string() + ": no bins");
  return hist;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace evogame::io
