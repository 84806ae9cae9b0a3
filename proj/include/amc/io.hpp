#pragma once

#include "amc/matrix.hpp"
#include "amc/oracle.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace amc {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 17 significant digits: enough for a lossless double -> text -> double
/// round trip.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Loads a sparse coordinate file: header line `n_rows n_cols n_entries`,
/// then exactly n_entries lines `i j value` with 1-based coordinates.
inline ObservedMatrix load_observed(std::istream& in,
                                    const std::string& name = "<stream>") {
  auto fail = [&](long line, const std::string& what) {
    std::ostringstream msg;
    msg << name << ":" << line << ": " << what;
    throw ParseError(msg.str());
  };

  std::string line;
  long lineno = 0;
  int n_rows = 0, n_cols = 0;
  long n_entries = 0;
  {
    if (!std::getline(in, line)) fail(1, "missing header line");
    ++lineno;
    std::istringstream ss(line);
    if (!(ss >> n_rows >> n_cols >> n_entries))
      fail(lineno, "malformed header, expected 'n_rows n_cols n_entries'");
    std::string extra;
    if (ss >> extra) fail(lineno, "trailing content after header");
    if (n_rows <= 0 || n_cols <= 0 || n_entries < 0)
      fail(lineno, "nonpositive dimensions or negative entry count");
  }

  ObservedMatrix obs(n_rows, n_cols);
  long seen = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int i = 0, j = 0;
    double value = 0.0;
    if (!(ss >> i >> j >> value))
      fail(lineno, "malformed entry line, expected 'i j value'");
    std::string extra;
    if (ss >> extra) fail(lineno, "trailing content after entry");
    if (i < 1 || i > n_rows || j < 1 || j > n_cols)
      fail(lineno, "coordinate out of bounds");
    if (obs.contains(i - 1, j - 1)) fail(lineno, "duplicate coordinate");
    obs.set(i - 1, j - 1, value);
    ++seen;
  }
  if (seen != n_entries) {
    std::ostringstream msg;
    msg << name << ":" << lineno + 1 << ": header promises " << n_entries
        << " entries but file has " << seen;
    throw ParseError(msg.str());
  }
  return obs;
}

inline ObservedMatrix load_observed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open for reading");
  return load_observed(in, path);
}

inline void save_observed(std::ostream& out, const ObservedMatrix& obs) {
  out << obs.n_rows() << ' ' << obs.n_cols() << ' ' << obs.size() << '\n';
  for (const auto& [pos, value] : obs.values())
    out << pos.row + 1 << ' ' << pos.col + 1 << ' ' << format_double(value)
        << '\n';
}

inline void save_observed(const std::string& path, const ObservedMatrix& obs) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  save_observed(out, obs);
}

/// Dense matrix as CSV, one row per line, 17 significant digits.
inline void save_dense(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void save_dense(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  save_dense(out, m);
}

inline Matrix load_dense(std::istream& in,
                         const std::string& name = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    std::vector<double> row;
    for (const std::string& cell : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
        ++used;
      if (used != cell.size() || cell.empty()) {
        std::ostringstream msg;
        msg << name << ":" << lineno << ": malformed value '" << cell << "'";
        throw ParseError(msg.str());
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream msg;
      msg << name << ":" << lineno << ": ragged row (" << row.size()
          << " values, expected " << rows.front().size() << ")";
      throw ParseError(msg.str());
    }
    if (row.empty()) {
      std::ostringstream msg;
      msg << name << ":" << lineno << ": empty row";
      throw ParseError(msg.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name + ": empty matrix file");
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[i][j];
  return m;
}

inline Matrix load_dense(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open for reading");
  return load_dense(in, path);
}

/// Query log as CSV with 1-based coordinates and 1-based sequence numbers.
inline void save_query_log(std::ostream& out,
                           const std::vector<QueryRecord>& log) {
  out << "i,j,value,sequence_number\n";
  for (std::size_t k = 0; k < log.size(); ++k)
    out << log[k].row + 1 << ',' << log[k].col + 1 << ','
        << format_double(log[k].value) << ',' << k + 1 << '\n';
}

inline void save_query_log(const std::string& path,
                           const std::vector<QueryRecord>& log) {
  std::ofstream out(path);
  if (!out) throw ParseError(path + ": cannot open for writing");
  save_query_log(out, log);
}

}  // namespace amc
