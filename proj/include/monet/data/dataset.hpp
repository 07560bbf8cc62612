#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "monet/core/errors.hpp"
#include "monet/core/matrix.hpp"
#include "monet/core/rng.hpp"

namespace monet {

/// Examples stored row-wise: features (n x F) and binary labels (n x T).
struct Dataset {
  Matrix x;
  Matrix y;

  Eigen::Index size() const { return x.rows(); }
  int tasks() const { return static_cast<int>(y.cols()); }
  int features() const { return static_cast<int>(x.cols()); }

  Dataset subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out{Matrix(static_cast<Eigen::Index>(rows.size()), x.cols()),
                Matrix(static_cast<Eigen::Index>(rows.size()), y.cols())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
      out.y.row(static_cast<Eigen::Index>(i)) = y.row(rows[i]);
    }
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.x.rows() == b.x.rows() && a.x.cols() == b.x.cols() && a.y.cols() == b.y.cols() && a.x == b.x &&
           a.y == b.y;
  }
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Row-index batches covering [0, n); the last one may be short.
inline std::vector<std::vector<Eigen::Index>> batches(Eigen::Index n, Eigen::Index batch_size, RngStream& rng,
                                                      bool shuffle) {
  if (batch_size < 1) {
    throw ArityError("batches: batch size must be >= 1");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (shuffle) {
    rng.shuffle(order);
  }
  std::vector<std::vector<Eigen::Index>> out;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index end = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + end);
  }
  return out;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace detail

/// Writes `x1,...,xF,y1,...,yT` with shortest round-trip decimal literals.
inline void write_csv(const Dataset& d, std::ostream& os) {
  for (int f = 0; f < d.features(); ++f) {
    os << (f ? "," : "") << 'x' << (f + 1);
  }
  for (int t = 0; t < d.tasks(); ++t) {
    os << ",y" << (t + 1);
  }
  os << '\n';
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (int f = 0; f < d.features(); ++f) {
      os << (f ? "," : "") << detail::format_double(d.x(i, f));
    }
    for (int t = 0; t < d.tasks(); ++t) {
      os << ',' << (d.y(i, t) != 0.0 ? '1' : '0');
    }
    os << '\n';
  }
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) {
    throw Error("write_csv: cannot open " + path);
  }
  write_csv(d, os);
}

/// Parses a CSV whose header names feature columns `x*` and label columns `y*`.
inline Dataset load_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> feature_cols;
  std::vector<int> label_cols;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!detail::trim(line).empty()) {
      break;
    }
  }
  if (line_no == 0 || detail::trim(line).empty()) {
    throw ParseError(line_no == 0 ? 1 : line_no, "missing header row");
  }
  const auto header = detail::split_csv_line(line);
  width = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = detail::trim(header[c]);
    if (name.size() >= 2 && name[0] == 'x') {
      feature_cols.push_back(static_cast<int>(c));
    } else if (name.size() >= 2 && name[0] == 'y') {
      label_cols.push_back(static_cast<int>(c));
    } else {
      throw ParseError(line_no, "missing header: column '" + name + "' is neither x* nor y*");
    }
  }
  if (feature_cols.empty() || label_cols.empty()) {
    throw ParseError(line_no, "missing header: need at least one x* and one y* column");
  }

  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> ys;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (detail::trim(line).empty()) {
      continue;
    }
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != width) {
      throw ParseError(line_no, "ragged row: " + std::to_string(cells.size()) + " fields, header has " +
                                    std::to_string(width));
    }
    std::vector<double> xr;
    std::vector<double> yr;
    for (int c : feature_cols) {
      const std::string cell = detail::trim(cells[static_cast<std::size_t>(c)]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(line_no, "bad feature value '" + cell + "'");
      }
      xr.push_back(v);
    }
    for (int c : label_cols) {
      const std::string cell = detail::trim(cells[static_cast<std::size_t>(c)]);
      if (cell != "0" && cell != "1") {
        throw ParseError(line_no, "non-binary label '" + cell + "'");
      }
      yr.push_back(cell == "1" ? 1.0 : 0.0);
    }
    xs.push_back(std::move(xr));
    ys.push_back(std::move(yr));
  }
  Dataset d{Matrix(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(feature_cols.size())),
            Matrix(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(label_cols.size()))};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = xs[i][f];
    }
    for (std::size_t t = 0; t < label_cols.size(); ++t) {
      d.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = ys[i][t];
    }
  }
  return d;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw Error("load_csv: cannot open " + path);
  }
  return load_csv(is);
}

}  // namespace monet
