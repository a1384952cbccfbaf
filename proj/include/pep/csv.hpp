#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pep/types.hpp"

namespace pep {

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// Doubles are serialized with 17 significant digits so files round-trip
/// bit-exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

inline double parse_number(const std::string& s, std::size_t line_no, const std::string& col) {
  if (s.empty())
    throw DomainError("csv line " + std::to_string(line_no) + ": empty value in column " + col);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw DomainError("csv line " + std::to_string(line_no) + ": '" + s +
                      "' is not numeric in column " + col);
  return v;
}

}  // namespace detail

/// Numeric table: header row plus rows of '.'-decimal numbers. Lines
/// starting with '#' are metadata comments and are skipped.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // rows x header.size()
};

inline CsvTable read_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
      line.erase(0, 3);  // UTF-8 BOM
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split_csv_line(line);
    if (!have_header) {
      header = std::move(fields);
      if (header.empty() || header[0].empty())
        throw DomainError("csv: missing header row");
      have_header = true;
      continue;
    }
    if (fields.size() != header.size())
      throw DomainError("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j)
      row[j] = detail::parse_number(fields[j], line_no, header[j]);
    rows.push_back(std::move(row));
  }
  if (!have_header) throw DomainError("csv: empty input");
  CsvTable t;
  t.header = std::move(header);
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "'");
  return read_csv(in);
}

/// Assemble a Dataset from a table: the response column is selected by name,
/// covariates are the given columns (or every other column when empty).
/// Optionally center and scale the covariates by sample mean and sd.
inline Dataset dataset_from_table(const CsvTable& t, const std::string& response,
                                  const std::vector<std::string>& covariates = {},
                                  bool standardize = false) {
  Index ycol = -1;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (t.header[j] == response) ycol = static_cast<Index>(j);
  if (ycol < 0) throw DomainError("response column '" + response + "' not found");

  std::vector<Index> xcols;
  if (covariates.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j)
      if (static_cast<Index>(j) != ycol) xcols.push_back(static_cast<Index>(j));
  } else {
    for (const auto& name : covariates) {
      Index col = -1;
      for (std::size_t j = 0; j < t.header.size(); ++j)
        if (t.header[j] == name) col = static_cast<Index>(j);
      if (col < 0) throw DomainError("covariate column '" + name + "' not found");
      if (col == ycol) throw DomainError("covariate '" + name + "' is the response");
      xcols.push_back(col);
    }
  }

  Dataset d;
  d.y = t.values.col(ycol);
  d.X.resize(t.values.rows(), static_cast<Index>(xcols.size()));
  for (std::size_t k = 0; k < xcols.size(); ++k) {
    d.X.col(static_cast<Index>(k)) = t.values.col(xcols[k]);
    d.names.push_back(t.header[static_cast<std::size_t>(xcols[k])]);
  }
  if (standardize && d.n() > 1) {
    for (Index j = 0; j < d.p(); ++j) {
      const double mean = d.X.col(j).mean();
      const double sd =
          std::sqrt((d.X.col(j).array() - mean).square().sum() / static_cast<double>(d.n() - 1));
      if (sd > 0.0) d.X.col(j) = (d.X.col(j).array() - mean) / sd;
      else d.X.col(j).array() -= mean;
    }
  }
  d.validate();
  return d;
}

inline Dataset read_dataset(const std::string& path, const std::string& response,
                            const std::vector<std::string>& covariates = {},
                            bool standardize = false) {
  return dataset_from_table(read_csv_file(path), response, covariates, standardize);
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// CSV writer with '#'-prefixed metadata lines before the header.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw DomainError("cannot write '" + path + "'");
  }

  void meta(const std::string& key, const std::string& value) {
    out_ << "# " << key << ": " << value << "\n";
  }

  void header(const std::vector<std::string>& names) { write_row(names); }

  void row(const std::vector<std::string>& fields) { write_row(fields); }

 private:
  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j) out_ << ",";
      out_ << fields[j];
    }
    out_ << "\n";
  }

  std::ofstream out_;
};

inline void write_dataset(const std::string& path, const Dataset& d,
                          const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  CsvWriter w(path);
  for (const auto& [k, v] : meta) w.meta(k, v);
  std::vector<std::string> header{"y"};
  for (const auto& nm : d.names) header.push_back(nm);
  w.header(header);
  for (Index i = 0; i < d.n(); ++i) {
    std::vector<std::string> row{format_double(d.y[i])};
    for (Index j = 0; j < d.p(); ++j) row.push_back(format_double(d.X(i, j)));
    w.row(row);
  }
}

}  // namespace pep
