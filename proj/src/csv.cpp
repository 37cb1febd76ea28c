#include "rst/csv.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rst/errors.hpp"

namespace rst {

void Dataset::validate() const {
  if (x.size() == 0) throw InvalidArgument("dataset: empty");
  if (y.size() != x.size() || (w.size() > 0 && w.rows() != x.size())) {
    throw InvalidArgument("dataset: x, w, y must share the same number of rows");
  }
  if (!x.allFinite() || !y.allFinite() || !w.allFinite()) {
    throw InvalidArgument("dataset: non-finite entries");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    std::size_t b = f.find_first_not_of(" \t");
    std::size_t e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

double parse_field(const std::string& field, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(field, &pos);
    if (pos != field.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": trailing characters in '" +
                           field + "'",
                       line_no);
    }
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + field + "'",
                     line_no);
  }
}

}  // namespace

CsvReadResult read_dataset_csv(std::istream& in, const CsvColumns& cols) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file, header row required", 1);
  const std::vector<std::string> header = split_csv_line(line);

  auto find_col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };

  const int xi = find_col(cols.exposure);
  const int yi = find_col(cols.outcome);
  if (xi < 0) throw InvalidArgument("missing column '" + cols.exposure + "'");
  if (yi < 0) throw InvalidArgument("missing column '" + cols.outcome + "'");

  std::vector<int> wi;
  if (!cols.adjusters.empty()) {
    for (const auto& name : cols.adjusters) {
      int idx = find_col(name);
      if (idx < 0) throw InvalidArgument("missing column '" + name + "'");
      wi.push_back(idx);
    }
  } else {
    for (int k = 1;; ++k) {
      int idx = find_col("w" + std::to_string(k));
      if (idx < 0) break;
      wi.push_back(idx);
    }
  }

  std::vector<double> xs, ys;
  std::vector<std::vector<double>> ws(wi.size());
  std::vector<std::size_t> dropped;
  std::size_t line_no = 1;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ++data_row;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const double xv = parse_field(fields[xi], line_no);
    const double yv = parse_field(fields[yi], line_no);
    std::vector<double> wv(wi.size());
    bool finite = std::isfinite(xv) && std::isfinite(yv);
    for (std::size_t k = 0; k < wi.size(); ++k) {
      wv[k] = parse_field(fields[wi[k]], line_no);
      finite = finite && std::isfinite(wv[k]);
    }
    if (!finite) {
      dropped.push_back(data_row);
      continue;
    }
    xs.push_back(xv);
    ys.push_back(yv);
    for (std::size_t k = 0; k < wi.size(); ++k) ws[k].push_back(wv[k]);
  }
  if (xs.empty()) throw InsufficientData("no complete data rows");

  CsvReadResult out;
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  out.data.x = Eigen::Map<Eigen::VectorXd>(xs.data(), n);
  out.data.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  out.data.w.resize(n, static_cast<Eigen::Index>(wi.size()));
  for (std::size_t k = 0; k < wi.size(); ++k) {
    out.data.w.col(static_cast<Eigen::Index>(k)) = Eigen::Map<Eigen::VectorXd>(ws[k].data(), n);
  }
  out.dropped_rows = std::move(dropped);
  return out;
}

CsvReadResult read_dataset_csv_file(const std::string& path, const CsvColumns& cols) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open file '" + path + "'");
  return read_dataset_csv(in, cols);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "x,y";
  for (Eigen::Index k = 0; k < data.p(); ++k) out << ",w" << (k + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << format_double(data.x[i]) << "," << format_double(data.y[i]);
    for (Eigen::Index k = 0; k < data.p(); ++k) out << "," << format_double(data.w(i, k));
    out << "\n";
  }
}

void write_dataset_csv_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open file '" + path + "' for writing");
  write_dataset_csv(out, data);
  out.flush();
  if (!out) throw InvalidArgument("write failed for '" + path + "'");
}

}  // namespace rst
