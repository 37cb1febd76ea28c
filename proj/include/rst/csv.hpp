#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "rst/dataset.hpp"

namespace rst {

// Column naming for dataset CSV files. Header row required; columns are
// located by name, any order. Adjusters may be empty (nonparametric model).
struct CsvColumns {
  std::string exposure = "x";
  std::string outcome = "y";
  std::vector<std::string> adjusters;  // empty: autodetect w1..wp
};

struct CsvReadResult {
  Dataset data;
  std::vector<std::size_t> dropped_rows;  // 1-based data-row indices with non-finite values
};

// Reads a dataset; throws ParseError (with line number) on malformed input
// and InvalidArgument if a named column is missing. Rows containing
// non-finite values are dropped and reported in dropped_rows.
CsvReadResult read_dataset_csv(std::istream& in, const CsvColumns& cols = {});
CsvReadResult read_dataset_csv_file(const std::string& path, const CsvColumns& cols = {});

// Writes x,y,w1..wp with 17 significant digits (lossless round trip).
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv_file(const std::string& path, const Dataset& data);

// Shared numeric formatting for all CSV output.
std::string format_double(double v);

}  // namespace rst
