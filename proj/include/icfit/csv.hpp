#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "icfit/core.hpp"

namespace icfit::csv {

// Numeric table with a header row. Cells equal to "NA" load as NaN. Lines
// starting with '#' are comments and are collected separately.
struct Table {
  std::vector<std::string> header;
  Matrix values;
  std::vector<std::string> comments;
};

Table read(const std::filesystem::path& path);
Table parse(const std::string& text);

struct WriteOptions {
  std::vector<std::string> comments;  // written as "# <line>" before the header
  int precision = 17;
};

// NaN cells are written as "NA".
void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const Matrix& values, const WriteOptions& options = {});
std::string format(const std::vector<std::string>& header, const Matrix& values,
                   const WriteOptions& options = {});

std::vector<std::string> numbered_header(const std::string& prefix, Index count);

IncompleteMatrix read_incomplete(const std::filesystem::path& path);
void write_incomplete(const std::filesystem::path& path, const IncompleteMatrix& m,
                      const WriteOptions& options = {});

// One row per snapshot: "iteration" followed by one column per coordinate.
void write_trace(const std::filesystem::path& path, const ChainTrace& trace,
                 const WriteOptions& options = {});
ChainTrace read_trace(const std::filesystem::path& path, std::size_t burn_in);

}  // namespace icfit::csv
