#include "icfit/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace icfit::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  if (cell == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || cell.empty())
    throw Error(Errc::parse, "line " + std::to_string(line_no) + ": bad numeric cell '" + cell + "'");
  // Only the literal NA marks a missing cell.
  if (!std::isfinite(v))
    throw Error(Errc::non_finite_value,
                "line " + std::to_string(line_no) + ": non-finite cell '" + cell + "'");
  return v;
}

}  // namespace

Table parse(const std::string& text) {
  Table table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      table.comments.push_back(line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1));
      continue;
    }
    auto cells = split(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw Error(Errc::parse, "line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(table.header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, line_no));
    rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(Errc::parse, "missing header row");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string format(const std::vector<std::string>& header, const Matrix& values,
                   const WriteOptions& options) {
  if (static_cast<Index>(header.size()) != values.cols())
    throw Error(Errc::dimension_mismatch, "header width differs from matrix width");
  std::ostringstream out;
  out.precision(options.precision);
  for (const auto& c : options.comments) out << "# " << c << '\n';
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      const double v = values(i, j);
      if (std::isnan(v))
        out << "NA";
      else
        out << v;
    }
    out << '\n';
  }
  return out.str();
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const Matrix& values, const WriteOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << format(header, values, options);
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

std::vector<std::string> numbered_header(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index j = 1; j <= count; ++j) out.push_back(prefix + std::to_string(j));
  return out;
}

IncompleteMatrix read_incomplete(const std::filesystem::path& path) {
  return make_incomplete(read(path).values);
}

void write_incomplete(const std::filesystem::path& path, const IncompleteMatrix& m,
                      const WriteOptions& options) {
  write(path, numbered_header("x", m.cols()), export_with_missing(m), options);
}

void write_trace(const std::filesystem::path& path, const ChainTrace& trace,
                 const WriteOptions& options) {
  std::vector<std::string> header{"iteration"};
  for (Index k = 0; k < trace.dimension(); ++k) header.push_back("c" + std::to_string(k));
  Matrix body(static_cast<Index>(trace.size()), trace.dimension() + 1);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& s = trace.snapshots()[t];
    body(static_cast<Index>(t), 0) = static_cast<double>(s.label);
    body.row(static_cast<Index>(t)).tail(trace.dimension()) = s.payload.transpose();
  }
  write(path, header, body, options);
}

ChainTrace read_trace(const std::filesystem::path& path, std::size_t burn_in) {
  const Table t = read(path);
  if (t.values.cols() < 1) throw Error(Errc::parse, "trace has no iteration column");
  ChainTrace trace(burn_in);
  for (Index i = 0; i < t.values.rows(); ++i) {
    ParameterSnapshot s;
    s.label = static_cast<std::size_t>(t.values(i, 0));
    s.payload = t.values.row(i).tail(t.values.cols() - 1).transpose();
    trace.append(std::move(s));
  }
  return trace;
}

}  // namespace icfit::csv
