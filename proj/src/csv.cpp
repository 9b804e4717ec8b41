#include <cstdio>
#include <fstream>
#include <sstream>

#include "hamopt/error.hpp"
#include "hamopt/io.hpp"

namespace hamopt {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();
  if (!out) throw Error(ErrorKind::IoError, "failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header)
    : path_(path), width_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += header[i];
  }
  buffer_ += '\n';
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) {
    throw Error(ErrorKind::SchemaError, path_.string() + ": row has " + std::to_string(cells.size()) +
                                            " cells, header has " + std::to_string(width_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += cells[i];
  }
  buffer_ += '\n';
}

void CsvWriter::write_row(const std::vector<double>& row) {
  std::vector<std::string> cells;
  cells.reserve(row.size());
  for (double v : row) cells.push_back(format_double(v));
  write_row(cells);
}

void CsvWriter::close() { write_text_file(path_, buffer_); }

void write_metrics(const std::filesystem::path& path, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) {
  CsvWriter writer(path, header);
  for (const auto& row : rows) writer.write_row(row);
  writer.close();
}

}  // namespace hamopt
