#include "flowcache/io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

namespace flowcache {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Round-trip check lets us prefer the shorter %.15g form when it is exact.
  char shorter[40];
  std::snprintf(shorter, sizeof(shorter), "%.15g", v);
  double back = 0.0;
  std::sscanf(shorter, "%lf", &back);
  return (back == v) ? shorter : buf;
}

std::string csv_quote(const std::string& cell) {
  const bool needs = cell.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs) return cell;
  std::string out;
  out.reserve(cell.size() + 2);
  out.push_back('"');
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  write_row(header);
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_)
    throw std::logic_error("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(columns_));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_quote(cells[i]);
  }
  out_ << '\n';
  if (!out_) throw IoError("write failed on '" + path_.string() + "'");
}

void CsvWriter::flush() {
  out_.flush();
  if (!out_) throw IoError("flush failed on '" + path_.string() + "'");
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
}

void JsonlWriter::write_record(const std::string& json) {
  if (json.find('\n') != std::string::npos)
    throw std::logic_error("jsonl record contains a newline");
  out_ << json << '\n';
  if (!out_) throw IoError("write failed on '" + path_.string() + "'");
}

void JsonlWriter::flush() {
  out_.flush();
  if (!out_) throw IoError("flush failed on '" + path_.string() + "'");
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return ss.str();
}

void ensure_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  if (!std::filesystem::is_directory(dir, ec) || ec)
    throw IoError("output path '" + dir.string() + "' is not a directory");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace flowcache
