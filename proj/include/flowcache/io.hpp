#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcache {

// Filesystem and stream failures: unwritable paths, failed writes, unreadable
// inputs. Mapped to its own process exit code by the CLI.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal form of a double ("%.17g" trimmed by the
// library). Deterministic across runs for the same bits.
std::string fmt_double(double v);

// RFC-4180 quoting: cells containing commas, quotes, or newlines are wrapped
// in double quotes with embedded quotes doubled. Rows end with '\n'.
std::string csv_quote(const std::string& cell);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void write_row(const std::vector<std::string>& cells);
  void flush();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

// One JSON value per line, UTF-8, '\n' separated. Caller provides serialized
// records; the writer only enforces the one-line framing.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path);
  void write_record(const std::string& json);
  void flush();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// Creates the directory (and parents) if missing; verifies it is writable.
void ensure_output_dir(const std::filesystem::path& dir);

// UTC wall-clock timestamp, ISO-8601 with seconds ("2025-01-31T17:03:12Z").
std::string utc_timestamp();

}  // namespace flowcache
