#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xpm::csv {

/// Minimal RFC 4180 reader: comma separator, optional double-quoted fields
/// with "" escapes, LF or CRLF line endings. The whole file is buffered.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  const std::vector<std::string>& header() const noexcept { return header_; }
  /// Reads the next record into `fields`; false at end of input. Blank lines
  /// are skipped.
  bool next(std::vector<std::string>& fields);
  /// 1-based line number of the record last returned by next().
  std::size_t line() const noexcept { return record_line_; }

 private:
  bool parse_record(std::vector<std::string>& fields);

  std::string buffer_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
  std::vector<std::string> header_;
};

/// Parses a finite decimal number (surrounding spaces allowed). Empty or
/// unparseable input yields nullopt.
std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

/// Quotes a field when it contains a separator, quote or newline.
std::string escape_field(std::string_view field);

std::string_view trim(std::string_view text) noexcept;

}  // namespace xpm::csv
