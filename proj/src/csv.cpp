#include "xpm/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "xpm/error.hpp"

namespace xpm::csv {

Reader::Reader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  buffer_ = std::move(ss).str();
  if (buffer_.starts_with("\xEF\xBB\xBF")) pos_ = 3;
  if (!next(header_)) throw DataError("data file '" + path.string() + "' has no header row");
  for (auto& h : header_) h = std::string(trim(h));
}

bool Reader::next(std::vector<std::string>& fields) {
  while (pos_ < buffer_.size()) {
    record_line_ = line_;
    if (!parse_record(fields)) continue;
    return true;
  }
  return false;
}

bool Reader::parse_record(std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any_content = false;
  while (pos_ < buffer_.size()) {
    const char ch = buffer_[pos_++];
    if (in_quotes) {
      if (ch == '"') {
        if (pos_ < buffer_.size() && buffer_[pos_] == '"') {
          field.push_back('"');
          ++pos_;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      in_quotes = true;
      any_content = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any_content = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && pos_ < buffer_.size() && buffer_[pos_] == '\n') ++pos_;
      ++line_;
      break;
    } else {
      field.push_back(ch);
      any_content = true;
    }
  }
  if (!any_content) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string_view trim(std::string_view text) noexcept {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  return text;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("failed to format floating-point value");
  return std::string(buf, ptr);
}

std::string escape_field(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char ch : field) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace xpm::csv
