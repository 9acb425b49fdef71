#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmd::text {

/// Splits one CSV record. Double-quoted fields may contain commas and
/// doubled quotes (""). Returns nullopt on an unterminated quote.
std::optional<std::vector<std::string>> split_csv(std::string_view line);

/// Quotes a field if it contains a comma, quote or line break.
std::string csv_field(std::string_view value);

std::optional<std::int64_t> parse_int(std::string_view s);
std::optional<double> parse_double(std::string_view s);

/// Shortest representation that round-trips exactly.
std::string format_double(double value);

std::string_view trim(std::string_view s);

/// Strips a trailing '\r' left by CRLF files.
inline std::string_view chomp(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

std::string join(const std::vector<std::string>& parts, std::string_view separator);

}  // namespace lmd::text
