#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fam::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Strict parsers: the whole (trimmed) string must be consumed. Throw ConfigError.
double parse_double(std::string_view s, std::string_view what);
std::int64_t parse_int(std::string_view s, std::string_view what);
std::uint64_t parse_uint(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);

/// Shortest "%.17g" form; parses back to the identical double.
std::string format_double(double v);

/// Parses "key = value" lines; '#' starts a comment. Throws ConfigError on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

}  // namespace fam::text
