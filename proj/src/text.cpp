#include "fam/text.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "fam/errors.hpp"

namespace fam::text {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

namespace {

[[noreturn]] void bad(std::string_view s, std::string_view what, std::string_view kind) {
  throw ConfigError("invalid " + std::string(kind) + " for " + std::string(what) + ": '" +
                    std::string(s) + "'");
}

}  // namespace

double parse_double(std::string_view s, std::string_view what) {
  const std::string buf(trim(s));
  if (buf.empty()) bad(s, what, "number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || errno == ERANGE) bad(s, what, "number");
  return v;
}

std::int64_t parse_int(std::string_view s, std::string_view what) {
  const std::string buf(trim(s));
  if (buf.empty()) bad(s, what, "integer");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(buf.c_str(), &end, 10);
  if (end != buf.c_str() + buf.size() || errno == ERANGE) {
    // Accept integral values written in floating notation, e.g. "3e5".
    const double d = parse_double(buf, what);
    if (!(std::abs(d) < 9.2e18) || d != std::trunc(d)) bad(s, what, "integer");
    return static_cast<std::int64_t>(d);
  }
  return v;
}

std::uint64_t parse_uint(std::string_view s, std::string_view what) {
  const auto t = trim(s);
  std::uint64_t u = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), u);
  if (ec == std::errc() && ptr == t.data() + t.size() && !t.empty()) return u;
  const std::int64_t v = parse_int(s, what);
  if (v < 0) bad(s, what, "non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(std::string_view s, std::string_view what) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad(s, what, "boolean");
}

std::string format_double(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

}  // namespace fam::text
