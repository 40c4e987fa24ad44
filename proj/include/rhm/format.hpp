#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rhm {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

/// Strict double parser; throws ConfigError on malformed input.
double parse_double(std::string_view s);

/// Strict integer parser; throws ConfigError on malformed input.
long long parse_int(std::string_view s);

/// Strict unsigned 64-bit parser (for seeds); throws ConfigError on malformed input.
std::uint64_t parse_uint64(std::string_view s);

/// Split on commas; no quoting or escapes. "a,,b" gives three cells.
std::vector<std::string> split_csv_line(std::string_view line);

/// Strip leading and trailing ASCII whitespace.
std::string_view trim(std::string_view s);

}  // namespace rhm
