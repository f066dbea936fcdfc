#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace v2g::text {

/// Shortest decimal form that parses back to the same double.
std::string format_number(double v);

/// Whole-field parse; throws std::invalid_argument on leftovers or junk.
double parse_double(std::string_view s);
unsigned long long parse_uint(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
std::vector<std::string_view> lines(std::string_view s);

}  // namespace v2g::text
