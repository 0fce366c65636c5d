#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc {

/// Shortest decimal form that parses back to the same double.
std::string format_real(Real value);

/// Strict parsers; throw ConfigError naming `what` on malformed input.
Real parse_real(std::string_view text, std::string_view what);
std::uint64_t parse_count(std::string_view text, std::string_view what);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_ws(std::string_view s);

/// "CxHxW"
Shape3 parse_shape(std::string_view text, std::string_view what);

} // namespace ebssc
