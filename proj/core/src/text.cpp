#include "ebssc/text.hpp"

#include <charconv>
#include <cmath>

#include "ebssc/error.hpp"

namespace ebssc {

std::string format_real(Real value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, value);
    return {buf, r.ptr};
}

Real parse_real(std::string_view text, std::string_view what) {
    text = trim(text);
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    Real v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size()) {
        throw ConfigError(std::string(what) + ": expected a number, got '" + std::string(text) + "'");
    }
    return v;
}

std::uint64_t parse_count(std::string_view text, std::string_view what) {
    text = trim(text);
    std::uint64_t v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || r.ec != std::errc() || r.ptr != text.data() + text.size()) {
        throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" + std::string(text) + "'");
    }
    return v;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

Shape3 parse_shape(std::string_view text, std::string_view what) {
    text = trim(text);
    std::uint64_t dims[3]{};
    for (int d = 0; d < 3; ++d) {
        const auto x = text.find('x');
        if ((d < 2) == (x == std::string_view::npos)) {
            throw ConfigError(std::string(what) + ": expected CxHxW, got '" + std::string(text) + "'");
        }
        dims[d] = parse_count(text.substr(0, x), what);
        text = d < 2 ? text.substr(x + 1) : std::string_view{};
    }
    return {dims[0], dims[1], dims[2]};
}

} // namespace ebssc
