// format.hpp — Locale-independent numeric formatting for CSV and reports

#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>

namespace ifmps::detail {

// 17 significant digits round-trip an IEEE double exactly; std::to_chars is
// locale-independent so CSV output is byte-identical across environments.
inline std::string format_double(double x) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), x,
                             std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string format_int(std::int64_t n) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof(buf), n);
    return std::string(buf, res.ptr);
}

} // namespace ifmps::detail
