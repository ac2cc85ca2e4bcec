#pragma once

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lgrad {

// Lossless double <-> text. Hex-float round-trips bit-exactly and is
// locale independent.
inline std::string to_hexfloat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

inline double parse_double(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end == tmp.c_str() || *end != '\0') {
        throw std::runtime_error("malformed number: '" + tmp + "'");
    }
    return v;
}

// Shortest round-trip decimal, locale independent. Used for CSV output.
inline std::string to_decimal(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace lgrad
