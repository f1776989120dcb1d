#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "ieqn/errors.hpp"

namespace ieqn {

/// Shortest round-trip text for a double (17 significant digits).
/// Everything the project serializes goes through this, so files parse
/// back to bit-identical values.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline double parse_double(const std::string& text) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0') {
        throw ConfigError("not a number: '" + text + "'");
    }
    return v;
}

}  // namespace ieqn
