#pragma once

#include <charconv>
#include <cstdio>
#include <string>

#include "langsteer/evaluation.hpp"

namespace langsteer::fmt {

// Shortest text that reads back as the same double.
inline std::string shortest(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

// Rounds a plain decimal string to two places, ties away from zero.
inline std::string round2_text(const std::string& decimal) {
    std::string s = decimal;
    bool negative = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        negative = s[0] == '-';
        s.erase(0, 1);
    }
    if (s.find_first_of("eE") != std::string::npos) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12f", std::stod(s));
        s = buf;
    }
    auto dot = s.find('.');
    std::string whole = dot == std::string::npos ? s : s.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : s.substr(dot + 1);
    if (whole.empty()) whole = "0";
    while (frac.size() < 3) frac += '0';
    std::string digits = whole + frac.substr(0, 2);
    if (frac[2] >= '5') {
        int i = static_cast<int>(digits.size()) - 1;
        while (i >= 0) {
            if (digits[static_cast<std::size_t>(i)] == '9') {
                digits[static_cast<std::size_t>(i)] = '0';
                --i;
            } else {
                ++digits[static_cast<std::size_t>(i)];
                break;
            }
        }
        if (i < 0) digits.insert(digits.begin(), '1');
    }
    std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
    if (negative && out.find_first_not_of("0.") != std::string::npos) out.insert(out.begin(), '-');
    return out;
}

inline std::string round2(double x) { return round2_text(shortest(x)); }

// Exact percentage of a fraction, two decimals, half-up.
inline std::string percent(const Fraction& f) {
    if (f.total == 0) return "0.00";
    const unsigned long long hundredths = (static_cast<unsigned long long>(f.correct) * 20000ULL + f.total) /
                                          (2ULL * static_cast<unsigned long long>(f.total));
    char buf[48];
    std::snprintf(buf, sizeof buf, "%llu.%02llu", hundredths / 100, hundredths % 100);
    return buf;
}

}  // namespace langsteer::fmt
