#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "pstr/common.hpp"
#include "pstr/utf8.hpp"

namespace pstr {

// Levenshtein distance over Unicode scalars, two-row DP.
inline int edit_distance(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == 0) return static_cast<int>(m);
    if (m == 0) return static_cast<int>(n);
    std::vector<int> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

inline int edit_distance(const std::string& a, const std::string& b) {
    return edit_distance(utf8_decode(a), utf8_decode(b));
}

inline double sim_t(const std::vector<char32_t>& a, const std::vector<char32_t>& b) {
    if (a.empty() || b.empty()) throw ArgumentError("sim_t: inputs must be non-empty");
    const double d = edit_distance(a, b);
    return 1.0 - d / static_cast<double>(std::max(a.size(), b.size()));
}

inline double sim_t(const std::string& a, const std::string& b) {
    return sim_t(utf8_decode(a), utf8_decode(b));
}

inline bool is_substring(const std::vector<char32_t>& needle, const std::vector<char32_t>& hay) {
    if (needle.empty()) return true;
    if (needle.size() > hay.size()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

inline bool is_subsequence(const std::vector<char32_t>& needle, const std::vector<char32_t>& hay) {
    std::size_t i = 0;
    for (std::size_t j = 0; j < hay.size() && i < needle.size(); ++j)
        if (hay[j] == needle[i]) ++i;
    return i == needle.size();
}

inline bool is_substring(const std::string& needle, const std::string& hay) {
    return is_substring(utf8_decode(needle), utf8_decode(hay));
}

inline bool is_subsequence(const std::string& needle, const std::string& hay) {
    return is_subsequence(utf8_decode(needle), utf8_decode(hay));
}

} // namespace pstr
