#pragma once

// Exhaustive edit distance by plain recursion. Exponential; keep inputs short.

#include <algorithm>
#include <string>

namespace oracle {

inline int brute_edit_distance(const std::string& a, const std::string& b) {
    if (a.empty()) return static_cast<int>(b.size());
    if (b.empty()) return static_cast<int>(a.size());
    const std::string ra = a.substr(1);
    const std::string rb = b.substr(1);
    const int substitute = brute_edit_distance(ra, rb) + (a[0] == b[0] ? 0 : 1);
    const int remove = brute_edit_distance(ra, b) + 1;
    const int insert = brute_edit_distance(a, rb) + 1;
    return std::min({substitute, remove, insert});
}

}  // namespace oracle
