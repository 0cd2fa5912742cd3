#include "quadplan/names.hpp"

#include <algorithm>
#include <vector>

namespace quadplan {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

std::string canonicalize(std::string_view name) {
    std::size_t begin = 0;
    std::size_t end = name.size();
    while (begin < end && is_space(name[begin])) ++begin;
    while (end > begin && is_space(name[end - 1])) --end;

    std::string out;
    out.reserve(end - begin);
    bool in_space = false;
    for (std::size_t i = begin; i < end; ++i) {
        const char c = name[i];
        if (is_space(c)) {
            if (!in_space) out.push_back('_');
            in_space = true;
        } else {
            out.push_back(lower(c));
            in_space = false;
        }
    }
    return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + cost});
            diag = up;
        }
    }
    return row[b.size()];
}

std::optional<std::string> nearest_name(std::string_view query,
                                        std::span<const std::string> candidates) {
    const std::string* best = nullptr;
    std::size_t best_dist = 0;
    for (const auto& c : candidates) {
        const std::size_t d = edit_distance(query, c);
        if (best == nullptr || d < best_dist || (d == best_dist && c < *best)) {
            best = &c;
            best_dist = d;
        }
    }
    if (best == nullptr) return std::nullopt;
    return *best;
}

}  // namespace quadplan
