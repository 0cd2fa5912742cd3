#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace quadplan {

/// Canonical waypoint/zone spelling: trimmed, ASCII-lowercased, every run of
/// whitespace collapsed to a single underscore. Idempotent.
std::string canonicalize(std::string_view name);

/// Levenshtein distance (unit insert/delete/substitute) over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Nearest candidate by edit_distance; ties go to the lexicographically
/// smaller name. Empty candidates yield nullopt.
std::optional<std::string> nearest_name(std::string_view query,
                                        std::span<const std::string> candidates);

}  // namespace quadplan
