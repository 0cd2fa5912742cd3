#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace quadplan {

/// Raised by load_world/parse_world. The message names the offending entity.
class WorldError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

/// Map-frame pose. z and yaw are carried for completeness; the planner is 2-D.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double yaw = 0.0;
};

struct Waypoint {
    std::string name;
    std::string display_name;
    Pose pose;
    std::string zone;
};

struct Zone {
    std::string name;
    std::string display_name;
    std::vector<std::string> members;  // sorted
};

struct Cell {
    int col = 0;
    int row = 0;
    auto operator<=>(const Cell&) const = default;
};

class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(double resolution, int width, int height, Point origin,
                  std::vector<std::uint8_t> occupied);

    /// Rows are run-length encoded as "<count><symbol>" with '.' free, '#'
    /// occupied; rows[0] is the row touching origin.y.
    static OccupancyGrid from_rle_rows(double resolution, int width, int height, Point origin,
                                       const std::vector<std::string>& rows);

    double resolution() const { return resolution_; }
    int width() const { return width_; }
    int height() const { return height_; }
    Point origin() const { return origin_; }
    std::size_t cell_count() const { return occupied_.size(); }

    bool in_bounds(Cell c) const {
        return c.col >= 0 && c.row >= 0 && c.col < width_ && c.row < height_;
    }
    bool occupied(Cell c) const { return occupied_[index(c)] != 0; }
    bool free(Cell c) const { return in_bounds(c) && !occupied(c); }
    void set_occupied(Cell c, bool value) { occupied_[index(c)] = value ? 1 : 0; }

    std::size_t index(Cell c) const {
        return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(c.col);
    }
    Cell cell_of_index(std::size_t i) const {
        return Cell{static_cast<int>(i % static_cast<std::size_t>(width_)),
                    static_cast<int>(i / static_cast<std::size_t>(width_))};
    }

    /// Cell containing a map-frame point, if inside the grid.
    std::optional<Cell> cell_at(Point p) const;
    Point center(Cell c) const;

private:
    double resolution_ = 1.0;
    int width_ = 0;
    int height_ = 0;
    Point origin_{};
    std::vector<std::uint8_t> occupied_;
};

/// 8-connected moves without corner cutting: a diagonal step is allowed only
/// when both orthogonal cells it sweeps past are free. Cost is in cells
/// (1 orthogonal, sqrt(2) diagonal). `is_free(Cell)` must reject out-of-bounds cells.
template <typename FreeFn, typename Fn>
void for_each_move_if(FreeFn&& is_free, Cell from, Fn&& fn) {
    static constexpr int kDc[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDr[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    static constexpr double kDiag = 1.4142135623730951;
    for (int k = 0; k < 8; ++k) {
        const Cell to{from.col + kDc[k], from.row + kDr[k]};
        if (!is_free(to)) continue;
        if (k >= 4) {
            if (!is_free(Cell{from.col + kDc[k], from.row}) || !is_free(Cell{from.col, from.row + kDr[k]}))
                continue;
            fn(to, kDiag);
        } else {
            fn(to, 1.0);
        }
    }
}

template <typename Fn>
void for_each_move(const OccupancyGrid& grid, Cell from, Fn&& fn) {
    for_each_move_if([&grid](Cell c) { return grid.free(c); }, from, std::forward<Fn>(fn));
}

class WaypointWorld {
public:
    const std::string& name() const { return name_; }
    const std::map<std::string, Waypoint>& waypoints() const { return waypoints_; }
    const std::map<std::string, Zone>& zones() const { return zones_; }
    const OccupancyGrid& grid() const { return grid_; }
    const Waypoint& home() const { return waypoints_.at(home_); }

    /// Exact match on an already-canonical name.
    const Waypoint* find_waypoint(std::string_view canonical_name) const;
    const Zone* find_zone(std::string_view canonical_name) const;

    std::vector<std::string> waypoint_names() const;  // sorted
    std::vector<std::string> zone_names() const;      // sorted

    /// The document the world was loaded from, as parsed.
    const nlohmann::json& source_document() const { return source_; }

private:
    friend WaypointWorld parse_world(std::string_view, std::string_view);

    std::string name_;
    std::string home_;
    std::map<std::string, Waypoint> waypoints_;
    std::map<std::string, Zone> zones_;
    OccupancyGrid grid_;
    nlohmann::json source_;
};

WaypointWorld load_world(const std::filesystem::path& path);

/// `origin` labels error messages (usually the file name).
WaypointWorld parse_world(std::string_view text, std::string_view origin = "<memory>");

struct LookupResult {
    const Waypoint* waypoint = nullptr;
    std::optional<std::string> suggestion;  // set only when not found

    explicit operator bool() const { return waypoint != nullptr; }
};

LookupResult lookup(const WaypointWorld& world, std::string_view name);

struct VocabularyEntry {
    std::string name;
    std::string display_name;
    std::string zone;
    bool operator==(const VocabularyEntry&) const = default;
};

/// Sorted by name; a pure function of the map content.
std::vector<VocabularyEntry> vocabulary(const WaypointWorld& world);

}  // namespace quadplan
