#include "quadplan/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "quadplan/names.hpp"

namespace quadplan {

using nlohmann::json;

OccupancyGrid::OccupancyGrid(double resolution, int width, int height, Point origin,
                             std::vector<std::uint8_t> occupied)
    : resolution_(resolution), width_(width), height_(height), origin_(origin),
      occupied_(std::move(occupied)) {
    if (!(resolution_ > 0.0) || !std::isfinite(resolution_)) {
        throw WorldError("grid: resolution must be a positive finite number");
    }
    if (width_ <= 0 || height_ <= 0) throw WorldError("grid: width and height must be positive");
    if (occupied_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
        throw WorldError("grid: cell count does not equal width*height");
    }
}

OccupancyGrid OccupancyGrid::from_rle_rows(double resolution, int width, int height, Point origin,
                                           const std::vector<std::string>& rows) {
    if (static_cast<int>(rows.size()) != height) {
        throw WorldError("grid: expected " + std::to_string(height) + " rows, found " +
                         std::to_string(rows.size()));
    }
    std::vector<std::uint8_t> cells;
    cells.reserve(static_cast<std::size_t>(std::max(width, 0)) * rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::string& row = rows[r];
        std::size_t decoded = 0;
        std::size_t i = 0;
        while (i < row.size()) {
            std::size_t count = 0;
            const std::size_t digits_begin = i;
            while (i < row.size() && row[i] >= '0' && row[i] <= '9') {
                count = count * 10 + static_cast<std::size_t>(row[i] - '0');
                ++i;
                if (count > 1'000'000) throw WorldError("grid: row " + std::to_string(r) + " run too long");
            }
            if (i == digits_begin || i == row.size() || count == 0) {
                throw WorldError("grid: row " + std::to_string(r) + " has a malformed run at offset " +
                                 std::to_string(digits_begin));
            }
            const char symbol = row[i++];
            if (symbol != '.' && symbol != '#') {
                throw WorldError("grid: row " + std::to_string(r) + " has unknown cell symbol '" +
                                 std::string(1, symbol) + "'");
            }
            cells.insert(cells.end(), count, symbol == '#' ? 1 : 0);
            decoded += count;
        }
        if (decoded != static_cast<std::size_t>(width)) {
            throw WorldError("grid: row " + std::to_string(r) + " decodes to " + std::to_string(decoded) +
                             " cells, expected " + std::to_string(width));
        }
    }
    return OccupancyGrid(resolution, width, height, origin, std::move(cells));
}

std::optional<Cell> OccupancyGrid::cell_at(Point p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return std::nullopt;
    const double fc = std::floor((p.x - origin_.x) / resolution_);
    const double fr = std::floor((p.y - origin_.y) / resolution_);
    if (fc < 0 || fr < 0 || fc >= width_ || fr >= height_) return std::nullopt;
    return Cell{static_cast<int>(fc), static_cast<int>(fr)};
}

Point OccupancyGrid::center(Cell c) const {
    return Point{origin_.x + (c.col + 0.5) * resolution_, origin_.y + (c.row + 0.5) * resolution_};
}

const Waypoint* WaypointWorld::find_waypoint(std::string_view canonical_name) const {
    auto it = waypoints_.find(std::string(canonical_name));
    return it == waypoints_.end() ? nullptr : &it->second;
}

const Zone* WaypointWorld::find_zone(std::string_view canonical_name) const {
    auto it = zones_.find(std::string(canonical_name));
    return it == zones_.end() ? nullptr : &it->second;
}

std::vector<std::string> WaypointWorld::waypoint_names() const {
    std::vector<std::string> out;
    out.reserve(waypoints_.size());
    for (const auto& [name, _] : waypoints_) out.push_back(name);
    return out;
}

std::vector<std::string> WaypointWorld::zone_names() const {
    std::vector<std::string> out;
    out.reserve(zones_.size());
    for (const auto& [name, _] : zones_) out.push_back(name);
    return out;
}

namespace {

std::string line_info(std::string_view text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

const json& require(const json& obj, const char* key, std::string_view what) {
    auto it = obj.find(key);
    if (it == obj.end()) throw WorldError(std::string(what) + ": missing field '" + key + "'");
    return *it;
}

double require_number(const json& obj, const char* key, std::string_view what) {
    const json& v = require(obj, key, what);
    if (!v.is_number()) throw WorldError(std::string(what) + ": field '" + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw WorldError(std::string(what) + ": field '" + key + "' is not finite");
    return d;
}

std::string require_string(const json& obj, const char* key, std::string_view what) {
    const json& v = require(obj, key, what);
    if (!v.is_string()) throw WorldError(std::string(what) + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

std::string require_canonical(const json& obj, const char* key, std::string_view what) {
    std::string name = require_string(obj, key, what);
    if (name.empty()) throw WorldError(std::string(what) + ": field '" + key + "' is empty");
    if (canonicalize(name) != name) {
        throw WorldError(std::string(what) + ": name '" + name + "' is not canonical (expected '" +
                         canonicalize(name) + "')");
    }
    return name;
}

// Cells reachable from `start` under the planner's move rule.
std::vector<std::uint8_t> flood_fill(const OccupancyGrid& grid, Cell start) {
    std::vector<std::uint8_t> seen(grid.cell_count(), 0);
    std::vector<Cell> stack{start};
    seen[grid.index(start)] = 1;
    while (!stack.empty()) {
        const Cell c = stack.back();
        stack.pop_back();
        for_each_move(grid, c, [&](Cell n, double) {
            auto& s = seen[grid.index(n)];
            if (!s) {
                s = 1;
                stack.push_back(n);
            }
        });
    }
    return seen;
}

}  // namespace

WaypointWorld parse_world(std::string_view text, std::string_view origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw WorldError(std::string(origin) + ": syntax error at " + line_info(text, e.byte > 0 ? e.byte - 1 : 0) +
                         ": " + e.what());
    }
    const std::string where(origin);
    if (!doc.is_object()) throw WorldError(where + ": map document must be a JSON object");

    WaypointWorld world;
    try {
        world.name_ = doc.contains("name") ? require_string(doc, "name", "map") : std::string("unnamed");

        const json& g = require(doc, "grid", "map");
        if (!g.is_object()) throw WorldError("grid: must be an object");
        const double resolution = require_number(g, "resolution", "grid");
        const json& w = require(g, "width", "grid");
        const json& h = require(g, "height", "grid");
        if (!w.is_number_integer() || !h.is_number_integer()) {
            throw WorldError("grid: width and height must be integers");
        }
        Point grid_origin{};
        if (auto o = g.find("origin"); o != g.end()) {
            if (!o->is_array() || o->size() != 2 || !(*o)[0].is_number() || !(*o)[1].is_number()) {
                throw WorldError("grid: origin must be [x, y]");
            }
            grid_origin = Point{(*o)[0].get<double>(), (*o)[1].get<double>()};
        }
        const json& rows = require(g, "rows", "grid");
        if (!rows.is_array()) throw WorldError("grid: rows must be an array of strings");
        std::vector<std::string> row_strings;
        for (const auto& r : rows) {
            if (!r.is_string()) throw WorldError("grid: rows must be an array of strings");
            row_strings.push_back(r.get<std::string>());
        }
        world.grid_ = OccupancyGrid::from_rle_rows(resolution, w.get<int>(), h.get<int>(), grid_origin,
                                                   row_strings);

        const json& wps = require(doc, "waypoints", "map");
        if (!wps.is_array()) throw WorldError("map: waypoints must be an array");
        if (wps.empty()) throw WorldError("map: waypoint set is empty (a world must contain home)");
        for (std::size_t i = 0; i < wps.size(); ++i) {
            const json& item = wps[i];
            const std::string what = "waypoint #" + std::to_string(i);
            if (!item.is_object()) throw WorldError(what + ": must be an object");
            Waypoint wp;
            wp.name = require_canonical(item, "name", what);
            const std::string named = "waypoint '" + wp.name + "'";
            wp.display_name = item.contains("display_name") ? require_string(item, "display_name", named) : wp.name;
            wp.zone = require_canonical(item, "zone", named);
            const json& pose = require(item, "pose", named);
            if (!pose.is_object()) throw WorldError(named + ": pose must be an object");
            wp.pose.x = require_number(pose, "x", named);
            wp.pose.y = require_number(pose, "y", named);
            wp.pose.z = pose.contains("z") ? require_number(pose, "z", named) : 0.0;
            wp.pose.yaw = pose.contains("yaw") ? require_number(pose, "yaw", named) : 0.0;

            auto cell = world.grid_.cell_at(Point{wp.pose.x, wp.pose.y});
            if (!cell) throw WorldError(named + ": pose lies outside the grid");
            if (world.grid_.occupied(*cell)) throw WorldError(named + ": pose lies on an occupied cell");
            if (world.waypoints_.contains(wp.name)) throw WorldError(named + ": duplicate waypoint name");
            world.waypoints_.emplace(wp.name, std::move(wp));
        }

        const json& zones = require(doc, "zones", "map");
        if (!zones.is_array()) throw WorldError("map: zones must be an array");
        for (std::size_t i = 0; i < zones.size(); ++i) {
            const json& item = zones[i];
            const std::string what = "zone #" + std::to_string(i);
            if (!item.is_object()) throw WorldError(what + ": must be an object");
            Zone zone;
            zone.name = require_canonical(item, "name", what);
            const std::string named = "zone '" + zone.name + "'";
            zone.display_name = item.contains("display_name") ? require_string(item, "display_name", named) : zone.name;
            if (world.zones_.contains(zone.name)) throw WorldError(named + ": duplicate zone name");
            if (world.waypoints_.contains(zone.name)) {
                throw WorldError(named + ": name collides with a waypoint name");
            }
            const json& members = require(item, "members", named);
            if (!members.is_array()) throw WorldError(named + ": members must be an array");
            std::set<std::string> seen;
            for (const auto& m : members) {
                if (!m.is_string()) throw WorldError(named + ": members must be strings");
                const std::string member = m.get<std::string>();
                const auto* wp = world.find_waypoint(member);
                if (wp == nullptr) throw WorldError(named + ": member '" + member + "' is not a waypoint");
                if (wp->zone != zone.name) {
                    throw WorldError(named + ": member '" + member + "' declares zone '" + wp->zone + "'");
                }
                if (!seen.insert(member).second) {
                    throw WorldError(named + ": member '" + member + "' listed twice");
                }
            }
            zone.members.assign(seen.begin(), seen.end());
            world.zones_.emplace(zone.name, std::move(zone));
        }
        for (const auto& [name, wp] : world.waypoints_) {
            const Zone* zone = world.find_zone(wp.zone);
            if (zone == nullptr) {
                throw WorldError("waypoint '" + name + "': zone '" + wp.zone + "' is not declared");
            }
            if (!std::binary_search(zone->members.begin(), zone->members.end(), name)) {
                throw WorldError("waypoint '" + name + "': missing from members of zone '" + wp.zone + "'");
            }
        }

        world.home_ = require_canonical(doc, "home", "map");
        const Waypoint* home = world.find_waypoint(world.home_);
        if (home == nullptr) throw WorldError("map: home '" + world.home_ + "' is not a waypoint");

        const Cell home_cell = *world.grid_.cell_at(Point{home->pose.x, home->pose.y});
        const auto reachable = flood_fill(world.grid_, home_cell);
        for (const auto& [name, wp] : world.waypoints_) {
            const Cell c = *world.grid_.cell_at(Point{wp.pose.x, wp.pose.y});
            if (!reachable[world.grid_.index(c)]) {
                throw WorldError("waypoint '" + name + "': not reachable from home '" + world.home_ + "'");
            }
        }
    } catch (const WorldError& e) {
        throw WorldError(where + ": " + e.what());
    }
    world.source_ = std::move(doc);
    return world;
}

WaypointWorld load_world(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WorldError(path.string() + ": cannot open map file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_world(buf.str(), path.string());
}

LookupResult lookup(const WaypointWorld& world, std::string_view name) {
    const std::string canonical = canonicalize(name);
    if (const auto* wp = world.find_waypoint(canonical)) return LookupResult{wp, std::nullopt};
    const auto names = world.waypoint_names();
    return LookupResult{nullptr, nearest_name(canonical, names)};
}

std::vector<VocabularyEntry> vocabulary(const WaypointWorld& world) {
    std::vector<VocabularyEntry> out;
    out.reserve(world.waypoints().size());
    for (const auto& [name, wp] : world.waypoints()) {
        out.push_back(VocabularyEntry{name, wp.display_name, wp.zone});
    }
    return out;
}

}  // namespace quadplan
