#include "quadplan/nav_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace quadplan {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

double octile(Cell a, Cell b) {
    const double dx = std::abs(a.col - b.col);
    const double dy = std::abs(a.row - b.row);
    return (dx + dy) + (kSqrt2 - 2.0) * std::min(dx, dy);
}

double round_micro(double v) { return std::round(v * 1e6) / 1e6; }

double distance(Point a, Point b) { return std::hypot(b.x - a.x, b.y - a.y); }

}  // namespace

std::optional<PlannedPath> plan_path(const OccupancyGrid& grid, Cell start, Cell goal,
                                     const std::vector<std::uint8_t>* blocked) {
    auto is_free = [&](Cell c) {
        return grid.free(c) && (blocked == nullptr || (*blocked)[grid.index(c)] == 0);
    };
    if (!is_free(start) || !is_free(goal)) return std::nullopt;

    constexpr double kInf = std::numeric_limits<double>::infinity();
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    const std::size_t n = grid.cell_count();
    std::vector<double> g(n, kInf);
    std::vector<std::size_t> parent(n, kNone);
    std::vector<std::uint8_t> closed(n, 0);

    struct Entry {
        double f;
        double h;
        std::size_t index;
    };
    // Min-heap on (f, h, index).
    auto worse = [](const Entry& a, const Entry& b) {
        if (a.f != b.f) return a.f > b.f;
        if (a.h != b.h) return a.h > b.h;
        return a.index > b.index;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);

    const std::size_t start_i = grid.index(start);
    const std::size_t goal_i = grid.index(goal);
    g[start_i] = 0.0;
    open.push({octile(start, goal), octile(start, goal), start_i});

    while (!open.empty()) {
        const Entry top = open.top();
        open.pop();
        if (closed[top.index]) continue;
        closed[top.index] = 1;
        if (top.index == goal_i) break;
        const Cell c = grid.cell_of_index(top.index);
        const double gc = g[top.index];
        for_each_move_if(is_free, c, [&](Cell next, double cost) {
            const std::size_t ni = grid.index(next);
            if (closed[ni]) return;
            const double candidate = gc + cost;
            if (candidate < g[ni]) {
                g[ni] = candidate;
                parent[ni] = top.index;
                const double h = octile(next, goal);
                open.push({candidate + h, h, ni});
            }
        });
    }
    if (!closed[goal_i]) return std::nullopt;

    PlannedPath path;
    for (std::size_t i = goal_i; i != kNone; i = parent[i]) path.cells.push_back(grid.cell_of_index(i));
    std::reverse(path.cells.begin(), path.cells.end());
    path.length_m = g[goal_i] * grid.resolution();
    return path;
}

std::optional<PlannedPath> plan_path(const WaypointWorld& world, Point start, const Waypoint& goal) {
    const auto& grid = world.grid();
    auto s = grid.cell_at(start);
    auto t = grid.cell_at(Point{goal.pose.x, goal.pose.y});
    if (!s || !t) return std::nullopt;
    auto path = plan_path(grid, *s, *t);
    if (path) path->goal_waypoint = goal.name;
    return path;
}

std::string_view to_string(SimEventKind kind) {
    switch (kind) {
        case SimEventKind::path_planned: return "path_planned";
        case SimEventKind::pose_update: return "pose_update";
        case SimEventKind::waypoint_reached: return "waypoint_reached";
        case SimEventKind::wait_started: return "wait_started";
        case SimEventKind::wait_finished: return "wait_finished";
        case SimEventKind::explore_visited: return "explore_visited";
        case SimEventKind::halted: return "halted";
        case SimEventKind::plan_failed: return "plan_failed";
    }
    return "unknown";
}

ordered_json to_json(const SimEvent& e) {
    ordered_json j;
    j["kind"] = std::string(to_string(e.kind));
    j["sim_time"] = round_micro(e.sim_time);
    j["x"] = round_micro(e.position.x);
    j["y"] = round_micro(e.position.y);
    j["heading"] = round_micro(e.heading);
    switch (e.kind) {
        case SimEventKind::path_planned:
            j["waypoint"] = e.waypoint;
            j["length_m"] = round_micro(e.value);
            break;
        case SimEventKind::waypoint_reached:
            j["waypoint"] = e.waypoint;
            break;
        case SimEventKind::wait_started:
            j["duration_s"] = e.value;
            break;
        case SimEventKind::explore_visited:
            j["zone"] = e.zone;
            j["waypoint"] = e.waypoint;
            break;
        case SimEventKind::plan_failed:
            j["waypoint"] = e.waypoint;
            j["detail"] = e.detail;
            break;
        default:
            break;
    }
    return j;
}

FaultSpec fault_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "block") {
        BlockFault f;
        f.waypoint = j.at("waypoint").get<std::string>();
        f.radius_m = j.value("radius_m", f.radius_m);
        f.at_time_s = j.value("at_time_s", f.at_time_s);
        return f;
    }
    if (kind == "arrival_failure") {
        ArrivalFault f;
        f.probability = j.at("probability").get<double>();
        f.waypoint = j.value("waypoint", std::string{});
        return f;
    }
    throw std::invalid_argument("fault: unknown kind '" + kind + "'");
}

ordered_json to_json(const FaultSpec& fault) {
    ordered_json j;
    if (const auto* b = std::get_if<BlockFault>(&fault)) {
        j["kind"] = "block";
        j["waypoint"] = b->waypoint;
        j["radius_m"] = b->radius_m;
        j["at_time_s"] = b->at_time_s;
    } else {
        const auto& a = std::get<ArrivalFault>(fault);
        j["kind"] = "arrival_failure";
        j["probability"] = a.probability;
        if (!a.waypoint.empty()) j["waypoint"] = a.waypoint;
    }
    return j;
}

// ---------------------------------------------------------------------------

NavSimulator::NavSimulator(std::shared_ptr<const WaypointWorld> world, SimConfig config)
    : world_(std::move(world)), config_(config) {
    if (!world_) throw std::invalid_argument("simulator: null world");
    if (!(config_.cruise_speed > 0.0) || !(config_.tick_s > 0.0)) {
        throw std::invalid_argument("simulator: cruise speed and tick must be positive");
    }
    reset(0);
}

void NavSimulator::reset(std::uint64_t seed) {
    const auto& home = world_->home();
    const auto cell = *world_->grid().cell_at(Point{home.pose.x, home.pose.y});
    state_.position = world_->grid().center(cell);
    state_.heading = home.pose.yaw;
    start_mission(seed);
}

void NavSimulator::start_mission(std::uint64_t seed) {
    state_.speed = config_.cruise_speed;
    state_.sim_time = 0.0;
    blocked_.assign(world_->grid().cell_count(), 0);
    block_active_.assign(faults_.size(), false);
    rng_.seed(seed);
    status_ = ActionStatus::succeeded;
    mode_ = Mode::idle;
}

void NavSimulator::set_position(Point p) {
    auto cell = world_->grid().cell_at(p);
    if (!cell || !world_->grid().free(*cell)) {
        throw std::invalid_argument("simulator: position is not on a free cell");
    }
    state_.position = p;
}

void NavSimulator::inject_fault(FaultSpec fault) {
    if (const auto* b = std::get_if<BlockFault>(&fault)) {
        if (world_->find_waypoint(b->waypoint) == nullptr) {
            throw std::invalid_argument("fault: unknown waypoint '" + b->waypoint + "'");
        }
        if (!(b->radius_m >= 0.0) || !std::isfinite(b->at_time_s)) {
            throw std::invalid_argument("fault: block radius must be >= 0 and time finite");
        }
    } else {
        const auto& a = std::get<ArrivalFault>(fault);
        if (!a.waypoint.empty() && world_->find_waypoint(a.waypoint) == nullptr) {
            throw std::invalid_argument("fault: unknown waypoint '" + a.waypoint + "'");
        }
        if (!(a.probability >= 0.0 && a.probability <= 1.0)) {
            throw std::invalid_argument("fault: probability must lie in [0, 1]");
        }
    }
    faults_.push_back(std::move(fault));
    block_active_.push_back(false);
}

void NavSimulator::clear_faults() {
    faults_.clear();
    block_active_.clear();
    blocked_.assign(world_->grid().cell_count(), 0);
}

bool NavSimulator::cell_blocked(Cell c) const {
    const auto& grid = world_->grid();
    return !grid.free(c) || blocked_[grid.index(c)] != 0;
}

double NavSimulator::next_uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

SimEvent NavSimulator::make_event(SimEventKind kind) const {
    SimEvent e;
    e.kind = kind;
    e.sim_time = state_.sim_time;
    e.position = state_.position;
    e.heading = state_.heading;
    return e;
}

bool NavSimulator::activate_blocks(std::vector<SimEvent>&) {
    const auto& grid = world_->grid();
    const auto robot_cell = grid.cell_at(state_.position);
    bool changed = false;
    for (std::size_t i = 0; i < faults_.size(); ++i) {
        const auto* b = std::get_if<BlockFault>(&faults_[i]);
        if (b == nullptr || block_active_[i] || state_.sim_time + 1e-9 < b->at_time_s) continue;
        block_active_[i] = true;
        const auto& wp = *world_->find_waypoint(b->waypoint);
        const Point centre{wp.pose.x, wp.pose.y};
        const int reach = static_cast<int>(std::ceil(b->radius_m / grid.resolution())) + 1;
        const Cell mid = *grid.cell_at(centre);
        for (int r = mid.row - reach; r <= mid.row + reach; ++r) {
            for (int c = mid.col - reach; c <= mid.col + reach; ++c) {
                const Cell cell{c, r};
                if (!grid.in_bounds(cell)) continue;
                if (robot_cell && cell == *robot_cell) continue;
                if (cell != mid && distance(grid.center(cell), centre) > b->radius_m) continue;
                blocked_[grid.index(cell)] = 1;
            }
        }
        changed = true;
    }
    return changed;
}

void NavSimulator::fail(std::vector<SimEvent>& out, std::string detail) {
    SimEvent e = make_event(SimEventKind::plan_failed);
    e.waypoint = leg_index_ < legs_.size() ? legs_[leg_index_].waypoint : std::string{};
    e.detail = std::move(detail);
    out.push_back(std::move(e));
    status_ = ActionStatus::failed;
    mode_ = Mode::idle;
}

// Plans the current leg from the robot's cell; emits path_planned.
bool NavSimulator::replan(std::vector<SimEvent>& out, const char* reason) {
    const auto& grid = world_->grid();
    const Leg& leg = legs_[leg_index_];
    const auto& wp = *world_->find_waypoint(leg.waypoint);
    const auto start = grid.cell_at(state_.position);
    const auto goal = grid.cell_at(Point{wp.pose.x, wp.pose.y});
    std::optional<PlannedPath> path;
    if (start && goal) path = plan_path(grid, *start, *goal, &blocked_);
    if (!path) {
        fail(out, std::string(reason) + ": no path to '" + leg.waypoint + "'");
        return false;
    }
    path->goal_waypoint = leg.waypoint;

    polyline_.clear();
    path_cells_.clear();
    polyline_.push_back(state_.position);
    path_cells_.push_back(*start);
    const Point first_center = grid.center(path->cells.front());
    if (!(first_center == state_.position)) {
        polyline_.push_back(first_center);
        path_cells_.push_back(path->cells.front());
    }
    for (std::size_t i = 1; i < path->cells.size(); ++i) {
        polyline_.push_back(grid.center(path->cells[i]));
        path_cells_.push_back(path->cells[i]);
    }
    path_pos_ = 1;

    SimEvent e = make_event(SimEventKind::path_planned);
    e.waypoint = leg.waypoint;
    e.value = path->length_m;
    out.push_back(std::move(e));
    return true;
}

bool NavSimulator::start_leg(std::vector<SimEvent>& out) {
    replanned_ = false;
    mode_ = Mode::moving;
    return replan(out, "planning failed");
}

void NavSimulator::finish_leg(std::vector<SimEvent>& out) {
    const Leg& leg = legs_[leg_index_];
    for (const auto& fault : faults_) {
        const auto* a = std::get_if<ArrivalFault>(&fault);
        if (a == nullptr || (!a->waypoint.empty() && a->waypoint != leg.waypoint)) continue;
        if (next_uniform() < a->probability) {
            fail(out, "arrival at '" + leg.waypoint + "' not confirmed");
            return;
        }
    }
    if (leg.explore) {
        SimEvent e = make_event(SimEventKind::explore_visited);
        e.zone = leg.zone;
        e.waypoint = leg.waypoint;
        out.push_back(std::move(e));
    } else {
        SimEvent e = make_event(SimEventKind::waypoint_reached);
        e.waypoint = leg.waypoint;
        out.push_back(std::move(e));
    }
    ++leg_index_;
    if (leg_index_ >= legs_.size()) {
        status_ = ActionStatus::succeeded;
        mode_ = Mode::idle;
        return;
    }
    start_leg(out);
}

bool NavSimulator::path_ahead_blocked() const {
    for (std::size_t i = path_pos_; i < path_cells_.size(); ++i) {
        if (cell_blocked(path_cells_[i])) return true;
    }
    return false;
}

void NavSimulator::begin(const ActionCommand& action, std::vector<SimEvent>& out) {
    status_ = ActionStatus::running;
    mode_ = Mode::idle;
    legs_.clear();
    leg_index_ = 0;
    ticks_ = 0;
    action_start_time_ = state_.sim_time;
    activate_blocks(out);

    if (const auto* g = std::get_if<GotoAction>(&action)) {
        if (world_->find_waypoint(g->waypoint) == nullptr) {
            legs_.push_back(Leg{g->waypoint, false, {}});
            fail(out, "unknown waypoint '" + g->waypoint + "'");
            return;
        }
        legs_.push_back(Leg{g->waypoint, false, {}});
    } else if (const auto* e = std::get_if<ExploreAction>(&action)) {
        const Zone* zone = world_->find_zone(e->zone);
        if (zone == nullptr) {
            fail(out, "unknown zone '" + e->zone + "'");
            return;
        }
        for (const auto& m : zone->members) legs_.push_back(Leg{m, true, zone->name});
        if (legs_.empty()) {
            status_ = ActionStatus::succeeded;
            return;
        }
    } else if (const auto* w = std::get_if<WaitAction>(&action)) {
        wait_duration_ = w->duration_s;
        SimEvent started = make_event(SimEventKind::wait_started);
        started.value = w->duration_s;
        out.push_back(std::move(started));
        if (wait_duration_ <= 0.0) {
            out.push_back(make_event(SimEventKind::wait_finished));
            status_ = ActionStatus::succeeded;
            return;
        }
        mode_ = Mode::waiting;
        return;
    } else {
        out.push_back(make_event(SimEventKind::halted));
        status_ = ActionStatus::halted;
        return;
    }

    if (!start_leg(out)) return;
    // Zero-length legs finish without consuming a tick.
    while (status_ == ActionStatus::running && path_pos_ >= polyline_.size()) finish_leg(out);
}

ActionStatus NavSimulator::advance_motion(std::vector<SimEvent>& out) {
    ++ticks_;
    const double t = action_start_time_ + static_cast<double>(ticks_) * config_.tick_s;
    double budget = config_.cruise_speed * config_.tick_s;
    Point pos = state_.position;
    while (budget > 0.0 && path_pos_ < polyline_.size()) {
        const Point target = polyline_[path_pos_];
        const double d = distance(pos, target);
        if (d > 0.0) state_.heading = std::atan2(target.y - pos.y, target.x - pos.x);
        if (d <= budget) {
            pos = target;
            budget -= d;
            ++path_pos_;
        } else {
            pos.x += (target.x - pos.x) / d * budget;
            pos.y += (target.y - pos.y) / d * budget;
            budget = 0.0;
        }
    }
    state_.position = pos;
    state_.sim_time = t;
    out.push_back(make_event(SimEventKind::pose_update));
    while (status_ == ActionStatus::running && mode_ == Mode::moving && path_pos_ >= polyline_.size()) {
        finish_leg(out);
    }
    return status_;
}

ActionStatus NavSimulator::step(std::vector<SimEvent>& out) {
    if (status_ != ActionStatus::running) return status_;

    if (mode_ == Mode::waiting) {
        ++ticks_;
        const double elapsed = static_cast<double>(ticks_) * config_.tick_s;
        if (elapsed + 1e-9 >= wait_duration_) {
            state_.sim_time = action_start_time_ + wait_duration_;
            out.push_back(make_event(SimEventKind::wait_finished));
            status_ = ActionStatus::succeeded;
            mode_ = Mode::idle;
        } else {
            state_.sim_time = action_start_time_ + elapsed;
        }
        return status_;
    }

    // Moving. Blocks that switch on now may sever the remaining path.
    if (activate_blocks(out) && path_ahead_blocked()) {
        if (replanned_) {
            fail(out, "path blocked again after replanning");
            return status_;
        }
        replanned_ = true;
        if (!replan(out, "replanning failed")) return status_;
        if (path_pos_ >= polyline_.size()) {
            finish_leg(out);
            return status_;
        }
    }
    return advance_motion(out);
}

ActionStatus NavSimulator::execute_action(const ActionCommand& action, std::vector<SimEvent>& out) {
    begin(action, out);
    while (status_ == ActionStatus::running) step(out);
    return status_;
}

}  // namespace quadplan
