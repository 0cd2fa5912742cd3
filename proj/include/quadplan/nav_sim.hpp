#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "quadplan/plan.hpp"
#include "quadplan/world.hpp"

namespace quadplan {

struct SimConfig {
    double cruise_speed = 0.8;  // m/s, constant
    double tick_s = 0.1;
};

struct RobotState {
    Point position;
    double heading = 0.0;  // radians, map frame
    double speed = 0.0;    // configured cruise speed
    double sim_time = 0.0; // seconds since mission start
};

struct PlannedPath {
    std::vector<Cell> cells;  // start cell first, goal cell last
    double length_m = 0.0;
    std::string goal_waypoint;
};

/// A* over the 8-connected grid (no corner cutting), octile heuristic.
/// Ties on f are broken by smaller h, then smaller row-major index.
/// `blocked`, when given, marks extra occupied cells (same indexing as grid).
std::optional<PlannedPath> plan_path(const OccupancyGrid& grid, Cell start, Cell goal,
                                     const std::vector<std::uint8_t>* blocked = nullptr);

/// Convenience over a world: start is a map-frame point, goal a waypoint.
std::optional<PlannedPath> plan_path(const WaypointWorld& world, Point start, const Waypoint& goal);

enum class SimEventKind {
    path_planned,
    pose_update,
    waypoint_reached,
    wait_started,
    wait_finished,
    explore_visited,
    halted,
    plan_failed,
};

std::string_view to_string(SimEventKind kind);

struct SimEvent {
    SimEventKind kind = SimEventKind::pose_update;
    double sim_time = 0.0;
    Point position;
    double heading = 0.0;
    std::string waypoint;  // path_planned, waypoint_reached, explore_visited, plan_failed
    std::string zone;      // explore_visited
    double value = 0.0;    // path length (path_planned) or duration (wait_started)
    std::string detail;    // plan_failed
};

/// Wire form used by logs and the live event stream. Times and coordinates
/// are rounded to micro-units so streams are stable and readable.
nlohmann::ordered_json to_json(const SimEvent& event);

/// Cells within `radius_m` of a waypoint become occupied once the mission
/// clock reaches `at_time_s`. The robot's own cell is never blocked.
struct BlockFault {
    std::string waypoint;
    double radius_m = 0.5;
    double at_time_s = 0.0;
};

/// Each goto arrival (optionally only at `waypoint`) fails with
/// `probability`, drawn from the mission RNG.
struct ArrivalFault {
    double probability = 0.0;
    std::string waypoint;  // empty: any waypoint
};

using FaultSpec = std::variant<BlockFault, ArrivalFault>;

FaultSpec fault_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const FaultSpec& fault);

enum class ActionStatus { running, succeeded, failed, halted };

/// Deterministic stand-in for the robot's navigation stack. Not thread-safe;
/// one mission drives one simulator at a time (see try_acquire).
class NavSimulator {
public:
    explicit NavSimulator(std::shared_ptr<const WaypointWorld> world, SimConfig config = {});

    const WaypointWorld& world() const { return *world_; }
    const SimConfig& config() const { return config_; }
    const RobotState& state() const { return state_; }

    /// Robot back to the home waypoint, then start_mission(seed).
    void reset(std::uint64_t seed);
    /// Mission clock to zero, dynamic blocks cleared, RNG reseeded. Position kept.
    void start_mission(std::uint64_t seed);
    /// Teleport (tests, ad-hoc starts). Throws std::invalid_argument off the free grid.
    void set_position(Point p);

    /// Throws std::invalid_argument for an unknown waypoint or a probability
    /// outside [0, 1].
    void inject_fault(FaultSpec fault);
    void clear_faults();
    const std::vector<FaultSpec>& faults() const { return faults_; }

    /// Stepping interface: begin an action, then call step() once per tick
    /// until it returns something other than running. begin() may already
    /// finish the action (halt, zero-length moves); check status().
    void begin(const ActionCommand& action, std::vector<SimEvent>& out);
    ActionStatus step(std::vector<SimEvent>& out);
    ActionStatus status() const { return status_; }

    /// begin + step to completion.
    ActionStatus execute_action(const ActionCommand& action, std::vector<SimEvent>& out);

    /// Single-mission guard.
    bool try_acquire() { return !busy_.exchange(true); }
    void release() { busy_.store(false); }
    bool busy() const { return busy_.load(); }

    /// Static grid plus currently active blocks.
    bool cell_blocked(Cell c) const;

private:
    struct Leg {
        std::string waypoint;
        bool explore = false;
        std::string zone;
    };

    bool start_leg(std::vector<SimEvent>& out);
    void finish_leg(std::vector<SimEvent>& out);
    ActionStatus advance_motion(std::vector<SimEvent>& out);
    bool activate_blocks(std::vector<SimEvent>& out);
    bool path_ahead_blocked() const;
    bool replan(std::vector<SimEvent>& out, const char* reason);
    void fail(std::vector<SimEvent>& out, std::string detail);
    double next_uniform();
    SimEvent make_event(SimEventKind kind) const;

    std::shared_ptr<const WaypointWorld> world_;
    SimConfig config_;
    RobotState state_;
    std::vector<FaultSpec> faults_;
    std::vector<std::uint8_t> blocked_;
    std::vector<bool> block_active_;
    std::mt19937_64 rng_;

    // Current action.
    ActionStatus status_ = ActionStatus::succeeded;
    enum class Mode { idle, moving, waiting } mode_ = Mode::idle;
    std::vector<Leg> legs_;
    std::size_t leg_index_ = 0;
    std::vector<Point> polyline_;  // remaining motion, polyline_[0] is the current position
    std::vector<Cell> path_cells_;
    std::size_t path_pos_ = 0;     // index in path_cells_ of the next cell to enter
    bool replanned_ = false;
    long ticks_ = 0;
    double action_start_time_ = 0.0;
    double wait_duration_ = 0.0;

    std::atomic<bool> busy_{false};
};

}  // namespace quadplan
