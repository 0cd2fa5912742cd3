#pragma once

// Reference shortest path for planner tests. Plain Dijkstra with a binary
// heap over an explicit free-cell mask; shares no code with the planner.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

namespace oracle {

struct GridMask {
    int width = 0;
    int height = 0;
    std::vector<bool> free;  // row-major

    bool open(int c, int r) const {
        return c >= 0 && r >= 0 && c < width && r < height && free[static_cast<std::size_t>(r * width + c)];
    }
};

/// Cost in cells: 1 per orthogonal step, sqrt(2) per diagonal step. A
/// diagonal step needs both orthogonal neighbours it passes free.
inline std::optional<double> dijkstra_cost(const GridMask& g, std::pair<int, int> start, std::pair<int, int> goal) {
    if (!g.open(start.first, start.second) || !g.open(goal.first, goal.second)) return std::nullopt;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<std::size_t>(g.width * g.height), inf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    const int s = start.second * g.width + start.first;
    const int t = goal.second * g.width + goal.first;
    dist[static_cast<std::size_t>(s)] = 0.0;
    heap.push({0.0, s});
    while (!heap.empty()) {
        auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == t) return d;
        const int uc = u % g.width;
        const int ur = u / g.width;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int vc = uc + dc;
                const int vr = ur + dr;
                if (!g.open(vc, vr)) continue;
                double w = 1.0;
                if (dr != 0 && dc != 0) {
                    if (!g.open(uc + dc, ur) || !g.open(uc, ur + dr)) continue;
                    w = std::sqrt(2.0);
                }
                const int v = vr * g.width + vc;
                if (d + w < dist[static_cast<std::size_t>(v)]) {
                    dist[static_cast<std::size_t>(v)] = d + w;
                    heap.push({d + w, v});
                }
            }
        }
    }
    return std::nullopt;
}

}  // namespace oracle
