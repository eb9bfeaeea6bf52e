#pragma once

// Classical solvers used as the label oracle and gap reference: nearest
// neighbour, Clarke-Wright savings and a 2-opt / Or-opt polish.
//
// TSP instances are handled as a single closed route anchored at node 0 with
// unbounded capacity, so the same route machinery serves every kind.

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>
#include <vector>

#include "vrplab/core.hpp"

namespace vrplab {

inline double gap(double cost_method, double cost_ref) {
    if (!(cost_ref > 0.0)) throw DomainError("gap reference cost must be positive");
    return 100.0 * (cost_method - cost_ref) / cost_ref;
}

/// Routes of a solution; a TSP ring becomes one route starting after node 0.
inline std::vector<Route> solution_routes(const Instance& inst, const Solution& sol) {
    if (inst.kind != ProblemKind::TSP) return split_routes(inst, sol);
    auto ring = sol.visits;
    auto it = std::find(ring.begin(), ring.end(), 0);
    if (it == ring.end()) throw StructureError("TSP tour does not contain node 0");
    std::rotate(ring.begin(), it, ring.end());
    return {Route(ring.begin() + 1, ring.end())};
}

inline Solution routes_solution(const Instance& inst, const std::vector<Route>& routes) {
    if (inst.kind != ProblemKind::TSP) return join_routes(inst.kind, routes);
    Solution sol{{0}};
    for (const auto& r : routes) sol.visits.insert(sol.visits.end(), r.begin(), r.end());
    return sol;
}

inline bool route_feasible(const Instance& inst, const Route& route) {
    if (inst.kind == ProblemKind::TSP) return true;
    if (route_demand(inst, route) > inst.capacity) return false;
    if (inst.kind == ProblemKind::CVRPTW) return route_time_feasible(inst, route);
    return true;
}

inline double routes_cost(const Instance& inst, const std::vector<Route>& routes) {
    double c = 0.0;
    for (const auto& r : routes) c += route_cost(inst, r);
    return c;
}

/// Greedy construction: extend the current route with the nearest unvisited
/// customer that still fits (capacity, and for CVRPTW the window plus a timely
/// return); otherwise go back to the depot and start a new route.
inline Solution nearest_neighbor(const Instance& inst) {
    const int n = static_cast<int>(inst.size());
    std::vector<bool> visited(inst.size(), false);
    visited[0] = true;
    std::vector<Route> routes(1);
    int remaining = n - 1;
    int current = 0;
    int load = 0;
    double time = inst.nodes[0].early;
    const bool capacitated = inst.kind != ProblemKind::TSP;
    const bool timed = inst.kind == ProblemKind::CVRPTW;
    while (remaining > 0) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 1; c < n; ++c) {
            if (visited[static_cast<std::size_t>(c)]) continue;
            const Node& node = inst.nodes[static_cast<std::size_t>(c)];
            if (capacitated && load + node.demand > inst.capacity) continue;
            const double d = distance(inst, current, c);
            if (timed) {
                const double arrival = time + d;
                if (is_late(arrival, node.late)) continue;
                const double leave = std::max(arrival, node.early) + node.service;
                if (is_late(leave + distance(inst, c, 0), inst.nodes[0].late)) continue;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best < 0) {
            if (current == 0) throw InfeasibleError("some customer cannot be served by any route");
            routes.emplace_back();
            current = 0;
            load = 0;
            time = inst.nodes[0].early;
            continue;
        }
        const Node& node = inst.nodes[static_cast<std::size_t>(best)];
        if (timed) time = std::max(time + best_d, node.early) + node.service;
        load += node.demand;
        current = best;
        visited[static_cast<std::size_t>(best)] = true;
        routes.back().push_back(best);
        --remaining;
    }
    return routes_solution(inst, routes);
}

/// Savings construction from singleton routes. Closed kinds merge on
/// s_ij = d(0,i) + d(0,j) - d(i,j) at route ends; OVRP uses the open-route
/// saving d(0,j) - d(i,j) for appending the route starting at j after the
/// route ending at i.
inline Solution clarke_wright(const Instance& inst) {
    const int n = static_cast<int>(inst.size());
    const bool open = inst.kind == ProblemKind::OVRP;
    std::vector<Route> routes;
    std::vector<int> owner(inst.size(), -1);
    for (int c = 1; c < n; ++c) {
        if (!route_feasible(inst, Route{c})) throw InfeasibleError("customer cannot be served on its own");
        owner[static_cast<std::size_t>(c)] = static_cast<int>(routes.size());
        routes.push_back({c});
    }

    struct Saving {
        double value;
        int i, j;
    };
    std::vector<Saving> savings;
    for (int i = 1; i < n; ++i) {
        for (int j = open ? 1 : i + 1; j < n; ++j) {
            if (i == j) continue;
            const double s = open ? distance(inst, 0, j) - distance(inst, i, j)
                                  : distance(inst, 0, i) + distance(inst, 0, j) - distance(inst, i, j);
            if (s > 0.0) savings.push_back({s, i, j});
        }
    }
    std::stable_sort(savings.begin(), savings.end(), [](const Saving& a, const Saving& b) {
        return std::tie(b.value, a.i, a.j) < std::tie(a.value, b.i, b.j);
    });

    for (const auto& s : savings) {
        const int ra = owner[static_cast<std::size_t>(s.i)];
        const int rb = owner[static_cast<std::size_t>(s.j)];
        if (ra == rb) continue;
        Route a = routes[static_cast<std::size_t>(ra)];
        Route b = routes[static_cast<std::size_t>(rb)];
        if (open) {
            if (a.back() != s.i || b.front() != s.j) continue;
        } else {
            if (a.back() != s.i && a.front() != s.i) continue;
            if (b.front() != s.j && b.back() != s.j) continue;
            if (a.back() != s.i) std::reverse(a.begin(), a.end());
            if (b.front() != s.j) std::reverse(b.begin(), b.end());
        }
        Route merged = a;
        merged.insert(merged.end(), b.begin(), b.end());
        if (!route_feasible(inst, merged)) {
            if (open || inst.kind != ProblemKind::CVRPTW) continue;
            std::reverse(merged.begin(), merged.end());
            if (!route_feasible(inst, merged)) continue;
        }
        for (int c : merged) owner[static_cast<std::size_t>(c)] = ra;
        routes[static_cast<std::size_t>(ra)] = std::move(merged);
        routes[static_cast<std::size_t>(rb)].clear();
    }
    std::vector<Route> out;
    for (auto& r : routes)
        if (!r.empty()) out.push_back(std::move(r));
    return routes_solution(inst, out);
}

namespace detail {

inline constexpr double kImproveEps = 1e-10;

/// One first-improvement sweep of intra-route 2-opt. Returns true on a change.
inline bool two_opt_sweep(const Instance& inst, std::vector<Route>& routes) {
    const bool timed = inst.kind == ProblemKind::CVRPTW;
    for (auto& r : routes) {
        const double base = route_cost(inst, r);
        for (std::size_t i = 0; i + 1 < r.size(); ++i) {
            for (std::size_t j = i + 1; j < r.size(); ++j) {
                Route cand = r;
                std::reverse(cand.begin() + static_cast<std::ptrdiff_t>(i),
                             cand.begin() + static_cast<std::ptrdiff_t>(j) + 1);
                if (route_cost(inst, cand) < base - kImproveEps && (!timed || route_time_feasible(inst, cand))) {
                    r = std::move(cand);
                    return true;
                }
            }
        }
    }
    return false;
}

/// One first-improvement sweep of Or-opt: relocate a run of 1..3 consecutive
/// customers to any other position of any route.
inline bool or_opt_sweep(const Instance& inst, std::vector<Route>& routes) {
    for (std::size_t ra = 0; ra < routes.size(); ++ra) {
        for (std::size_t len = 1; len <= 3; ++len) {
            for (std::size_t start = 0; start + len <= routes[ra].size(); ++start) {
                const Route& src = routes[ra];
                Route seg(src.begin() + static_cast<std::ptrdiff_t>(start),
                          src.begin() + static_cast<std::ptrdiff_t>(start + len));
                Route rest = src;
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(start),
                           rest.begin() + static_cast<std::ptrdiff_t>(start + len));
                const double src_cost = route_cost(inst, src);
                const double rest_cost = route_cost(inst, rest);
                for (std::size_t rb = 0; rb < routes.size(); ++rb) {
                    const Route& dst = rb == ra ? rest : routes[rb];
                    const double before = rb == ra ? src_cost : src_cost + route_cost(inst, routes[rb]);
                    for (std::size_t pos = 0; pos <= dst.size(); ++pos) {
                        if (rb == ra && pos == start) continue;
                        Route cand = dst;
                        cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(pos), seg.begin(), seg.end());
                        const double after = rb == ra ? route_cost(inst, cand) : rest_cost + route_cost(inst, cand);
                        if (after >= before - kImproveEps) continue;
                        if (!route_feasible(inst, cand)) continue;
                        if (rb != ra && inst.kind == ProblemKind::CVRPTW && !route_time_feasible(inst, rest)) continue;
                        if (rb == ra) {
                            routes[ra] = std::move(cand);
                        } else {
                            routes[rb] = std::move(cand);
                            routes[ra] = std::move(rest);
                            if (routes[ra].empty()) routes.erase(routes.begin() + static_cast<std::ptrdiff_t>(ra));
                        }
                        return true;
                    }
                }
            }
        }
    }
    return false;
}

}  // namespace detail

/// Local search polish. Each pass runs 2-opt to exhaustion and then Or-opt to
/// exhaustion; only strictly improving feasible moves are taken, in a fixed
/// scan order. Stops at a local optimum or after max_passes passes.
inline Solution two_opt_or_opt(const Instance& inst, const Solution& sol, int max_passes = 50) {
    auto routes = solution_routes(inst, sol);
    for (int pass = 0; pass < max_passes; ++pass) {
        bool improved = false;
        while (detail::two_opt_sweep(inst, routes)) improved = true;
        while (detail::or_opt_sweep(inst, routes)) improved = true;
        if (!improved) break;
    }
    return routes_solution(inst, routes);
}

/// Label oracle: the better of nearest neighbour and Clarke-Wright, each
/// polished by two_opt_or_opt. Ties keep the savings solution.
inline Solution oracle(const Instance& inst) {
    const Solution cw = two_opt_or_opt(inst, clarke_wright(inst));
    const Solution nn = two_opt_or_opt(inst, nearest_neighbor(inst));
    return solution_cost(inst, nn) < solution_cost(inst, cw) ? nn : cw;
}

}  // namespace vrplab
