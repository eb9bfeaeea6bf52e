#pragma once

// Handcrafted conversions of solutions between TSP, CVRP, OVRP and CVRPTW.
// They measure how well a solution of one problem carries over to another.

#include <algorithm>
#include <array>
#include <limits>
#include <vector>

#include "vrplab/core.hpp"

namespace vrplab {

/// Ordered run of nodes with two endpoints. A single node is kept as the
/// degenerate segment whose head and tail coincide.
struct PathSegment {
    std::vector<int> nodes;
    int head() const { return nodes.front(); }
    int tail() const { return nodes.back(); }
};

namespace detail {

inline void require_kind(const Instance& inst, std::initializer_list<ProblemKind> kinds, const char* what) {
    for (auto k : kinds)
        if (inst.kind == k) return;
    throw StructureError(std::string(what) + ": unexpected instance kind " + std::string(to_string(inst.kind)));
}

inline std::vector<Route> closed_routes(const Instance& inst, const Solution& sol) {
    return split_routes(with_kind(inst, ProblemKind::CVRP), sol);
}

}  // namespace detail

/// Joins the sub-tours of a CVRP solution into one TSP ring. Sub-tours lose
/// their depot edges; the depot becomes its own segment. Starting from the
/// segment holding the lowest node index, the nearest endpoint pair of the
/// remaining segments is merged until a single path remains, which is closed.
inline Solution cvrp_to_tsp(const Instance& inst, const Solution& sol_cvrp) {
    const auto routes = detail::closed_routes(inst, sol_cvrp);
    std::vector<PathSegment> segments;
    segments.push_back({{0}});
    for (const auto& r : routes) segments.push_back({r});

    std::vector<int> path = segments[0].nodes;
    std::vector<bool> used(segments.size(), false);
    used[0] = true;
    for (std::size_t merged = 1; merged < segments.size(); ++merged) {
        // Connection types: 0 head-head, 1 head-tail, 2 tail-head, 3 tail-tail
        // (path endpoint first, segment endpoint second).
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_seg = 0;
        int best_type = 0;
        for (std::size_t s = 1; s < segments.size(); ++s) {
            if (used[s]) continue;
            const std::array<double, 4> d{
                distance(inst, path.front(), segments[s].head()),
                distance(inst, path.front(), segments[s].tail()),
                distance(inst, path.back(), segments[s].head()),
                distance(inst, path.back(), segments[s].tail()),
            };
            for (int type = 0; type < 4; ++type) {
                if (d[static_cast<std::size_t>(type)] < best) {
                    best = d[static_cast<std::size_t>(type)];
                    best_seg = s;
                    best_type = type;
                }
            }
        }
        used[best_seg] = true;
        std::vector<int> seg = segments[best_seg].nodes;
        switch (best_type) {
            case 0:  // path head meets segment head: prepend reversed segment
                std::reverse(seg.begin(), seg.end());
                path.insert(path.begin(), seg.begin(), seg.end());
                break;
            case 1:  // path head meets segment tail: prepend segment
                path.insert(path.begin(), seg.begin(), seg.end());
                break;
            case 2:  // path tail meets segment head: append segment
                path.insert(path.end(), seg.begin(), seg.end());
                break;
            default:  // path tail meets segment tail: append reversed segment
                std::reverse(seg.begin(), seg.end());
                path.insert(path.end(), seg.begin(), seg.end());
                break;
        }
    }
    std::rotate(path.begin(), std::find(path.begin(), path.end(), 0), path.end());
    return Solution{path};
}

/// Cuts a TSP ring into capacity-feasible sub-tours, walking from the depot's
/// position and returning to the depot whenever the next customer would not fit.
inline Solution tsp_to_cvrp(const Instance& inst, const Solution& sol_tsp) {
    for (int v : sol_tsp.visits) detail::check_index(inst, v);
    auto depot_it = std::find(sol_tsp.visits.begin(), sol_tsp.visits.end(), 0);
    if (depot_it == sol_tsp.visits.end()) throw StructureError("TSP ring does not contain the depot");
    for (std::size_t i = 1; i < inst.size(); ++i)
        if (inst.nodes[i].demand > inst.capacity) throw DomainError("a single demand exceeds the capacity");

    std::vector<int> ring(sol_tsp.visits.begin(), sol_tsp.visits.end());
    std::rotate(ring.begin(), ring.begin() + (depot_it - sol_tsp.visits.begin()), ring.end());
    std::vector<Route> routes(1);
    int load = 0;
    for (std::size_t i = 1; i < ring.size(); ++i) {
        const int c = ring[i];
        const int demand = inst.nodes[static_cast<std::size_t>(c)].demand;
        if (load + demand > inst.capacity) {
            routes.emplace_back();
            load = 0;
        }
        routes.back().push_back(c);
        load += demand;
    }
    return join_routes(ProblemKind::CVRP, routes);
}

/// Opens each closed sub-tour by deleting the longer of its two depot edges;
/// on a tie the return edge is removed.
inline Solution cvrp_to_ovrp(const Instance& inst, const Solution& sol_cvrp) {
    auto routes = detail::closed_routes(inst, sol_cvrp);
    for (auto& r : routes) {
        const double first = distance(inst, 0, r.front());
        const double last = distance(inst, r.back(), 0);
        if (first > last) std::reverse(r.begin(), r.end());
    }
    return join_routes(ProblemKind::OVRP, routes);
}

/// Closes each open sub-tour by returning from its last customer to the depot.
inline Solution ovrp_to_cvrp(const Instance& inst, const Solution& sol_ovrp) {
    const auto routes = split_routes(with_kind(inst, ProblemKind::OVRP), sol_ovrp);
    return join_routes(ProblemKind::CVRP, routes);
}

namespace detail {

/// Splits one customer sequence wherever the window or depot deadline is missed,
/// inserting a depot before the offending customer and re-checking the remainder.
inline std::vector<Route> split_by_windows(const Instance& inst, const Route& route) {
    const Node& depot = inst.nodes[0];
    // Position of the first customer that arrives late or, once served,
    // cannot get back to the depot before it closes.
    auto first_violation = [&](const Route& r) -> std::size_t {
        double t = depot.early;
        int prev = 0;
        for (std::size_t p = 0; p < r.size(); ++p) {
            const Node& n = inst.nodes[static_cast<std::size_t>(r[p])];
            const double arrival = t + distance(inst, prev, r[p]);
            if (is_late(arrival, n.late)) return p;
            t = std::max(arrival, n.early) + n.service;
            if (is_late(t + distance(inst, r[p], 0), depot.late)) return p;
            prev = r[p];
        }
        return r.size();
    };
    std::vector<Route> out;
    Route rest = route;
    while (!rest.empty()) {
        const std::size_t cut = first_violation(rest);
        if (cut == rest.size()) {
            out.push_back(std::move(rest));
            break;
        }
        if (cut == 0) {
            throw InfeasibleError("customer " + std::to_string(rest.front()) +
                                  " cannot be served on its own within the time windows");
        }
        out.emplace_back(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(cut));
        rest.erase(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(cut));
    }
    return out;
}

}  // namespace detail

/// Repairs a capacity-feasible CVRP solution for time windows by splitting
/// sub-tours at the first violation, trying both traversal directions of each
/// sub-tour and keeping the shorter split.
inline Solution cvrp_to_cvrptw(const Instance& inst_tw, const Solution& sol_cvrp) {
    if (inst_tw.kind != ProblemKind::CVRPTW) throw StructureError("cvrp_to_cvrptw needs a CVRPTW instance");
    const auto routes = detail::closed_routes(inst_tw, sol_cvrp);
    std::vector<Route> out;
    for (const auto& r : routes) {
        auto forward = detail::split_by_windows(inst_tw, r);
        Route reversed(r.rbegin(), r.rend());
        auto backward = detail::split_by_windows(inst_tw, reversed);
        auto total = [&](const std::vector<Route>& rs) {
            double c = 0.0;
            for (const auto& x : rs) c += route_cost(inst_tw, x);
            return c;
        };
        auto& chosen = total(backward) < total(forward) ? backward : forward;
        for (auto& x : chosen) out.push_back(std::move(x));
    }
    return join_routes(ProblemKind::CVRPTW, out);
}

/// Drops time windows and greedily merges sub-tours by largest positive
/// savings, subject to capacity and a strictly shorter merged route.
inline Solution cvrptw_to_cvrp(const Instance& inst, const Solution& sol_tw) {
    const Instance cvrp = with_kind(inst, ProblemKind::CVRP);
    auto routes = split_routes(cvrp, sol_tw);
    for (;;) {
        double best = 0.0;
        Route best_route;
        std::size_t best_a = 0, best_b = 0;
        bool found = false;
        for (std::size_t a = 0; a < routes.size(); ++a) {
            for (std::size_t b = a + 1; b < routes.size(); ++b) {
                if (route_demand(cvrp, routes[a]) + route_demand(cvrp, routes[b]) > cvrp.capacity) continue;
                const double separate = route_cost(cvrp, routes[a]) + route_cost(cvrp, routes[b]);
                // Orientations: a then b, each possibly reversed, and b then a
                // (the closed route cost is reversal invariant, so those cover all joins).
                for (int type = 0; type < 4; ++type) {
                    Route ra = routes[a];
                    Route rb = routes[b];
                    if (type & 1) std::reverse(ra.begin(), ra.end());
                    if (type & 2) std::reverse(rb.begin(), rb.end());
                    Route merged = ra;
                    merged.insert(merged.end(), rb.begin(), rb.end());
                    const double saving = separate - route_cost(cvrp, merged);
                    if (saving > best) {
                        best = saving;
                        best_route = std::move(merged);
                        best_a = a;
                        best_b = b;
                        found = true;
                    }
                }
            }
        }
        if (!found) break;
        routes[best_a] = std::move(best_route);
        routes.erase(routes.begin() + static_cast<std::ptrdiff_t>(best_b));
    }
    return join_routes(ProblemKind::CVRP, routes);
}

}  // namespace vrplab
