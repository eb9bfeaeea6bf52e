#pragma once

// Problem definitions shared by every vrplab module: instances, solutions,
// costs, feasibility checks and time-window arithmetic.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vrplab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StructureError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct InfeasibleError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

enum class ProblemKind { TSP, CVRP, OVRP, CVRPTW };

inline std::string_view to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::TSP: return "TSP";
        case ProblemKind::CVRP: return "CVRP";
        case ProblemKind::OVRP: return "OVRP";
        case ProblemKind::CVRPTW: return "CVRPTW";
    }
    return "?";
}

inline ProblemKind parse_kind(std::string_view text) {
    if (text == "TSP") return ProblemKind::TSP;
    if (text == "CVRP") return ProblemKind::CVRP;
    if (text == "OVRP") return ProblemKind::OVRP;
    if (text == "CVRPTW") return ProblemKind::CVRPTW;
    throw FormatError("unknown problem kind '" + std::string(text) + "'");
}

inline bool has_depot(ProblemKind kind) { return kind != ProblemKind::TSP; }

struct Node {
    int index = 0;
    double x = 0.0;
    double y = 0.0;
    int demand = 0;
    double early = 0.0;
    double late = 0.0;
    double service = 0.0;

    bool operator==(const Node&) const = default;
};

struct Instance {
    ProblemKind kind = ProblemKind::CVRP;
    std::vector<Node> nodes;  // depot first for depot-based kinds
    int capacity = 1;
    double alpha = 1.0;

    std::size_t size() const { return nodes.size(); }
    int customer_count() const {
        return has_depot(kind) ? static_cast<int>(nodes.size()) - 1 : static_cast<int>(nodes.size());
    }
    int total_demand() const {
        int sum = 0;
        for (const auto& n : nodes) sum += n.demand;
        return sum;
    }

    bool operator==(const Instance&) const = default;
};

/// Same nodes viewed under another problem kind (TSP drops depot semantics,
/// CVRP/OVRP ignore windows).
/// Nearest double to v printed with 9 significant digits; instance files store
/// this precision, so quantized values survive a write/read cycle unchanged.
inline double round_sig9(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
    double out = 0.0;
    std::from_chars(buf, res.ptr, out);
    return out;
}

inline void quantize(Instance& inst) {
    inst.alpha = round_sig9(inst.alpha);
    for (auto& n : inst.nodes) {
        n.x = round_sig9(n.x);
        n.y = round_sig9(n.y);
        n.early = round_sig9(n.early);
        n.late = round_sig9(n.late);
        n.service = round_sig9(n.service);
    }
}

inline Instance with_kind(Instance inst, ProblemKind kind) {
    inst.kind = kind;
    return inst;
}

struct Solution {
    std::vector<int> visits;
    bool operator==(const Solution&) const = default;
};

/// Customer sequence of one vehicle; the depot is implicit at the start and,
/// except for OVRP, at the end.
using Route = std::vector<int>;

inline double distance(const Node& a, const Node& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double distance(const Instance& inst, int a, int b) {
    return distance(inst.nodes[static_cast<std::size_t>(a)], inst.nodes[static_cast<std::size_t>(b)]);
}

// Comparisons against window bounds tolerate accumulated rounding of this size.
inline constexpr double kTimeEps = 1e-9;

inline bool is_late(double t, double bound) { return t > bound + kTimeEps; }

namespace detail {

inline void check_index(const Instance& inst, int v) {
    if (v < 0 || static_cast<std::size_t>(v) >= inst.size())
        throw StructureError("node index " + std::to_string(v) + " out of range");
}

}  // namespace detail

/// Splits a depot-delimited solution into its sub-tours. Throws StructureError
/// when the delimiter rules of the instance kind are violated. For TSP the
/// whole visit list is returned as one route.
inline std::vector<Route> split_routes(const Instance& inst, const Solution& sol) {
    const auto& v = sol.visits;
    for (int idx : v) detail::check_index(inst, idx);
    std::vector<Route> routes;
    if (inst.kind == ProblemKind::TSP) {
        if (v.empty()) throw StructureError("empty TSP tour");
        routes.push_back(v);
        return routes;
    }
    if (v.size() < 2 || v.front() != 0) throw StructureError("solution must start at the depot");
    const bool open = inst.kind == ProblemKind::OVRP;
    if (open && v.back() == 0) throw StructureError("open sub-tours must end at a customer");
    if (!open && v.back() != 0) throw StructureError("closed sub-tours must end at the depot");
    Route current;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] == 0) {
            if (current.empty()) throw StructureError("empty sub-tour (consecutive depot visits)");
            routes.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(v[i]);
        }
    }
    if (!current.empty()) routes.push_back(std::move(current));
    return routes;
}

/// Inverse of split_routes for depot-based kinds; TSP expects one route.
inline Solution join_routes(ProblemKind kind, const std::vector<Route>& routes) {
    Solution sol;
    if (kind == ProblemKind::TSP) {
        for (const auto& r : routes) sol.visits.insert(sol.visits.end(), r.begin(), r.end());
        return sol;
    }
    for (const auto& r : routes) {
        if (r.empty()) continue;
        sol.visits.push_back(0);
        sol.visits.insert(sol.visits.end(), r.begin(), r.end());
    }
    if (kind != ProblemKind::OVRP) sol.visits.push_back(0);
    return sol;
}

/// Length of one sub-tour starting at the depot; closed unless the kind is OVRP.
inline double route_cost(const Instance& inst, const Route& route) {
    if (route.empty()) return 0.0;
    double cost = distance(inst, 0, route.front());
    for (std::size_t i = 1; i < route.size(); ++i) cost += distance(inst, route[i - 1], route[i]);
    if (inst.kind != ProblemKind::OVRP) cost += distance(inst, route.back(), 0);
    return cost;
}

inline int route_demand(const Instance& inst, const Route& route) {
    int sum = 0;
    for (int c : route) sum += inst.nodes[static_cast<std::size_t>(c)].demand;
    return sum;
}

inline double solution_cost(const Instance& inst, const Solution& sol) {
    const auto routes = split_routes(inst, sol);
    if (inst.kind == ProblemKind::TSP) {
        const auto& t = routes.front();
        double cost = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) cost += distance(inst, t[i], t[(i + 1) % t.size()]);
        return cost;
    }
    double cost = 0.0;
    for (const auto& r : routes) cost += route_cost(inst, r);
    return cost;
}

struct ScheduleViolation {
    int node = 0;  // 0 for a missed depot deadline
    std::string reason;
};

struct Schedule {
    std::vector<double> arrival;
    std::vector<double> service_start;
    std::vector<double> departure;
    std::vector<double> route_return;  // depot arrival time per sub-tour
    bool feasible = true;
    std::optional<ScheduleViolation> violation;
};

/// Result of simulating a single route forward from the depot.
struct RouteTiming {
    bool feasible = true;
    std::size_t failed_at = 0;   // position in the route of the first late node
    bool depot_late = false;     // all customers on time but the return misses l_0
    double return_time = 0.0;
};

/// Simulates b_j = max(e_j, b_i + s_i + t_ij) along a route leaving the depot at e_0.
inline RouteTiming time_route(const Instance& inst, const Route& route) {
    RouteTiming out;
    const Node& depot = inst.nodes[0];
    double t = depot.early;
    int prev = 0;
    for (std::size_t p = 0; p < route.size(); ++p) {
        const Node& n = inst.nodes[static_cast<std::size_t>(route[p])];
        const double arrival = t + distance(inst, prev, route[p]);
        if (is_late(arrival, n.late)) {
            out.feasible = false;
            out.failed_at = p;
            return out;
        }
        t = std::max(arrival, n.early) + n.service;
        prev = route[p];
    }
    out.return_time = t + distance(inst, prev, 0);
    if (is_late(out.return_time, depot.late)) {
        out.feasible = false;
        out.depot_late = true;
        out.failed_at = route.size();
    }
    return out;
}

inline bool route_time_feasible(const Instance& inst, const Route& route) {
    return time_route(inst, route).feasible;
}

inline Schedule schedule(const Instance& inst, const Solution& sol) {
    if (inst.kind != ProblemKind::CVRPTW) throw DomainError("schedule requires a CVRPTW instance");
    const auto routes = split_routes(inst, sol);
    Schedule s;
    const std::size_t n = inst.size();
    s.arrival.assign(n, 0.0);
    s.service_start.assign(n, 0.0);
    s.departure.assign(n, 0.0);
    const Node& depot = inst.nodes[0];
    s.service_start[0] = depot.early;
    s.departure[0] = depot.early;
    for (const auto& route : routes) {
        double t = depot.early;
        int prev = 0;
        for (int c : route) {
            const Node& node = inst.nodes[static_cast<std::size_t>(c)];
            const double arrival = t + distance(inst, prev, c);
            s.arrival[static_cast<std::size_t>(c)] = arrival;
            s.service_start[static_cast<std::size_t>(c)] = std::max(node.early, arrival);
            s.departure[static_cast<std::size_t>(c)] = s.service_start[static_cast<std::size_t>(c)] + node.service;
            if (s.feasible && is_late(arrival, node.late)) {
                s.feasible = false;
                s.violation = ScheduleViolation{c, "arrival after window close"};
            }
            t = s.departure[static_cast<std::size_t>(c)];
            prev = c;
        }
        const double back = t + distance(inst, prev, 0);
        s.route_return.push_back(back);
        if (s.feasible && is_late(back, depot.late)) {
            s.feasible = false;
            s.violation = ScheduleViolation{0, "depot return after deadline"};
        }
    }
    return s;
}

enum class ViolationKind { Structure, Permutation, Capacity, TimeWindow };

struct Violation {
    ViolationKind kind;
    int node = -1;
    std::string message;
};

struct FeasibilityReport {
    bool feasible = true;
    std::vector<Violation> violations;
};

inline FeasibilityReport validate(const Instance& inst, const Solution& sol) {
    FeasibilityReport report;
    auto add = [&](ViolationKind k, int node, std::string msg) {
        report.feasible = false;
        report.violations.push_back({k, node, std::move(msg)});
    };
    std::vector<Route> routes;
    try {
        routes = split_routes(inst, sol);
    } catch (const StructureError& e) {
        add(ViolationKind::Structure, -1, e.what());
        return report;
    }

    std::vector<int> seen(inst.size(), 0);
    for (const auto& r : routes)
        for (int c : r) ++seen[static_cast<std::size_t>(c)];
    const std::size_t first = has_depot(inst.kind) ? 1 : 0;
    for (std::size_t i = first; i < inst.size(); ++i) {
        if (seen[i] != 1)
            add(ViolationKind::Permutation, static_cast<int>(i),
                "node visited " + std::to_string(seen[i]) + " times");
    }
    if (inst.kind == ProblemKind::TSP) return report;

    for (const auto& r : routes) {
        int load = 0;
        for (int c : r) {
            load += inst.nodes[static_cast<std::size_t>(c)].demand;
            if (load > inst.capacity) {
                add(ViolationKind::Capacity, c, "load " + std::to_string(load) + " exceeds capacity");
                break;
            }
        }
    }
    if (inst.kind == ProblemKind::CVRPTW) {
        const auto s = schedule(inst, sol);
        if (!s.feasible) add(ViolationKind::TimeWindow, s.violation->node, s.violation->reason);
    }
    return report;
}

/// Rescales customer windows by the tightness coefficient: the window keeps its
/// midpoint and its width is multiplied by alpha (start clipped at zero);
/// service time becomes max(s/alpha, s). The depot is left unchanged.
inline Instance apply_tightness(const Instance& inst, double alpha) {
    if (!(alpha > 0.0)) throw DomainError("tightness coefficient must be positive");
    if (inst.kind != ProblemKind::CVRPTW) throw DomainError("tightness applies to CVRPTW instances");
    if (inst.alpha != 1.0) throw DomainError("apply_tightness expects base (alpha = 1) windows");
    Instance out = inst;
    out.alpha = alpha;
    for (std::size_t i = 1; i < out.nodes.size(); ++i) {
        Node& n = out.nodes[i];
        const double delta = (n.late - n.early) / 2.0 * (1.0 - alpha);
        n.early = std::max(n.early + delta, 0.0);
        n.late = n.late - delta;
        n.service = std::max(n.service / alpha, n.service);
    }
    return out;
}

}  // namespace vrplab
