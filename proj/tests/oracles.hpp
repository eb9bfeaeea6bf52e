#pragma once

// Exact reference solvers for small instances. Test-only: they enumerate, and
// share no code with the heuristics they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "vrplab/core.hpp"

namespace vrplab::testing {

/// Held-Karp dynamic programme over subsets: optimal closed tour through all
/// nodes of a TSP instance (n <= 16).
inline double held_karp(const Instance& inst) {
    const int n = static_cast<int>(inst.size());
    if (n <= 1) return 0.0;
    if (n == 2) return 2.0 * distance(inst, 0, 1);
    const int m = n - 1;  // node 0 is the fixed start
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp(static_cast<std::size_t>(1u << m) * static_cast<std::size_t>(m), inf);
    auto at = [&](unsigned mask, int j) -> double& { return dp[static_cast<std::size_t>(mask) * m + j]; };
    for (int j = 0; j < m; ++j) at(1u << j, j) = distance(inst, 0, j + 1);
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        for (int j = 0; j < m; ++j) {
            if (!(mask & (1u << j))) continue;
            const double here = at(mask, j);
            if (here == inf) continue;
            for (int k = 0; k < m; ++k) {
                if (mask & (1u << k)) continue;
                double& next = at(mask | (1u << k), k);
                next = std::min(next, here + distance(inst, j + 1, k + 1));
            }
        }
    }
    double best = inf;
    const unsigned full = (1u << m) - 1;
    for (int j = 0; j < m; ++j) best = std::min(best, at(full, j) + distance(inst, j + 1, 0));
    return best;
}

/// Exhaustive CVRP/OVRP optimum: every set partition of the customers into
/// capacity-feasible groups, each group routed by trying every visiting order.
inline double brute_force_vrp(const Instance& inst) {
    const int m = inst.customer_count();
    const double inf = std::numeric_limits<double>::infinity();
    const unsigned full = (1u << m) - 1;
    // Best single-route cost for every subset, by enumerating permutations.
    std::vector<double> route(static_cast<std::size_t>(full) + 1, inf);
    for (unsigned mask = 1; mask <= full; ++mask) {
        Route members;
        int load = 0;
        for (int j = 0; j < m; ++j) {
            if (mask & (1u << j)) {
                members.push_back(j + 1);
                load += inst.nodes[static_cast<std::size_t>(j + 1)].demand;
            }
        }
        if (load > inst.capacity) continue;
        double best = inf;
        do {
            best = std::min(best, route_cost(inst, members));
        } while (std::next_permutation(members.begin(), members.end()));
        route[mask] = best;
    }
    // Partitions: the group holding the lowest remaining customer is chosen first.
    std::vector<double> part(static_cast<std::size_t>(full) + 1, inf);
    part[0] = 0.0;
    for (unsigned mask = 1; mask <= full; ++mask) {
        const unsigned low = mask & (~mask + 1);
        const unsigned rest = mask ^ low;
        for (unsigned sub = rest;; sub = (sub - 1) & rest) {
            const unsigned group = sub | low;
            if (route[group] < inf && part[mask ^ group] < inf)
                part[mask] = std::min(part[mask], route[group] + part[mask ^ group]);
            if (sub == 0) break;
        }
    }
    return part[full];
}

}  // namespace vrplab::testing
