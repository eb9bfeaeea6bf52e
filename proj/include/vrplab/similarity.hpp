#pragma once

// Problem similarity from cross-transfer costs: how well the optimal solution
// of one problem survives adaptation to the other's constraints, and back.

#include <cmath>
#include <functional>
#include <vector>

#include "vrplab/core.hpp"
#include "vrplab/transforms.hpp"

namespace vrplab {

struct TransferCosts {
    double obj_a = 0.0;       // native cost of problem A
    double obj_b = 0.0;       // native cost of problem B
    double obj_b_of_a = 0.0;  // A's solution adapted to B's constraints
    double obj_a_of_b = 0.0;  // B's solution adapted to A's constraints
};

/// (1 - |Obj_B(A) - Obj_B| / Obj_B) * (1 - |Obj_A(B) - Obj_A| / Obj_A).
/// Negative values are possible and returned unchanged.
inline double similarity(const TransferCosts& tc) {
    if (!(tc.obj_a > 0.0 && tc.obj_b > 0.0 && tc.obj_b_of_a > 0.0 && tc.obj_a_of_b > 0.0))
        throw DomainError("similarity needs positive costs");
    const double a_to_b = 1.0 - std::abs(tc.obj_b_of_a - tc.obj_b) / tc.obj_b;
    const double b_to_a = 1.0 - std::abs(tc.obj_a_of_b - tc.obj_a) / tc.obj_a;
    return a_to_b * b_to_a;
}

using Solver = std::function<Solution(const Instance&)>;

/// Adapts a solution of `from` to the constraints of `to` with the matching
/// handcrafted transform. `inst` carries every attribute either kind needs.
inline Solution transfer_solution(const Instance& inst, ProblemKind from, ProblemKind to, const Solution& sol) {
    using K = ProblemKind;
    if (from == to) return sol;
    if (from == K::CVRP && to == K::TSP) return cvrp_to_tsp(with_kind(inst, K::CVRP), sol);
    if (from == K::TSP && to == K::CVRP) return tsp_to_cvrp(with_kind(inst, K::CVRP), sol);
    if (from == K::CVRP && to == K::OVRP) return cvrp_to_ovrp(with_kind(inst, K::CVRP), sol);
    if (from == K::OVRP && to == K::CVRP) return ovrp_to_cvrp(with_kind(inst, K::OVRP), sol);
    if (from == K::CVRP && to == K::CVRPTW) return cvrp_to_cvrptw(with_kind(inst, K::CVRPTW), sol);
    if (from == K::CVRPTW && to == K::CVRP) return cvrptw_to_cvrp(with_kind(inst, K::CVRPTW), sol);
    throw DomainError("no solution transform from " + std::string(to_string(from)) + " to " +
                      std::string(to_string(to)));
}

/// Dataset means of the four transfer costs between kinds A and B, solving
/// each instance natively under both kinds with `solver`.
inline TransferCosts transfer_table(const std::vector<Instance>& dataset, ProblemKind kind_a, ProblemKind kind_b,
                                    const Solver& solver) {
    if (dataset.empty()) throw DomainError("empty dataset");
    TransferCosts sum;
    for (const auto& base : dataset) {
        const Instance ia = with_kind(base, kind_a);
        const Instance ib = with_kind(base, kind_b);
        const Solution sa = solver(ia);
        const Solution sb = solver(ib);
        sum.obj_a += solution_cost(ia, sa);
        sum.obj_b += solution_cost(ib, sb);
        sum.obj_b_of_a += solution_cost(ib, transfer_solution(base, kind_a, kind_b, sa));
        sum.obj_a_of_b += solution_cost(ia, transfer_solution(base, kind_b, kind_a, sb));
    }
    const double n = static_cast<double>(dataset.size());
    return {sum.obj_a / n, sum.obj_b / n, sum.obj_b_of_a / n, sum.obj_a_of_b / n};
}

}  // namespace vrplab
