#pragma once

#include <initializer_list>
#include <utility>
#include <vector>

#include "vrplab/core.hpp"

namespace vrplab::testing {

struct Pt {
    double x, y;
    int demand = 0;
};

/// Instance from coordinates (node 0 first) with demands and a capacity.
inline Instance make_instance(ProblemKind kind, std::initializer_list<Pt> pts, int capacity = 100) {
    Instance inst;
    inst.kind = kind;
    inst.capacity = capacity;
    int i = 0;
    for (const auto& p : pts) {
        Node n;
        n.index = i++;
        n.x = p.x;
        n.y = p.y;
        n.demand = p.demand;
        n.late = 1e9;
        inst.nodes.push_back(n);
    }
    return inst;
}

}  // namespace vrplab::testing
