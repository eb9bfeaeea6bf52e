#pragma once

// Seeded instance and dataset generation with controllable constraint
// tightness. Every instance is addressed by (seed, draw index) so datasets
// can be produced in any order.

#include <cstdint>
#include <optional>
#include <vector>

#include "vrplab/core.hpp"
#include "vrplab/rng.hpp"

namespace vrplab {

enum class Assignment { InstanceLevel, BatchLevel };

struct GenSpec {
    ProblemKind kind = ProblemKind::CVRP;
    int n = 20;
    int capacity_min = 50;  // equal bounds mean a fixed capacity
    int capacity_max = 50;
    double alpha_min = 1.0;  // CVRPTW only; equal bounds mean a fixed alpha
    double alpha_max = 1.0;
    Assignment assignment = Assignment::InstanceLevel;
    std::uint64_t seed = 0;
    int count = 1;

    bool fixed_capacity() const { return capacity_min == capacity_max; }
    bool fixed_alpha() const { return alpha_min == alpha_max; }
};

/// Fixed parameters of the CVRPTW base windows.
struct WindowLayout {
    static constexpr double depot_close = 6.0;
    static constexpr double service = 0.2;
    static constexpr double half_width = 0.5;
    // Service reserved when placing window centres: the service time after
    // tightening at alpha = 0.2, the tightest supported level.
    static constexpr double service_reserve = 1.0;
    static constexpr double min_supported_alpha = 0.2;
};

inline constexpr int kMaxDemand = 9;

inline void check_spec(const GenSpec& spec) {
    if (spec.n < 1) throw DomainError("customer count must be positive");
    if (spec.count < 1) throw DomainError("dataset count must be positive");
    if (spec.capacity_min > spec.capacity_max) throw DomainError("capacity range is inverted");
    if (has_depot(spec.kind) && spec.capacity_min < kMaxDemand)
        throw DomainError("capacity below the largest possible demand");
    if (spec.alpha_min > spec.alpha_max) throw DomainError("alpha range is inverted");
    if (spec.kind == ProblemKind::CVRPTW && !(spec.alpha_min > 0.0))
        throw DomainError("alpha must be positive");
}

struct Tightness {
    int capacity = 0;
    double alpha = 1.0;
};

inline Tightness draw_tightness(const GenSpec& spec, CounterRng& rng) {
    Tightness t;
    t.capacity = spec.fixed_capacity() ? spec.capacity_min : rng.uniform_int(spec.capacity_min, spec.capacity_max);
    t.alpha = spec.fixed_alpha() ? spec.alpha_min : rng.uniform(spec.alpha_min, spec.alpha_max);
    return t;
}

namespace detail {

/// Windows guaranteeing the singleton route [0, i, 0] is feasible for every
/// alpha >= WindowLayout::min_supported_alpha.
inline void assign_base_windows(Instance& inst, CounterRng& rng) {
    Node& depot = inst.nodes[0];
    depot.early = 0.0;
    depot.late = WindowLayout::depot_close;
    depot.service = 0.0;
    for (std::size_t i = 1; i < inst.nodes.size(); ++i) {
        Node& c = inst.nodes[i];
        const double t = distance(depot, c);
        const double lo = t;
        const double hi = WindowLayout::depot_close - WindowLayout::service_reserve - t;
        // eight decimals keep centre +- half_width exact at file precision
        const double centre = std::floor(rng.uniform(lo, hi) * 1e8) / 1e8;
        c.service = WindowLayout::service;
        c.early = std::max(centre - WindowLayout::half_width, 0.0);
        c.late = std::min(centre + WindowLayout::half_width, WindowLayout::depot_close);
    }
}

inline Instance base_instance(ProblemKind kind, int n, std::uint64_t seed, std::uint64_t draw_index) {
    CounterRng rng(seed, StreamTag::Instance, draw_index);
    Instance inst;
    inst.kind = kind;
    const int total = has_depot(kind) ? n + 1 : n;
    inst.nodes.resize(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        Node& node = inst.nodes[static_cast<std::size_t>(i)];
        node.index = i;
        node.x = round_sig9(rng.uniform());
        node.y = round_sig9(rng.uniform());
    }
    if (has_depot(kind)) {
        for (int i = 1; i < total; ++i) inst.nodes[static_cast<std::size_t>(i)].demand = rng.uniform_int(1, kMaxDemand);
    }
    if (kind == ProblemKind::CVRPTW) {
        CounterRng wrng(seed, StreamTag::Windows, draw_index);
        assign_base_windows(inst, wrng);
    }
    quantize(inst);
    return inst;
}

inline Instance finish_instance(Instance inst, const Tightness& t) {
    if (!has_depot(inst.kind)) {
        inst.capacity = 1;
        return inst;
    }
    inst.capacity = t.capacity;
    if (inst.kind == ProblemKind::CVRPTW) {
        inst = apply_tightness(inst, t.alpha);
        quantize(inst);
    }
    return inst;
}

}  // namespace detail

/// Base CVRPTW instance (alpha = 1) with capacity 50. Customer coordinates and
/// demands are drawn exactly as gen_instance draws them.
inline Instance gen_cvrptw_base(int n, std::uint64_t seed, std::uint64_t draw_index = 0) {
    if (n < 1) throw DomainError("customer count must be positive");
    Instance inst = detail::base_instance(ProblemKind::CVRPTW, n, seed, draw_index);
    inst.capacity = 50;
    return inst;
}

/// Instance with explicitly supplied tightness, sharing coordinates, demands
/// and base windows with gen_instance at the same (seed, draw_index).
inline Instance gen_instance_with(const GenSpec& spec, std::uint64_t draw_index, const Tightness& t) {
    check_spec(spec);
    return detail::finish_instance(detail::base_instance(spec.kind, spec.n, spec.seed, draw_index), t);
}

inline Instance gen_instance(const GenSpec& spec, std::uint64_t draw_index) {
    check_spec(spec);
    CounterRng trng(spec.seed, StreamTag::Tightness, draw_index);
    return detail::finish_instance(detail::base_instance(spec.kind, spec.n, spec.seed, draw_index),
                                   draw_tightness(spec, trng));
}

/// Instances [batch_index * batch_size, (batch_index + 1) * batch_size). In
/// batch-level mode one tightness draw is shared by the whole batch.
inline std::vector<Instance> gen_batch(const GenSpec& spec, int batch_size, std::uint64_t batch_index) {
    check_spec(spec);
    if (batch_size < 1) throw DomainError("batch size must be positive");
    std::vector<Instance> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    const std::uint64_t first = batch_index * static_cast<std::uint64_t>(batch_size);
    std::optional<Tightness> shared;
    if (spec.assignment == Assignment::BatchLevel) {
        CounterRng brng(spec.seed, StreamTag::BatchTightness, batch_index);
        shared = draw_tightness(spec, brng);
    }
    for (int j = 0; j < batch_size; ++j) {
        const std::uint64_t idx = first + static_cast<std::uint64_t>(j);
        batch.push_back(shared ? gen_instance_with(spec, idx, *shared) : gen_instance(spec, idx));
    }
    return batch;
}

inline std::vector<Instance> gen_dataset(const GenSpec& spec) {
    check_spec(spec);
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) out.push_back(gen_instance(spec, static_cast<std::uint64_t>(i)));
    return out;
}

}  // namespace vrplab
