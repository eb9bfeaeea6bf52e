#include <catch2/catch_amalgamated.hpp>

#include "test_support.hpp"
#include "vrplab/baselines.hpp"
#include "vrplab/core.hpp"
#include "vrplab/generator.hpp"
#include "vrplab/rng.hpp"

using namespace vrplab;
using vrplab::testing::make_instance;
using Catch::Approx;

TEST_CASE("distance examples", "[core]") {
    CHECK(distance(Node{0, 0.0, 0.0}, Node{1, 0.3, 0.4}) == Approx(0.5).epsilon(1e-15));
    CHECK(distance(Node{0, 0.7, 0.2}, Node{1, 0.7, 0.2}) == 0.0);
    CHECK(distance(Node{0, 0.1, 0.2}, Node{1, 0.4, 0.6}) == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("distance is symmetric and obeys the triangle inequality", "[core][property]") {
    CounterRng rng(7, StreamTag::Instance, 0);
    for (int trial = 0; trial < 2000; ++trial) {
        Node a{0, rng.uniform(), rng.uniform()}, b{1, rng.uniform(), rng.uniform()}, c{2, rng.uniform(), rng.uniform()};
        CHECK(distance(a, b) == distance(b, a));
        CHECK(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-15);
    }
}

TEST_CASE("solution_cost examples", "[core]") {
    auto tsp = make_instance(ProblemKind::TSP, {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    CHECK(solution_cost(tsp, Solution{{0, 1, 2, 3}}) == Approx(4.0));

    auto cvrp = make_instance(ProblemKind::CVRP, {{0, 0}, {0.5, 0, 1}});
    CHECK(solution_cost(cvrp, Solution{{0, 1, 0}}) == Approx(1.0));

    auto ovrp = make_instance(ProblemKind::OVRP, {{0, 0}, {0.5, 0, 1}, {0.5, 0.5, 1}});
    CHECK(solution_cost(ovrp, Solution{{0, 1, 2}}) == Approx(1.0));
}

TEST_CASE("solution structure errors", "[core]") {
    auto cvrp = make_instance(ProblemKind::CVRP, {{0, 0}, {0.5, 0, 1}, {0.5, 0.5, 1}});
    CHECK_THROWS_AS(solution_cost(cvrp, Solution{{0, 1, 0, 0, 2, 0}}), StructureError);
    CHECK_THROWS_AS(solution_cost(cvrp, Solution{{1, 2, 0}}), StructureError);
    CHECK_THROWS_AS(solution_cost(cvrp, Solution{{0, 1, 2}}), StructureError);
    CHECK_THROWS_AS(solution_cost(cvrp, Solution{{0, 7, 0}}), StructureError);
    auto ovrp = with_kind(cvrp, ProblemKind::OVRP);
    CHECK_THROWS_AS(solution_cost(ovrp, Solution{{0, 1, 2, 0}}), StructureError);
}

TEST_CASE("closed sub-tour cost is invariant under reversal", "[core][property]") {
    GenSpec spec;
    spec.n = 12;
    spec.capacity_min = spec.capacity_max = 20;
    for (int i = 0; i < 200; ++i) {
        const auto inst = gen_instance(spec, static_cast<std::uint64_t>(i));
        auto routes = split_routes(inst, nearest_neighbor(inst));
        const double before = solution_cost(inst, join_routes(inst.kind, routes));
        auto& r = routes[static_cast<std::size_t>(i) % routes.size()];
        std::reverse(r.begin(), r.end());
        CHECK(solution_cost(inst, join_routes(inst.kind, routes)) == Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("validate capacity examples", "[core]") {
    auto ok = make_instance(ProblemKind::CVRP, {{0, 0}, {0.1, 0, 4}, {0.2, 0, 5}}, 10);
    CHECK(validate(ok, Solution{{0, 1, 2, 0}}).feasible);

    auto bad = make_instance(ProblemKind::CVRP, {{0, 0}, {0.1, 0, 6}, {0.2, 0, 5}}, 10);
    const auto report = validate(bad, Solution{{0, 1, 2, 0}});
    REQUIRE_FALSE(report.feasible);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].kind == ViolationKind::Capacity);
    CHECK(report.violations[0].node == 2);
}

TEST_CASE("validate reports permutation and structure problems as data", "[core]") {
    auto inst = make_instance(ProblemKind::CVRP, {{0, 0}, {0.1, 0, 1}, {0.2, 0, 1}}, 10);
    auto missing = validate(inst, Solution{{0, 1, 0}});
    REQUIRE_FALSE(missing.feasible);
    CHECK(missing.violations[0].kind == ViolationKind::Permutation);
    auto twice = validate(inst, Solution{{0, 1, 2, 0, 1, 0}});
    CHECK_FALSE(twice.feasible);
    auto malformed = validate(inst, Solution{{0, 0, 1, 2, 0}});
    REQUIRE_FALSE(malformed.feasible);
    CHECK(malformed.violations[0].kind == ViolationKind::Structure);
}

namespace {

Instance tw_line() {
    auto inst = make_instance(ProblemKind::CVRPTW, {{0, 0}, {1, 0, 1}, {1, 1, 1}});
    inst.nodes[0].late = 10.0;
    inst.nodes[1].early = 2.0;
    inst.nodes[1].late = 5.0;
    inst.nodes[1].service = 1.0;
    inst.nodes[2].early = 0.0;
    inst.nodes[2].late = 10.0;
    return inst;
}

}  // namespace

TEST_CASE("schedule recurrence", "[core]") {
    const auto inst = tw_line();
    const auto s = schedule(inst, Solution{{0, 1, 2, 0}});
    CHECK(s.arrival[1] == Approx(1.0));
    CHECK(s.service_start[1] == Approx(2.0));
    CHECK(s.departure[1] == Approx(3.0));
    CHECK(s.arrival[2] == Approx(4.0));
    CHECK(s.feasible);
    REQUIRE(s.route_return.size() == 1);
    CHECK(s.route_return[0] == Approx(4.0 + std::sqrt(2.0)));
}

TEST_CASE("schedule marks unreachable windows", "[core]") {
    auto inst = tw_line();
    inst.nodes[1].early = 0.0;
    inst.nodes[1].late = 0.5;
    const auto s = schedule(inst, Solution{{0, 1, 0, 2, 0}});
    CHECK_FALSE(s.feasible);
    REQUIRE(s.violation);
    CHECK(s.violation->node == 1);
}

TEST_CASE("schedule checks the depot deadline", "[core]") {
    auto inst = tw_line();
    inst.nodes[0].late = 4.5;
    const auto s = schedule(inst, Solution{{0, 1, 2, 0}});
    CHECK_FALSE(s.feasible);
    CHECK(s.violation->node == 0);
}

TEST_CASE("validate detects a late arrival", "[core]") {
    auto inst = make_instance(ProblemKind::CVRPTW, {{0, 0}, {0.1, 0, 1}, {0.4, 0, 1}});
    inst.nodes[0].late = 20.0;
    inst.nodes[1].early = 6.5;
    inst.nodes[1].late = 8.0;
    inst.nodes[1].service = 0.4;
    inst.nodes[2].late = 7.0;
    const auto s = schedule(inst, Solution{{0, 1, 2, 0}});
    CHECK(s.arrival[2] == Approx(7.2));
    const auto report = validate(inst, Solution{{0, 1, 2, 0}});
    REQUIRE_FALSE(report.feasible);
    CHECK(report.violations[0].kind == ViolationKind::TimeWindow);
    CHECK(report.violations[0].node == 2);
}

TEST_CASE("schedule invariants on generated instances", "[core][property]") {
    GenSpec spec;
    spec.kind = ProblemKind::CVRPTW;
    spec.n = 15;
    spec.alpha_min = 0.2;
    spec.alpha_max = 3.0;
    for (int i = 0; i < 200; ++i) {
        const auto inst = gen_instance(spec, static_cast<std::uint64_t>(i));
        const auto sol = nearest_neighbor(inst);
        const auto s = schedule(inst, sol);
        CHECK(s.feasible);
        for (const auto& r : split_routes(inst, sol)) {
            double last = 0.0;
            for (int c : r) {
                const auto& n = inst.nodes[static_cast<std::size_t>(c)];
                CHECK(s.service_start[static_cast<std::size_t>(c)] >= n.early);
                CHECK(s.departure[static_cast<std::size_t>(c)] >= last);
                last = s.departure[static_cast<std::size_t>(c)];
            }
        }
    }
}

namespace {

Instance one_window(double e, double l, double s) {
    auto inst = make_instance(ProblemKind::CVRPTW, {{0, 0}, {0.5, 0.5, 1}});
    inst.nodes[0].late = 10.0;
    inst.nodes[1].early = e;
    inst.nodes[1].late = l;
    inst.nodes[1].service = s;
    return inst;
}

}  // namespace

TEST_CASE("apply_tightness examples", "[core]") {
    const auto base = one_window(2.0, 6.0, 0.2);

    auto same = apply_tightness(base, 1.0);
    CHECK(same.nodes[1].early == 2.0);
    CHECK(same.nodes[1].late == 6.0);

    auto tight = apply_tightness(base, 0.5);
    CHECK(tight.nodes[1].early == Approx(3.0));
    CHECK(tight.nodes[1].late == Approx(5.0));
    CHECK(tight.nodes[1].service == Approx(0.4));

    auto loose = apply_tightness(base, 3.0);
    CHECK(loose.nodes[1].early == 0.0);
    CHECK(loose.nodes[1].late == Approx(10.0));
    CHECK(loose.nodes[1].service == Approx(0.2));
    CHECK(loose.nodes[0] == base.nodes[0]);
    CHECK(loose.alpha == 3.0);

    CHECK_THROWS_AS(apply_tightness(base, 0.0), DomainError);
    CHECK_THROWS_AS(apply_tightness(base, -1.0), DomainError);
}

TEST_CASE("apply_tightness scales window width by alpha", "[core][property]") {
    CounterRng rng(3, StreamTag::Windows, 0);
    for (int trial = 0; trial < 1000; ++trial) {
        const double e = rng.uniform(0.0, 3.0);
        const double l = e + rng.uniform(0.0, 1.0);
        const double alpha = rng.uniform(0.05, 3.0);
        const auto base = one_window(e, l, 0.2);
        const auto id = apply_tightness(base, 1.0);
        CHECK(id.nodes[1].early == e);
        CHECK(id.nodes[1].late == l);
        const auto out = apply_tightness(base, alpha);
        const double delta = (l - e) / 2.0 * (1.0 - alpha);
        if (e + delta >= 0.0) CHECK(out.nodes[1].late - out.nodes[1].early == Approx(alpha * (l - e)).margin(1e-12));
        CHECK(out.nodes[1].early <= out.nodes[1].late);
    }
}
