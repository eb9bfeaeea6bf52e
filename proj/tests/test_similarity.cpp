#include <catch2/catch_amalgamated.hpp>

#include "vrplab/baselines.hpp"
#include "vrplab/generator.hpp"
#include "vrplab/rng.hpp"
#include "vrplab/similarity.hpp"

using namespace vrplab;
using Catch::Approx;

namespace {

struct Published {
    TransferCosts costs;
    double percent;
};

// Cost quadruples (A = CVRP) and similarity percentages of the published
// capacity and time-window tables.
const std::vector<Published> kPublished = {
    {{59.77, 30.88, 31.18, 60.67}, 97.5},  // CVRP-OVRP C10
    {{15.55, 9.84, 11.33, 17.25}, 75.6},   // CVRP-OVRP C50
    {{8.04, 7.49, 7.76, 9.78}, 75.5},      // CVRP-OVRP C400
    {{7.87, 7.49, 7.70, 9.74}, 74.1},      // CVRP-OVRP C500
    {{59.77, 7.80, 13.17, 70.47}, 25.5},   // CVRP-TSP C10
    {{15.55, 7.80, 10.68, 17.91}, 53.5},   // CVRP-TSP C50
    {{8.04, 7.80, 7.96, 8.78}, 88.9},      // CVRP-TSP C400
    {{7.87, 7.80, 7.83, 7.98}, 98.2},      // CVRP-TSP C500
    {{15.51, 33.77, 59.69, 24.42}, 9.9},   // CVRP-CVRPTW alpha 0.2
    {{15.51, 24.42, 38.89, 21.24}, 25.7},  // alpha 1.0
    {{15.51, 15.81, 18.89, 15.80}, 79.0},  // alpha 3.0
    {{15.51, 15.55, 16.08, 15.55}, 96.3},  // alpha 5.0
};

}  // namespace

TEST_CASE("similarity reproduces published percentages", "[similarity]") {
    for (const auto& p : kPublished) {
        INFO("expected " << p.percent);
        CHECK(100.0 * similarity(p.costs) == Approx(p.percent).margin(0.1));
    }
}

TEST_CASE("similarity of identical problems is one", "[similarity]") {
    CHECK(similarity({7.0, 7.0, 7.0, 7.0}) == 1.0);
    CHECK(similarity({3.0, 5.0, 5.0, 3.0}) == 1.0);
}

TEST_CASE("similarity rejects nonpositive costs", "[similarity]") {
    CHECK_THROWS_AS(similarity({0.0, 1.0, 1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(similarity({1.0, -1.0, 1.0, 1.0}), DomainError);
    CHECK_THROWS_AS(similarity({1.0, 1.0, 0.0, 1.0}), DomainError);
}

TEST_CASE("similarity is not clamped", "[similarity]") {
    CHECK(similarity({1.0, 1.0, 3.5, 1.0}) == Approx(-1.5));
}

TEST_CASE("similarity is symmetric under swapping both problems", "[similarity][property]") {
    CounterRng rng(21, StreamTag::Instance, 0);
    for (int i = 0; i < 5000; ++i) {
        TransferCosts tc{rng.uniform(0.1, 10), rng.uniform(0.1, 10), rng.uniform(0.1, 10), rng.uniform(0.1, 10)};
        const TransferCosts swapped{tc.obj_b, tc.obj_a, tc.obj_a_of_b, tc.obj_b_of_a};
        CHECK(similarity(tc) == Approx(similarity(swapped)).epsilon(1e-14));
    }
}

TEST_CASE("similarity is at most one when transfers cost at most twice the native cost", "[similarity][property]") {
    // Both factors lie in [0, 1] in this regime; beyond it two negative
    // factors multiply to a value above one.
    CounterRng rng(22, StreamTag::Instance, 0);
    for (int i = 0; i < 5000; ++i) {
        const double a = rng.uniform(0.1, 10), b = rng.uniform(0.1, 10);
        TransferCosts tc{a, b, b * rng.uniform(0.0, 2.0) + 1e-9, a * rng.uniform(0.0, 2.0) + 1e-9};
        CHECK(similarity(tc) <= 1.0);
        CHECK(similarity(tc) < 1.0);
    }
    CHECK(similarity({1.0, 1.0, 1.0, 1.0}) == 1.0);
}

namespace {

std::vector<Instance> cvrp_dataset(int capacity, int count, int n) {
    GenSpec spec;
    spec.n = n;
    spec.capacity_min = spec.capacity_max = capacity;
    spec.seed = 77;
    spec.count = count;
    return gen_dataset(spec);
}

std::vector<Instance> tw_dataset(double alpha, int count, int n) {
    GenSpec spec;
    spec.kind = ProblemKind::CVRPTW;
    spec.n = n;
    spec.capacity_min = spec.capacity_max = 50;
    spec.alpha_min = spec.alpha_max = alpha;
    spec.seed = 78;
    spec.count = count;
    return gen_dataset(spec);
}

}  // namespace

TEST_CASE("transfer_table for identical kinds", "[similarity]") {
    const auto data = cvrp_dataset(30, 5, 10);
    const auto tc = transfer_table(data, ProblemKind::CVRP, ProblemKind::CVRP, oracle);
    CHECK(similarity(tc) == 1.0);
}

TEST_CASE("looser windows make CVRPTW more similar to CVRP", "[similarity]") {
    const auto tight = transfer_table(tw_dataset(0.2, 10, 20), ProblemKind::CVRP, ProblemKind::CVRPTW, oracle);
    const auto loose = transfer_table(tw_dataset(5.0, 10, 20), ProblemKind::CVRP, ProblemKind::CVRPTW, oracle);
    CHECK(tight.obj_a == Approx(loose.obj_a));
    CHECK(similarity(loose) > similarity(tight));
}

TEST_CASE("loose capacity favours TSP over OVRP", "[similarity]") {
    const auto data = cvrp_dataset(500, 10, 20);
    const double tsp = similarity(transfer_table(data, ProblemKind::CVRP, ProblemKind::TSP, oracle));
    const double ovrp = similarity(transfer_table(data, ProblemKind::CVRP, ProblemKind::OVRP, oracle));
    CHECK(tsp >= ovrp);
}

TEST_CASE("tight capacity favours OVRP over TSP", "[similarity]") {
    const auto data = cvrp_dataset(10, 10, 20);
    const double tsp = similarity(transfer_table(data, ProblemKind::CVRP, ProblemKind::TSP, oracle));
    const double ovrp = similarity(transfer_table(data, ProblemKind::CVRP, ProblemKind::OVRP, oracle));
    CHECK(ovrp > tsp);
}

TEST_CASE("transfer between unsupported kinds", "[similarity]") {
    const auto data = cvrp_dataset(30, 1, 5);
    CHECK_THROWS_AS(transfer_table(data, ProblemKind::TSP, ProblemKind::OVRP, oracle), DomainError);
}
