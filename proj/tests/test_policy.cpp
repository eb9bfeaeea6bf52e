#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vrplab/generator.hpp"
#include "vrplab/policy.hpp"

using namespace vrplab;
using Catch::Approx;

namespace {

ModelConfig small_config(int experts = 2) {
    ModelConfig c;
    c.embed_dim = 8;
    c.heads = 2;
    c.ff_dim = 16;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.experts = experts;
    c.expert_depth = 1;
    return c;
}

ModelConfig alpha_config(ModelConfig c) {
    c.tightness_min = 0.0;
    c.tightness_max = 3.0;
    return c;
}

ad::Matrix random_matrix(ad::Index r, ad::Index c, CounterRng& rng, double scale = 1.0) {
    ad::Matrix m(r, c);
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
    return m;
}

Instance gen(ProblemKind kind, int n, int cmin, int cmax, double amin, double amax, std::uint64_t idx, std::uint64_t seed = 3) {
    GenSpec spec;
    spec.kind = kind;
    spec.n = n;
    spec.capacity_min = cmin;
    spec.capacity_max = cmax;
    spec.alpha_min = amin;
    spec.alpha_max = amax;
    spec.seed = seed;
    return gen_instance(spec, idx);
}

void perturb(const std::vector<ad::Parameter*>& ps, double delta) {
    for (auto* p : ps) p->value.array() += delta;
}

}  // namespace

TEST_CASE("attention layer on a single row reduces to the value path", "[policy]") {
    Model m = Model::init(small_config(), 1);
    auto& p = m.encoder[0];
    CounterRng rng(1, StreamTag::Init, 99);
    const ad::Matrix x = random_matrix(1, 8, rng);
    ad::Tape t(false);
    const auto out = attention_layer(t, p, t.constant(x), t.constant(x), 2).value();

    auto norm = [](const ad::Matrix& v, const ad::Matrix& g, const ad::Matrix& b) {
        const double mu = v.mean();
        const double var = (v.array() - mu).square().mean();
        ad::Matrix r = ((v.array() - mu) / std::sqrt(var + ad::kStandardizeEps)).matrix();
        return ad::Matrix(r.cwiseProduct(g) + b);
    };
    const ad::Matrix mha = x * p.wv.value * p.wo.value;
    const ad::Matrix xh = norm(mha + x, p.norm1_scale.value, p.norm1_shift.value);
    const ad::Matrix ff = (xh * p.w1.value + p.b1.value).cwiseMax(0.0) * p.w2.value + p.b2.value;
    const ad::Matrix expect = norm(ff + xh, p.norm2_scale.value, p.norm2_shift.value);
    CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("self-attention is permutation equivariant", "[policy][property]") {
    Model m = Model::init(small_config(), 2);
    CounterRng rng(2, StreamTag::Init, 99);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 7;
        const ad::Matrix x = random_matrix(n, 8, rng);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
        ad::Matrix xp(n, 8);
        for (int i = 0; i < n; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
        ad::Tape t(false);
        const auto a = attention_layer(t, m.encoder[0], t.constant(x), t.constant(x), 2).value();
        const auto b = attention_layer(t, m.encoder[0], t.constant(xp), t.constant(xp), 2).value();
        REQUIRE(a.rows() == n);
        REQUIRE(a.cols() == 8);
        for (int i = 0; i < n; ++i) CHECK((b.row(i) - a.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("attention layer rejects mismatched widths", "[policy]") {
    Model m = Model::init(small_config(), 3);
    ad::Tape t(false);
    CHECK_THROWS_AS(attention_layer(t, m.encoder[0], t.constant(ad::Matrix::Zero(2, 5)), t.constant(ad::Matrix::Zero(2, 5)), 2),
                    ad::ShapeError);
}

TEST_CASE("gate intervals", "[policy]") {
    ModelConfig c;
    c.experts = 3;
    CHECK(gate(50, c).index == 0);
    CHECK(gate(10, c).index == 0);
    CHECK(gate(500, c).index == 2);
    CHECK(gate(499.9, c).index == 2);
    const double beta = 490.0 / 3.0;
    CHECK(gate(10 + beta, c).index == 1);
    CHECK(gate(10 + 2 * beta, c).index == 2);
    CHECK(gate(std::nextafter(10 + beta, 0.0), c).index == 0);
    CHECK(gate(200, c).one_hot == std::vector<double>{0.0, 1.0, 0.0});
    CHECK_THROWS_AS(gate(9.99, c), DomainError);
    CHECK_THROWS_AS(gate(500.01, c), DomainError);
    c.experts = 1;
    CHECK(gate(500, c).index == 0);
}

TEST_CASE("expert probabilities", "[policy][property]") {
    Model m = Model::init(small_config(), 4);
    CounterRng rng(4, StreamTag::Init, 99);
    {
        ad::Tape t(false);
        const auto p = expert_forward(t, m.experts[0], t.constant(random_matrix(3, 8, rng)), 2, 2);
        CHECK(p.value()(0, 0) == 1.0);
    }
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 1 + trial % 12;
        ad::Tape t(false);
        const auto p = expert_forward(t, m.experts[1], t.constant(random_matrix(k + 2, 8, rng, 3.0)), 2, 2).value();
        REQUIRE(p.cols() == k);
        CHECK((p.array() >= 0.0).all());
        CHECK(p.sum() == Approx(1.0).margin(1e-12));
    }
    Model twin = m;
    twin.experts[1] = twin.experts[0];
    ad::Tape t(false);
    const auto x = t.constant(random_matrix(6, 8, rng));
    CHECK(expert_forward(t, twin.experts[0], x, 2, 2).value() == expert_forward(t, twin.experts[1], x, 2, 2).value());
}

TEST_CASE("MEM routing isolation", "[policy][property]") {
    ModelConfig cfg = small_config(3);
    Model m = Model::init(cfg, 5);
    CounterRng rng(5, StreamTag::Init, 99);
    for (double c : {10.0, 50.0, 173.0, 176.67, 250.0, 499.0, 500.0}) {
        const ad::Matrix x = random_matrix(7, 8, rng);
        const int e = gate(c, cfg).index;
        Model other = m;
        for (int j = 0; j < 3; ++j)
            if (j != e) perturb(other.expert_parameters(j), 0.37);
        ad::Tape t(false);
        const auto a = mem_forward(t, m, t.constant(x), c, 2).value();
        const auto b = mem_forward(t, other, t.constant(x), c, 2).value();
        CHECK(a == b);
        CHECK(a == expert_forward(t, m.experts[static_cast<std::size_t>(e)], t.constant(x), 2, 2).value());
    }
    // boundary goes to the higher interval
    const double boundary = 10.0 + 490.0 / 3.0;
    ad::Tape t(false);
    const auto x = t.constant(random_matrix(5, 8, rng));
    CHECK(mem_forward(t, m, x, boundary, 2).value() == expert_forward(t, m.experts[1], x, 2, 2).value());

    Model single = Model::init(small_config(1), 6);
    CHECK(mem_forward(t, single, x, 333.0, 2).value() == expert_forward(t, single.experts[0], x, 2, 2).value());
}

TEST_CASE("encoder equivariance and depot projection", "[policy][property]") {
    Model m = Model::init(small_config(), 7);
    for (int trial = 0; trial < 30; ++trial) {
        const auto inst = gen(ProblemKind::CVRP, 4 + trial % 6, 10, 500, 1, 1, static_cast<std::uint64_t>(trial));
        Instance shuffled = inst;
        const int n = inst.customer_count();
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 1);
        std::reverse(perm.begin(), perm.end());
        for (int i = 0; i < n; ++i) {
            shuffled.nodes[static_cast<std::size_t>(i + 1)] = inst.nodes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
            shuffled.nodes[static_cast<std::size_t>(i + 1)].index = i + 1;
        }
        ad::Tape t(false);
        const auto a = encode(t, m, inst).value();
        const auto b = encode(t, m, shuffled).value();
        REQUIRE(a.rows() == n + 1);
        REQUIRE(a.cols() == 8);
        CHECK((a.row(0) - b.row(0)).cwiseAbs().maxCoeff() < 1e-12);
        for (int i = 0; i < n; ++i)
            CHECK((b.row(i + 1) - a.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-12);
    }
    Instance twin;
    twin.kind = ProblemKind::CVRP;
    twin.capacity = 50;
    twin.nodes = {Node{0, 0.3, 0.3}, Node{1, 0.3, 0.3}};
    ad::Tape t(false);
    const auto h = encode(t, m, twin).value();
    CHECK((h.row(0) - h.row(1)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("decoder masks", "[policy]") {
    Model m = Model::init(small_config(), 8);
    auto inst = gen(ProblemKind::CVRP, 6, 10, 10, 1, 1, 0);
    for (auto& n : inst.nodes) n.demand = n.index == 0 ? 0 : 5;
    DecoderState s = initial_state(inst, m.config);
    ad::Tape t(false);
    const auto h = encode(t, m, inst);

    auto step = decode_step(t, m, h, s);
    auto p = step_probabilities(step).value();
    CHECK(step.candidates.front() == 0);
    CHECK(p(0, 0) == 0.0);  // depot masked at the depot

    apply_action(s, 1);
    apply_action(s, 2);  // remaining capacity 0
    step = decode_step(t, m, h, s);
    p = step_probabilities(step).value();
    CHECK(step.candidates == std::vector<int>{0, 3, 4, 5, 6});
    CHECK(p(0, 0) == 1.0);
    for (ad::Index i = 1; i < p.cols(); ++i) CHECK(p(0, i) == 0.0);

    apply_action(s, 0);
    apply_action(s, 4);
    step = decode_step(t, m, h, s);
    CHECK(std::find(step.candidates.begin(), step.candidates.end(), 4) == step.candidates.end());
    CHECK_THROWS_AS(apply_action(s, 1), InfeasibleError);

    auto one = gen(ProblemKind::CVRP, 1, 10, 10, 1, 1, 0);
    CHECK(rollout(m, one).solution.visits == std::vector<int>{0, 1, 0});
}

TEST_CASE("time-window mask requires arrival and a feasible return", "[policy]") {
    ModelConfig cfg = alpha_config(small_config());
    Model m = Model::init(cfg, 9);
    Instance inst;
    inst.kind = ProblemKind::CVRPTW;
    inst.capacity = 50;
    inst.nodes = {Node{0, 0, 0, 0, 0, 2.0, 0}, Node{1, 0.5, 0, 1, 0, 0.4, 0.1}, Node{2, 0.5, 0, 1, 0, 2.0, 0.1},
                  Node{3, 0.9, 0, 1, 0, 2.0, 0.95}};
    DecoderState s = initial_state(inst, cfg);
    CHECK_FALSE(action_allowed(s, 1));  // arrives at 0.5 > 0.4
    CHECK(action_allowed(s, 2));
    CHECK_FALSE(action_allowed(s, 3));  // 0.9 + 0.95 + 0.9 > 2.0
}

TEST_CASE("rollouts are feasible for every kind", "[policy][property]") {
    Model heavy = Model::init(small_config(), 10);
    Model heavy_tw = Model::init(alpha_config(small_config()), 11);
    ModelConfig pcfg = alpha_config(small_config());
    pcfg.decoder = DecoderKind::Pomo;
    Model pomo = Model::init(pcfg, 12);
    ModelConfig pcfg_cap = small_config();
    pcfg_cap.decoder = DecoderKind::Pomo;
    Model pomo_cap = Model::init(pcfg_cap, 13);
    for (int i = 0; i < 120; ++i) {
        const int n = 2 + i % 15;
        const auto idx = static_cast<std::uint64_t>(i);
        CounterRng rng(14, StreamTag::Sampling, idx);
        for (auto kind : {ProblemKind::TSP, ProblemKind::CVRP, ProblemKind::OVRP, ProblemKind::CVRPTW}) {
            const auto inst = gen(kind, n, 10, 500, 0.2, 3.0, idx);
            Model& a = kind == ProblemKind::CVRPTW ? heavy_tw : heavy;
            Model& b = kind == ProblemKind::CVRPTW ? pomo : pomo_cap;
            for (Model* model : {&a, &b}) {
                const auto g = rollout(*model, inst);
                REQUIRE(validate(inst, g.solution).feasible);
                CHECK(g.cost == Approx(solution_cost(inst, g.solution)));
                const auto s = rollout(*model, inst, DecodeMode::Sample, &rng);
                REQUIRE(validate(inst, s.solution).feasible);
            }
        }
    }
}

TEST_CASE("greedy rollout is deterministic", "[policy]") {
    Model m = Model::init(small_config(), 15);
    const auto inst = gen(ProblemKind::CVRP, 12, 10, 500, 1, 1, 4);
    CHECK(rollout(m, inst).solution == rollout(m, inst).solution);
}

TEST_CASE("sampled log-probability matches recomputation", "[policy]") {
    Model m = Model::init(small_config(), 16);
    for (int i = 0; i < 20; ++i) {
        const auto inst = gen(ProblemKind::CVRP, 8, 10, 60, 1, 1, static_cast<std::uint64_t>(i));
        CounterRng rng(16, StreamTag::Sampling, static_cast<std::uint64_t>(i));
        const auto r = rollout(m, inst, DecodeMode::Sample, &rng);

        ad::Tape t(false);
        const auto h = encode(t, m, inst);
        DecoderState s = initial_state(inst, m.config);
        double total = 0.0;
        for (std::size_t k = 1; k < r.solution.visits.size() && !s.done(); ++k) {
            const int v = r.solution.visits[k];
            const auto step = decode_step(t, m, h, s);
            const auto p = step_probabilities(step).value();
            const auto pos = std::find(step.candidates.begin(), step.candidates.end(), v) - step.candidates.begin();
            total += std::log(p(0, pos));
            apply_action(s, v);
        }
        CHECK(total == Approx(r.log_prob).margin(1e-9));
    }
}

TEST_CASE("multistart rollouts use distinct first customers", "[policy]") {
    Model m = Model::init(small_config(), 17);
    const auto inst = gen(ProblemKind::CVRP, 10, 10, 500, 1, 1, 1);
    const auto rs = pomo_multistart(m, inst, 5);
    REQUIRE(rs.size() == 5);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        CHECK(rs[i].solution.visits[1] == static_cast<int>(i) + 1);
        CHECK(validate(inst, rs[i].solution).feasible);
    }
}

TEST_CASE("POMO expert logits are clipped", "[policy][property]") {
    ModelConfig cfg = small_config();
    cfg.decoder = DecoderKind::Pomo;
    cfg.logit_clip = 10.0;
    Model m = Model::init(cfg, 18);
    CounterRng rng(18, StreamTag::Init, 99);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + trial % 9;
        ad::Tape t(false);
        const auto hc = t.constant(random_matrix(1, 2 * 8 + kContextFeatures, rng, 5.0));
        const auto h = t.constant(random_matrix(k, 8, rng, 5.0));
        const auto logits = pomo_expert_logits(t, hc, h, m.pomo_experts[0], cfg.logit_clip, 2).value();
        CHECK(logits.cwiseAbs().maxCoeff() <= 10.0);
        const auto p = pomo_expert_forward(t, hc, h, m.pomo_experts[0], cfg.logit_clip, 2).value();
        CHECK(p.sum() == Approx(1.0).margin(1e-12));
        if (k == 1) CHECK(p(0, 0) == 1.0);
    }
}

TEST_CASE("decode_step gradient matches finite differences", "[policy][gradcheck]") {
    Model m = Model::init(small_config(2), 19);
    const auto inst = gen(ProblemKind::CVRP, 5, 30, 30, 1, 1, 2);
    const auto f = [&](ad::Tape& t) {
        const auto h = encode(t, m, inst);
        DecoderState s = initial_state(inst, m.config);
        std::vector<ad::Tensor> terms;
        for (int target : {3, 1, 0}) {
            const auto step = decode_step(t, m, h, s);
            const auto p = step_probabilities(step);
            const auto pos = std::find(step.candidates.begin(), step.candidates.end(), target) - step.candidates.begin();
            terms.push_back(ad::log(ad::pick(p, 0, pos)));
            apply_action(s, target);
        }
        return ad::sum(ad::concat_rows(terms));
    };
    CHECK(ad::grad_check(f, m.parameters()) <= 1e-4);
}

TEST_CASE("POMO expert gradient matches finite differences", "[policy][gradcheck]") {
    ModelConfig cfg = small_config(2);
    cfg.decoder = DecoderKind::Pomo;
    Model m = Model::init(cfg, 20);
    CounterRng rng(20, StreamTag::Init, 99);
    const ad::Matrix hc = random_matrix(1, 2 * 8 + kContextFeatures, rng);
    const ad::Matrix h = random_matrix(6, 8, rng);
    const auto f = [&](ad::Tape& t) {
        const auto p = pomo_expert_forward(t, t.constant(hc), t.constant(h), m.pomo_experts[0], cfg.logit_clip, 2);
        return ad::log(ad::pick(p, 0, 2));
    };
    CHECK(ad::grad_check(f, m.expert_parameters(0)) <= 1e-4);
}

TEST_CASE("forward passes are finite across tightness levels", "[policy][property]") {
    Model m = Model::init(small_config(3), 21);
    Model tw = Model::init(alpha_config(small_config(3)), 22);
    for (int i = 0; i < 60; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        const int cap = 10 + (i * 37) % 491;
        const auto inst = gen(ProblemKind::CVRP, 10, cap, cap, 1, 1, idx);
        const auto inst_tw = gen(ProblemKind::CVRPTW, 10, 50, 50, 0.2 + 2.8 * (i % 10) / 9.0, 0.2 + 2.8 * (i % 10) / 9.0, idx);
        for (auto [model, in] : {std::pair<Model*, const Instance*>{&m, &inst}, {&tw, &inst_tw}}) {
            ad::Tape t(false);
            const auto h = encode(t, *model, *in);
            CHECK(h.value().allFinite());
            DecoderState s = initial_state(*in, model->config);
            while (!s.done()) {
                const auto step = decode_step(t, *model, h, s);
                const auto p = step_probabilities(step).value();
                REQUIRE(p.allFinite());
                CHECK(p.sum() == Approx(1.0).margin(1e-12));
                for (ad::Index k = 0; k < p.cols(); ++k)
                    if (!step.allowed(0, k)) CHECK(p(0, k) == 0.0);
                ad::Index best = 0;
                for (ad::Index k = 0; k < p.cols(); ++k)
                    if (p(0, k) > p(0, best)) best = k;
                apply_action(s, step.candidates[static_cast<std::size_t>(best)]);
            }
        }
    }
}
