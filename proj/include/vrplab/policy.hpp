#pragma once

// Constructive routing policy: light encoder, heavy decoder of stacked
// attention layers, and a multi-expert head routed by constraint tightness.
// A second decoder family (single-query attention with clipped logits) is
// available through ModelConfig::decoder.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vrplab/core.hpp"
#include "vrplab/rng.hpp"
#include "vrplab/tensor.hpp"

namespace vrplab {

struct DeadEndError : Error { using Error::Error; };

enum class DecoderKind { Heavy, Pomo };

inline std::string to_string(DecoderKind k) { return k == DecoderKind::Heavy ? "heavy" : "pomo"; }
inline DecoderKind parse_decoder(const std::string& s) {
    if (s == "heavy") return DecoderKind::Heavy;
    if (s == "pomo") return DecoderKind::Pomo;
    throw FormatError("unknown decoder kind: " + s);
}

struct ModelConfig {
    int embed_dim = 64;
    int ff_dim = 128;
    int heads = 4;
    int encoder_layers = 1;
    int decoder_layers = 3;
    int experts = 3;
    int expert_depth = 2;
    double tightness_min = 10.0;
    double tightness_max = 500.0;
    double logit_clip = 10.0;
    DecoderKind decoder = DecoderKind::Heavy;

    int head_dim() const { return embed_dim / heads; }

    void validate() const {
        if (embed_dim < 1 || heads < 1 || embed_dim % heads != 0) throw DomainError("embed_dim must be divisible by heads");
        if (ff_dim < 1) throw DomainError("ff_dim must be positive");
        if (encoder_layers < 0 || decoder_layers < 0) throw DomainError("layer counts must be nonnegative");
        if (experts < 1 || expert_depth < 1) throw DomainError("need at least one expert of depth one");
        if (!(tightness_min < tightness_max)) throw DomainError("tightness range is empty");
        if (!(logit_clip > 0.0)) throw DomainError("logit clip must be positive");
    }

    static ModelConfig desk() { return {}; }

    static ModelConfig paper() {
        ModelConfig c;
        c.embed_dim = 192;
        c.ff_dim = 512;
        c.heads = 12;
        c.decoder_layers = 6;
        c.expert_depth = 3;
        return c;
    }

    /// Time-window variant: gate on alpha in [0, 3], one expert per unit interval.
    static ModelConfig pomo_tw() {
        ModelConfig c;
        c.decoder = DecoderKind::Pomo;
        c.encoder_layers = 3;
        c.decoder_layers = 0;
        c.expert_depth = 1;
        c.tightness_min = 0.0;
        c.tightness_max = 3.0;
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

inline constexpr int kNodeFeatures = 6;     // x, y, demand/C, e/l0, l/l0, s/l0
inline constexpr int kContextFeatures = 3;  // remaining/C, time/l0, normalised tightness

// ---------------------------------------------------------------- parameters

struct AttentionLayerParams {
    // Heads share one matrix per projection; head i owns columns [i*dk, (i+1)*dk).
    ad::Parameter wq, wk, wv, wo;
    ad::Parameter w1, b1, w2, b2;
    ad::Parameter norm1_scale, norm1_shift, norm2_scale, norm2_shift;

    void collect(std::vector<ad::Parameter*>& out) {
        for (auto* p : {&wq, &wk, &wv, &wo, &w1, &b1, &w2, &b2, &norm1_scale, &norm1_shift, &norm2_scale, &norm2_shift})
            out.push_back(p);
    }
};

struct ExpertLayerParams {
    std::vector<AttentionLayerParams> layers;
    ad::Parameter w_out, b_out;

    void collect(std::vector<ad::Parameter*>& out) {
        for (auto& l : layers) l.collect(out);
        out.push_back(&w_out);
        out.push_back(&b_out);
    }
};

/// Single-query expert: MHA(h_c, H) followed by a residual FF block.
struct PomoExpertParams {
    ad::Parameter wq, wk, wv, wo;
    ad::Parameter w1, b1, w2, b2;

    void collect(std::vector<ad::Parameter*>& out) {
        for (auto* p : {&wq, &wk, &wv, &wo, &w1, &b1, &w2, &b2}) out.push_back(p);
    }
};

namespace detail {

class ParamFactory {
public:
    explicit ParamFactory(std::uint64_t seed) : seed_(seed) {}

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); each parameter has its own stream.
    ad::Parameter uniform(const std::string& name, ad::Index rows, ad::Index cols, ad::Index fan_in) {
        CounterRng rng(seed_, StreamTag::Init, counter_++);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        ad::Matrix m(rows, cols);
        for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
        return {name, std::move(m)};
    }

    ad::Parameter constant(const std::string& name, ad::Index rows, ad::Index cols, double v) {
        ++counter_;
        return {name, ad::Matrix::Constant(rows, cols, v)};
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

inline AttentionLayerParams make_attention(ParamFactory& f, const std::string& p, int d, int dff) {
    AttentionLayerParams a;
    a.wq = f.uniform(p + ".wq", d, d, d);
    a.wk = f.uniform(p + ".wk", d, d, d);
    a.wv = f.uniform(p + ".wv", d, d, d);
    a.wo = f.uniform(p + ".wo", d, d, d);
    a.w1 = f.uniform(p + ".w1", d, dff, d);
    a.b1 = f.uniform(p + ".b1", 1, dff, d);
    a.w2 = f.uniform(p + ".w2", dff, d, dff);
    a.b2 = f.uniform(p + ".b2", 1, d, dff);
    a.norm1_scale = f.constant(p + ".norm1.scale", 1, d, 1.0);
    a.norm1_shift = f.constant(p + ".norm1.shift", 1, d, 0.0);
    a.norm2_scale = f.constant(p + ".norm2.scale", 1, d, 1.0);
    a.norm2_shift = f.constant(p + ".norm2.shift", 1, d, 0.0);
    return a;
}

}  // namespace detail

struct Model {
    ModelConfig config;
    ad::Parameter depot_proj, depot_bias, node_proj, node_bias;
    std::vector<AttentionLayerParams> encoder;
    ad::Parameter first_proj, last_proj, last_bias;  // heavy decoder context tokens
    std::vector<AttentionLayerParams> decoder;
    std::vector<ExpertLayerParams> experts;
    std::vector<PomoExpertParams> pomo_experts;

    static Model init(const ModelConfig& config, std::uint64_t seed) {
        config.validate();
        const int d = config.embed_dim, dff = config.ff_dim;
        detail::ParamFactory f(seed);
        Model m;
        m.config = config;
        m.depot_proj = f.uniform("embed.depot.w", kNodeFeatures, d, kNodeFeatures);
        m.depot_bias = f.uniform("embed.depot.b", 1, d, kNodeFeatures);
        m.node_proj = f.uniform("embed.node.w", kNodeFeatures, d, kNodeFeatures);
        m.node_bias = f.uniform("embed.node.b", 1, d, kNodeFeatures);
        for (int i = 0; i < config.encoder_layers; ++i)
            m.encoder.push_back(detail::make_attention(f, "encoder." + std::to_string(i), d, dff));
        if (config.decoder == DecoderKind::Heavy) {
            m.first_proj = f.uniform("decoder.first.w", d, d, d);
            m.last_proj = f.uniform("decoder.last.w", d + kContextFeatures, d, d + kContextFeatures);
            m.last_bias = f.uniform("decoder.last.b", 1, d, d + kContextFeatures);
            for (int i = 0; i < config.decoder_layers; ++i)
                m.decoder.push_back(detail::make_attention(f, "decoder." + std::to_string(i), d, dff));
            for (int e = 0; e < config.experts; ++e) {
                ExpertLayerParams ex;
                const std::string p = "expert." + std::to_string(e);
                for (int i = 0; i < config.expert_depth; ++i)
                    ex.layers.push_back(detail::make_attention(f, p + "." + std::to_string(i), d, dff));
                ex.w_out = f.uniform(p + ".w", d, 1, d);
                ex.b_out = f.uniform(p + ".b", 1, 1, d);
                m.experts.push_back(std::move(ex));
            }
        } else {
            const int dc = 2 * d + kContextFeatures;
            for (int e = 0; e < config.experts; ++e) {
                PomoExpertParams ex;
                const std::string p = "pomo_expert." + std::to_string(e);
                ex.wq = f.uniform(p + ".wq", dc, d, dc);
                ex.wk = f.uniform(p + ".wk", d, d, d);
                ex.wv = f.uniform(p + ".wv", d, d, d);
                ex.wo = f.uniform(p + ".wo", d, d, d);
                ex.w1 = f.uniform(p + ".w1", d, dff, d);
                ex.b1 = f.uniform(p + ".b1", 1, dff, d);
                ex.w2 = f.uniform(p + ".w2", dff, d, dff);
                ex.b2 = f.uniform(p + ".b2", 1, d, dff);
                m.pomo_experts.push_back(std::move(ex));
            }
        }
        return m;
    }

    /// Every parameter in a fixed order (the checkpoint order).
    std::vector<ad::Parameter*> parameters() {
        std::vector<ad::Parameter*> out{&depot_proj, &depot_bias, &node_proj, &node_bias};
        for (auto& l : encoder) l.collect(out);
        if (config.decoder == DecoderKind::Heavy) {
            out.push_back(&first_proj);
            out.push_back(&last_proj);
            out.push_back(&last_bias);
            for (auto& l : decoder) l.collect(out);
            for (auto& e : experts) e.collect(out);
        } else {
            for (auto& e : pomo_experts) e.collect(out);
        }
        return out;
    }

    std::vector<ad::Parameter*> expert_parameters(int e) {
        std::vector<ad::Parameter*> out;
        if (config.decoder == DecoderKind::Heavy) experts.at(static_cast<std::size_t>(e)).collect(out);
        else pomo_experts.at(static_cast<std::size_t>(e)).collect(out);
        return out;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }
};

// ------------------------------------------------------------------ layers

namespace detail {

inline ad::Tensor norm(ad::Tape& t, ad::Tensor x, ad::Parameter& scale, ad::Parameter& shift) {
    return ad::add_row(ad::scale_cols(ad::standardize(x), t.param(scale)), t.param(shift));
}

inline ad::Tensor feed_forward(ad::Tape& t, ad::Tensor x, ad::Parameter& w1, ad::Parameter& b1, ad::Parameter& w2,
                               ad::Parameter& b2) {
    ad::Tensor h = ad::relu(ad::add_row(ad::matmul(x, t.param(w1)), t.param(b1)));
    return ad::add_row(ad::matmul(h, t.param(w2)), t.param(b2));
}

}  // namespace detail

/// Concat(head_1..head_h) W_O with head_i = softmax(X Wq_i (Y Wk_i)^T / sqrt(d)) Y Wv_i.
inline ad::Tensor multi_head_attention(ad::Tape& t, ad::Tensor x, ad::Tensor y, ad::Parameter& wq, ad::Parameter& wk,
                                       ad::Parameter& wv, ad::Parameter& wo, int heads) {
    const ad::Index d = wk.value.cols();
    if (x.cols() != wq.value.rows() || y.cols() != wk.value.rows()) throw ad::ShapeError("attention input width");
    if (d % heads != 0) throw ad::ShapeError("attention width not divisible by heads");
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    ad::Tensor q = ad::matmul(x, t.param(wq));
    ad::Tensor k = ad::matmul(y, t.param(wk));
    ad::Tensor v = ad::matmul(y, t.param(wv));
    return ad::matmul(ad::attention_heads(q, k, v, heads, inv), t.param(wo));
}

/// X' = Norm(FF(X^) + X^), X^ = Norm(MHA(X, Y) + X).
inline ad::Tensor attention_layer(ad::Tape& t, AttentionLayerParams& p, ad::Tensor x, ad::Tensor y, int heads) {
    ad::Tensor mha = multi_head_attention(t, x, y, p.wq, p.wk, p.wv, p.wo, heads);
    ad::Tensor xh = detail::norm(t, ad::add(mha, x), p.norm1_scale, p.norm1_shift);
    ad::Tensor ff = detail::feed_forward(t, xh, p.w1, p.b1, p.w2, p.b2);
    return detail::norm(t, ad::add(ff, xh), p.norm2_scale, p.norm2_shift);
}

// -------------------------------------------------------------------- gate

struct GateResult {
    int index = 0;  // zero-based expert
    std::vector<double> one_hot;
};

/// Half-open intervals [(i-1)beta, i*beta) over tightness - min; the maximum
/// itself belongs to the last expert.
inline GateResult gate(double tightness, const ModelConfig& config) {
    const double lo = config.tightness_min, hi = config.tightness_max;
    if (!(tightness >= lo && tightness <= hi)) throw DomainError("tightness outside the gate range");
    const int m = config.experts;
    const double beta = (hi - lo) / m;
    int i = static_cast<int>(std::floor((tightness - lo) / beta));
    // Guard against floor() landing one interval off near a boundary.
    while (i > 0 && tightness - lo < i * beta) --i;
    while (i + 1 < m && tightness - lo >= (i + 1) * beta) ++i;
    i = std::clamp(i, 0, m - 1);
    GateResult g;
    g.index = i;
    g.one_hot.assign(static_cast<std::size_t>(m), 0.0);
    g.one_hot[static_cast<std::size_t>(i)] = 1.0;
    return g;
}

/// Tightness seen by the gate: capacity for CVRP/OVRP, alpha for CVRPTW.
inline double instance_tightness(const Instance& inst, const ModelConfig& config) {
    switch (inst.kind) {
        case ProblemKind::CVRP:
        case ProblemKind::OVRP: return inst.capacity;
        case ProblemKind::CVRPTW: return inst.alpha;
        case ProblemKind::TSP: break;
    }
    return config.tightness_min;
}

// ------------------------------------------------------------------ experts

/// Scores of rows [first_row, end) of the token matrix: 1 x k logits.
inline ad::Tensor expert_logits(ad::Tape& t, ExpertLayerParams& e, ad::Tensor x, ad::Index first_row, int heads) {
    for (auto& layer : e.layers) x = attention_layer(t, layer, x, x, heads);
    ad::Tensor rows = ad::slice_rows(x, first_row, x.rows() - first_row);
    ad::Tensor scores = ad::matmul(rows, t.param(e.w_out));  // k x 1
    ad::Tensor bias = ad::concat_rows(std::vector<ad::Tensor>(static_cast<std::size_t>(rows.rows()), t.param(e.b_out)));
    return ad::transpose(ad::add(scores, bias));
}

inline ad::Tensor expert_forward(ad::Tape& t, ExpertLayerParams& e, ad::Tensor x, ad::Index first_row, int heads,
                                 const ad::Mask* allowed = nullptr) {
    ad::Tensor logits = expert_logits(t, e, x, first_row, heads);
    return allowed ? ad::masked_row_softmax(logits, *allowed) : ad::row_softmax(logits);
}

/// Sum over experts of G_i(C) E_i(H); only the gated expert is evaluated since
/// the gate is one-hot.
inline ad::Tensor mem_forward(ad::Tape& t, Model& model, ad::Tensor x, double tightness, ad::Index first_row,
                              const ad::Mask* allowed = nullptr) {
    const auto g = gate(tightness, model.config);
    return expert_forward(t, model.experts[static_cast<std::size_t>(g.index)], x, first_row, model.config.heads, allowed);
}

/// C_l * tanh(h^ H^T / sqrt(d)) with h^ = FF(h') + h', h' = MHA(h_c, H).
inline ad::Tensor pomo_expert_logits(ad::Tape& t, ad::Tensor hc, ad::Tensor h, PomoExpertParams& e, double clip,
                                     int heads) {
    ad::Tensor hp = multi_head_attention(t, hc, h, e.wq, e.wk, e.wv, e.wo, heads);
    ad::Tensor hh = ad::add(detail::feed_forward(t, hp, e.w1, e.b1, e.w2, e.b2), hp);
    const double inv = 1.0 / std::sqrt(static_cast<double>(h.cols()));
    return ad::scale(ad::tanh(ad::scale(ad::matmul_nt(hh, h), inv)), clip);
}

inline ad::Tensor pomo_expert_forward(ad::Tape& t, ad::Tensor hc, ad::Tensor h, PomoExpertParams& e, double clip,
                                      int heads, const ad::Mask* allowed = nullptr) {
    ad::Tensor logits = pomo_expert_logits(t, hc, h, e, clip, heads);
    return allowed ? ad::masked_row_softmax(logits, *allowed) : ad::row_softmax(logits);
}

// ------------------------------------------------------------------ encoder

/// Per-node raw features; demand is scaled by capacity and times by the
/// depot closing time.
inline ad::Matrix node_features(const Instance& inst) {
    ad::Matrix f = ad::Matrix::Zero(static_cast<ad::Index>(inst.size()), kNodeFeatures);
    const bool tw = inst.kind == ProblemKind::CVRPTW;
    const double horizon = tw && inst.nodes[0].late > 0.0 ? inst.nodes[0].late : 1.0;
    const double cap = has_depot(inst.kind) && inst.capacity > 0 ? inst.capacity : 1.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const Node& n = inst.nodes[i];
        const auto r = static_cast<ad::Index>(i);
        f(r, 0) = n.x;
        f(r, 1) = n.y;
        if (has_depot(inst.kind)) f(r, 2) = n.demand / cap;
        if (tw) {
            f(r, 3) = n.early / horizon;
            f(r, 4) = std::min(n.late, inst.nodes[0].late) / horizon;
            f(r, 5) = n.service / horizon;
        }
    }
    return f;
}

/// (n+1) x d node embeddings. The depot has its own input projection.
inline ad::Tensor encode(ad::Tape& t, Model& model, const Instance& inst) {
    const ad::Matrix f = node_features(inst);
    ad::Tensor h;
    if (has_depot(inst.kind)) {
        ad::Tensor depot = ad::add_row(ad::matmul(t.constant(f.topRows(1)), t.param(model.depot_proj)), t.param(model.depot_bias));
        if (f.rows() > 1) {
            ad::Tensor rest = ad::add_row(ad::matmul(t.constant(f.bottomRows(f.rows() - 1)), t.param(model.node_proj)),
                                          t.param(model.node_bias));
            h = ad::concat_rows({depot, rest});
        } else {
            h = depot;
        }
    } else {
        h = ad::add_row(ad::matmul(t.constant(f), t.param(model.node_proj)), t.param(model.node_bias));
    }
    for (auto& layer : model.encoder) h = attention_layer(t, layer, h, h, model.config.heads);
    return h;
}

// ------------------------------------------------------------ decoder state

struct DecoderState {
    const Instance* inst = nullptr;
    std::vector<char> visited;  // customers (every node for TSP)
    int first = 0;              // first node of the tour
    int current = 0;
    int remaining = 0;          // capacity left on the current sub-tour
    double time = 0.0;          // departure time from the current node
    int unvisited = 0;
    double tightness = 0.0;
    std::vector<int> visits;

    bool done() const { return unvisited == 0; }
    bool at_depot() const { return has_depot(inst->kind) && current == 0; }
};

inline DecoderState initial_state(const Instance& inst, const ModelConfig& config) {
    DecoderState s;
    s.inst = &inst;
    s.visited.assign(inst.size(), 0);
    s.tightness = instance_tightness(inst, config);
    s.remaining = inst.capacity;
    if (has_depot(inst.kind)) {
        s.visited[0] = 1;
        s.unvisited = static_cast<int>(inst.size()) - 1;
        s.visits.push_back(0);
    } else {
        s.unvisited = static_cast<int>(inst.size());
        s.first = -1;
        s.current = -1;
    }
    return s;
}

/// Candidate nodes: the depot (depot kinds) followed by unvisited nodes.
inline std::vector<int> candidates(const DecoderState& s) {
    std::vector<int> out;
    const int n = static_cast<int>(s.inst->size());
    if (has_depot(s.inst->kind)) out.push_back(0);
    for (int i = 0; i < n; ++i)
        if (!s.visited[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

/// Whether node j may be appended next. Customers need spare capacity and, for
/// CVRPTW, an arrival within the window plus a feasible direct return.
inline bool action_allowed(const DecoderState& s, int j) {
    const Instance& inst = *s.inst;
    if (!has_depot(inst.kind)) return !s.visited[static_cast<std::size_t>(j)];
    if (j == 0) return s.current != 0;
    if (s.visited[static_cast<std::size_t>(j)]) return false;
    const Node& n = inst.nodes[static_cast<std::size_t>(j)];
    if (n.demand > s.remaining) return false;
    if (inst.kind == ProblemKind::CVRPTW) {
        const double arrival = s.time + distance(inst, s.current, j);
        if (is_late(arrival, n.late)) return false;
        const double back = std::max(arrival, n.early) + n.service + distance(inst, j, 0);
        if (is_late(back, inst.nodes[0].late)) return false;
    }
    return true;
}

inline ad::Mask allowed_mask(const DecoderState& s, const std::vector<int>& cands) {
    ad::Mask m(1, static_cast<ad::Index>(cands.size()));
    bool any = false;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        m(0, static_cast<ad::Index>(i)) = action_allowed(s, cands[i]);
        any = any || m(0, static_cast<ad::Index>(i));
    }
    if (!any) throw DeadEndError("no feasible action");
    return m;
}

inline void apply_action(DecoderState& s, int j) {
    const Instance& inst = *s.inst;
    if (!action_allowed(s, j)) throw InfeasibleError("action " + std::to_string(j) + " is masked");
    if (!has_depot(inst.kind)) {
        if (s.first < 0) s.first = j;
        s.visited[static_cast<std::size_t>(j)] = 1;
        --s.unvisited;
        s.current = j;
        s.visits.push_back(j);
        return;
    }
    if (j == 0) {
        s.current = 0;
        s.remaining = inst.capacity;
        s.time = 0.0;
        s.visits.push_back(0);
        return;
    }
    const Node& n = inst.nodes[static_cast<std::size_t>(j)];
    if (inst.kind == ProblemKind::CVRPTW) {
        const double arrival = s.time + distance(inst, s.current, j);
        s.time = std::max(arrival, n.early) + n.service;
    }
    s.remaining -= n.demand;
    s.visited[static_cast<std::size_t>(j)] = 1;
    --s.unvisited;
    s.current = j;
    s.visits.push_back(j);
}

/// Completed solution in file convention (closing depot for closed kinds).
inline Solution finish_solution(const DecoderState& s) {
    Solution sol{s.visits};
    if ((s.inst->kind == ProblemKind::CVRP || s.inst->kind == ProblemKind::CVRPTW) && sol.visits.back() != 0)
        sol.visits.push_back(0);
    return sol;
}

inline ad::Matrix context_features(const DecoderState& s, const ModelConfig& config) {
    ad::Matrix c = ad::Matrix::Zero(1, kContextFeatures);
    const Instance& inst = *s.inst;
    if (has_depot(inst.kind)) {
        c(0, 0) = static_cast<double>(s.remaining) / inst.capacity;
        if (inst.kind == ProblemKind::CVRPTW) c(0, 1) = s.time / inst.nodes[0].late;
        c(0, 2) = (s.tightness - config.tightness_min) / (config.tightness_max - config.tightness_min);
    }
    return c;
}

// ------------------------------------------------------------------- decode

struct StepOutput {
    std::vector<int> candidates;
    ad::Mask allowed;
    ad::Tensor logits;  // 1 x k, unmasked
};

/// One decoding step: the policy's logits over candidates at state s.
inline StepOutput decode_step(ad::Tape& t, Model& model, ad::Tensor h, const DecoderState& s) {
    if (s.done()) throw DomainError("decoding an already complete tour");
    const ModelConfig& cfg = model.config;
    StepOutput out;
    out.candidates = candidates(s);
    out.allowed = allowed_mask(s, out.candidates);
    const bool started = s.current >= 0;
    const int first = started ? s.first : 0;
    const int last = started ? s.current : 0;
    ad::Tensor ctx = t.constant(context_features(s, cfg));
    ad::Tensor first_h = ad::gather_rows(h, {first});
    ad::Tensor last_h = ad::gather_rows(h, {last});
    ad::Tensor cand_h = ad::gather_rows(h, out.candidates);
    const int e = gate(s.tightness, cfg).index;
    if (cfg.decoder == DecoderKind::Heavy) {
        ad::Tensor first_tok = ad::matmul(first_h, t.param(model.first_proj));
        ad::Tensor last_tok = ad::add_row(ad::matmul(ad::concat_cols({last_h, ctx}), t.param(model.last_proj)),
                                          t.param(model.last_bias));
        ad::Tensor x = ad::concat_rows({first_tok, last_tok, cand_h});
        for (auto& layer : model.decoder) x = attention_layer(t, layer, x, x, cfg.heads);
        out.logits = expert_logits(t, model.experts[static_cast<std::size_t>(e)], x, 2, cfg.heads);
    } else {
        ad::Tensor hc = ad::concat_cols({first_h, last_h, ctx});
        out.logits = pomo_expert_logits(t, hc, cand_h, model.pomo_experts[static_cast<std::size_t>(e)], cfg.logit_clip,
                                        cfg.heads);
    }
    return out;
}

inline ad::Tensor step_probabilities(const StepOutput& step) { return ad::masked_row_softmax(step.logits, step.allowed); }

enum class DecodeMode { Greedy, Sample };

struct RolloutResult {
    Solution solution;
    double cost = 0.0;
    double log_prob = 0.0;            // sum over policy-chosen steps
    std::vector<double> step_log_probs;
    ad::Tensor log_prob_tensor;       // on the tape when one was supplied
};

namespace detail {

inline int choose(const ad::Matrix& probs, const ad::Mask& allowed, DecodeMode mode, CounterRng* rng) {
    const ad::Index k = probs.cols();
    if (mode == DecodeMode::Greedy || !rng) {
        ad::Index best = -1;
        for (ad::Index i = 0; i < k; ++i)
            if (allowed(0, i) && (best < 0 || probs(0, i) > probs(0, best))) best = i;
        return static_cast<int>(best);
    }
    const double u = rng->uniform();
    double acc = 0.0;
    ad::Index last = -1;
    for (ad::Index i = 0; i < k; ++i) {
        if (!allowed(0, i)) continue;
        last = i;
        acc += probs(0, i);
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(last);
}

}  // namespace detail

/// Decodes one tour from precomputed embeddings h (built on tape t). The first
/// customer (first node for TSP) may be forced; forced moves add no
/// log-probability. Steps with a single allowed action are taken directly.
inline RolloutResult rollout_from(ad::Tape& t, Model& model, ad::Tensor h, const Instance& inst, DecodeMode mode,
                                  CounterRng* rng = nullptr, std::optional<int> forced_first = std::nullopt) {
    DecoderState s = initial_state(inst, model.config);
    if (!has_depot(inst.kind)) apply_action(s, forced_first.value_or(0));
    else if (forced_first) apply_action(s, *forced_first);
    RolloutResult r;
    std::vector<ad::Tensor> picked;
    while (!s.done()) {
        const auto cands = candidates(s);
        const auto allowed = allowed_mask(s, cands);
        if (allowed.count() == 1) {
            ad::Index only = 0;
            while (!allowed(0, only)) ++only;
            apply_action(s, cands[static_cast<std::size_t>(only)]);
            continue;
        }
        const StepOutput step = decode_step(t, model, h, s);
        const ad::Tensor logp = ad::masked_log_softmax(step.logits, step.allowed);
        const ad::Matrix probs = logp.value().array().exp().matrix();
        const int c = detail::choose(probs, step.allowed, mode, rng);
        r.step_log_probs.push_back(logp.value()(0, c));
        r.log_prob += logp.value()(0, c);
        if (t.recording()) picked.push_back(ad::pick(logp, 0, c));
        apply_action(s, step.candidates[static_cast<std::size_t>(c)]);
    }
    r.solution = finish_solution(s);
    r.cost = solution_cost(inst, r.solution);
    if (t.recording() && !picked.empty()) {
        r.log_prob_tensor = ad::sum(ad::concat_rows(picked));
    }
    return r;
}

inline RolloutResult rollout(Model& model, const Instance& inst, DecodeMode mode = DecodeMode::Greedy,
                             CounterRng* rng = nullptr) {
    ad::Tape t(false);
    const ad::Tensor h = encode(t, model, inst);
    return rollout_from(t, model, h, inst, mode, rng);
}

/// First moves for k multistart rollouts: distinct customers (nodes for TSP)
/// in index order, cycling when k exceeds their number.
inline std::vector<int> multistart_firsts(const Instance& inst, int k) {
    const int lo = has_depot(inst.kind) ? 1 : 0;
    const int count = static_cast<int>(inst.size()) - lo;
    std::vector<int> out;
    for (int i = 0; i < k; ++i) out.push_back(lo + i % count);
    return out;
}

inline std::vector<RolloutResult> pomo_multistart(Model& model, const Instance& inst, int k,
                                                  DecodeMode mode = DecodeMode::Greedy, CounterRng* rng = nullptr) {
    if (k < 1) throw DomainError("multistart needs k >= 1");
    ad::Tape t(false);
    const ad::Tensor h = encode(t, model, inst);
    std::vector<RolloutResult> out;
    for (int first : multistart_firsts(inst, k)) {
        // CVRPTW: skip starts the mask forbids (cannot happen for generated data).
        DecoderState probe = initial_state(inst, model.config);
        if (!action_allowed(probe, first)) continue;
        out.push_back(rollout_from(t, model, h, inst, mode, rng, first));
    }
    return out;
}

/// Best of k greedy multistart rollouts.
inline Solution solve_with_model(Model& model, const Instance& inst, int starts = 1) {
    if (starts <= 1) return rollout(model, inst).solution;
    auto rs = pomo_multistart(model, inst, starts);
    auto best = std::min_element(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.cost < b.cost; });
    return best->solution;
}

}  // namespace vrplab
