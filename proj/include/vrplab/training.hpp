#pragma once

// Training under varying constraint tightness: supervised teacher forcing on
// oracle labels and multistart policy gradient, both driven by a Trainer that
// can checkpoint and resume at any batch boundary.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrplab/baselines.hpp"
#include "vrplab/checkpoint.hpp"
#include "vrplab/generator.hpp"
#include "vrplab/policy.hpp"

namespace vrplab {

struct TrainingError : Error { using Error::Error; };

// ---------------------------------------------------------------- optimizer

/// Adam with bias correction. Parameters that received no gradient since
/// their last zero_grad() are skipped entirely, moments and step count
/// included, so unused experts stay bit-identical.
class Adam {
public:
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit Adam(std::size_t count = 0) : moments_(count) {}

    void step(const std::vector<ad::Parameter*>& params) {
        if (moments_.size() != params.size()) moments_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            ad::Parameter& p = *params[i];
            if (!p.touched) continue;
            MomentState& s = moments_[i];
            if (s.m.size() == 0) {
                s.m = ad::Matrix::Zero(p.value.rows(), p.value.cols());
                s.v = ad::Matrix::Zero(p.value.rows(), p.value.cols());
            }
            ++s.step;
            s.m = beta1 * s.m + (1.0 - beta1) * p.grad;
            s.v = beta2 * s.v + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
            p.value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps);
        }
    }

    std::vector<MomentState>& moments() { return moments_; }
    const std::vector<MomentState>& moments() const { return moments_; }

private:
    std::vector<MomentState> moments_;
};

// --------------------------------------------------------------- train spec

enum class Regime { Supervised, PolicyGradient };
enum class Arm { FixedC, VCT, VCTMEM };

inline std::string to_string(Regime r) { return r == Regime::Supervised ? "supervised" : "policy_gradient"; }
inline std::string to_string(Arm a) {
    switch (a) {
        case Arm::FixedC: return "fixed";
        case Arm::VCT: return "vct";
        case Arm::VCTMEM: return "vct_mem";
    }
    return "vct_mem";
}
inline Regime parse_regime(const std::string& s) {
    if (s == "supervised") return Regime::Supervised;
    if (s == "policy_gradient" || s == "pg") return Regime::PolicyGradient;
    throw FormatError("unknown regime: " + s);
}
inline Arm parse_arm(const std::string& s) {
    if (s == "fixed") return Arm::FixedC;
    if (s == "vct") return Arm::VCT;
    if (s == "vct_mem") return Arm::VCTMEM;
    throw FormatError("unknown arm: " + s);
}

struct TrainSpec {
    Regime regime = Regime::Supervised;
    Arm arm = Arm::VCTMEM;
    ProblemKind kind = ProblemKind::CVRP;
    int n = 20;
    int train_size = 10000;
    int epochs = 10;
    int batch_size = 64;
    double learning_rate = 1e-4;
    double lr_decay = 0.9;  // applied once per epoch in both regimes
    Assignment assignment = Assignment::InstanceLevel;
    bool resample_each_epoch = false;  // supervised data is fixed per dataset by default
    int fixed_capacity = 50;
    int capacity_min = 10, capacity_max = 500;
    double fixed_alpha = 1.0;
    double alpha_min = 0.2, alpha_max = 3.0;
    int starts = 8;  // policy-gradient rollouts per instance
    std::uint64_t seed = 1;
    int eval_size = 50;  // held-out instances per bucket
    int eval_every = 1;  // epochs
    ModelConfig model = ModelConfig::desk();

    void validate() const {
        if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw DomainError("lr decay must lie in (0, 1]");
        if (epochs < 0 || batch_size < 1 || train_size < 1 || n < 1) throw DomainError("invalid training sizes");
        if (regime == Regime::PolicyGradient && starts < 2) throw DomainError("policy gradient needs at least two starts");
        if (eval_size < 0 || eval_every < 1) throw DomainError("invalid evaluation settings");
        model.validate();
    }

    /// Desk defaults: n=20, 10^4 instances, batch 64, 10 epochs.
    static TrainSpec desk() { return {}; }

    static TrainSpec paper() {
        TrainSpec s;
        s.n = 100;
        s.train_size = 1000000;
        s.epochs = 40;
        s.batch_size = 512;
        s.model = ModelConfig::paper();
        return s;
    }

    /// Policy-gradient CVRPTW setting with the single-query decoder.
    static TrainSpec desk_tw() {
        TrainSpec s;
        s.regime = Regime::PolicyGradient;
        s.kind = ProblemKind::CVRPTW;
        s.train_size = 2000;
        s.model = ModelConfig::pomo_tw();
        return s;
    }

    static TrainSpec paper_tw() {
        TrainSpec s = desk_tw();
        s.n = 100;
        s.train_size = 10000;
        s.epochs = 1000;
        s.batch_size = 64;
        s.starts = 100;
        s.model.embed_dim = 128;
        s.model.ff_dim = 512;
        s.model.heads = 8;
        s.model.encoder_layers = 6;
        return s;
    }

    bool tightness_is_alpha() const { return kind == ProblemKind::CVRPTW; }

    /// Generator spec for the training data of this arm.
    GenSpec generator() const {
        GenSpec g;
        g.kind = kind;
        g.n = n;
        g.assignment = assignment;
        g.seed = seed;
        g.count = train_size;
        const bool fixed = arm == Arm::FixedC;
        if (tightness_is_alpha()) {
            g.capacity_min = g.capacity_max = fixed_capacity;
            g.alpha_min = fixed ? fixed_alpha : alpha_min;
            g.alpha_max = fixed ? fixed_alpha : alpha_max;
        } else {
            g.capacity_min = fixed ? fixed_capacity : capacity_min;
            g.capacity_max = fixed ? fixed_capacity : capacity_max;
        }
        return g;
    }

    /// The model configuration implied by the arm: MEM only in the VCT+MEM arm.
    ModelConfig model_config() const {
        ModelConfig c = model;
        if (arm != Arm::VCTMEM) c.experts = 1;
        return c;
    }
};

// -------------------------------------------------------------------- json

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"embed_dim", c.embed_dim},           {"ff_dim", c.ff_dim},
            {"heads", c.heads},                   {"encoder_layers", c.encoder_layers},
            {"decoder_layers", c.decoder_layers}, {"experts", c.experts},
            {"expert_depth", c.expert_depth},     {"tightness_min", c.tightness_min},
            {"tightness_max", c.tightness_max},   {"logit_clip", c.logit_clip},
            {"decoder", to_string(c.decoder)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    try {
        ModelConfig c;
        c.embed_dim = j.at("embed_dim");
        c.ff_dim = j.at("ff_dim");
        c.heads = j.at("heads");
        c.encoder_layers = j.at("encoder_layers");
        c.decoder_layers = j.at("decoder_layers");
        c.experts = j.at("experts");
        c.expert_depth = j.at("expert_depth");
        c.tightness_min = j.at("tightness_min");
        c.tightness_max = j.at("tightness_max");
        c.logit_clip = j.at("logit_clip");
        c.decoder = parse_decoder(j.at("decoder"));
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
}

inline nlohmann::json to_json(const TrainSpec& s) {
    return {{"regime", to_string(s.regime)},
            {"arm", to_string(s.arm)},
            {"kind", std::string(to_string(s.kind))},
            {"n", s.n},
            {"train_size", s.train_size},
            {"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"learning_rate", s.learning_rate},
            {"lr_decay", s.lr_decay},
            {"assignment", s.assignment == Assignment::InstanceLevel ? "instance" : "batch"},
            {"resample_each_epoch", s.resample_each_epoch},
            {"fixed_capacity", s.fixed_capacity},
            {"capacity_min", s.capacity_min},
            {"capacity_max", s.capacity_max},
            {"fixed_alpha", s.fixed_alpha},
            {"alpha_min", s.alpha_min},
            {"alpha_max", s.alpha_max},
            {"starts", s.starts},
            {"seed", s.seed},
            {"eval_size", s.eval_size},
            {"eval_every", s.eval_every},
            {"model", to_json(s.model)}};
}

inline TrainSpec train_spec_from_json(const nlohmann::json& j) {
    try {
        TrainSpec s;
        s.regime = parse_regime(j.at("regime"));
        s.arm = parse_arm(j.at("arm"));
        s.kind = parse_kind(j.at("kind").get<std::string>());
        s.n = j.at("n");
        s.train_size = j.at("train_size");
        s.epochs = j.at("epochs");
        s.batch_size = j.at("batch_size");
        s.learning_rate = j.at("learning_rate");
        s.lr_decay = j.at("lr_decay");
        s.assignment = j.at("assignment") == "batch" ? Assignment::BatchLevel : Assignment::InstanceLevel;
        s.resample_each_epoch = j.at("resample_each_epoch");
        s.fixed_capacity = j.at("fixed_capacity");
        s.capacity_min = j.at("capacity_min");
        s.capacity_max = j.at("capacity_max");
        s.fixed_alpha = j.at("fixed_alpha");
        s.alpha_min = j.at("alpha_min");
        s.alpha_max = j.at("alpha_max");
        s.starts = j.at("starts");
        s.seed = j.at("seed");
        s.eval_size = j.at("eval_size");
        s.eval_every = j.at("eval_every");
        s.model = model_config_from_json(j.at("model"));
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("train spec: ") + e.what());
    }
}

// ------------------------------------------------------------ model files

inline CheckpointData model_checkpoint(Model& model, const nlohmann::json& extra = {}) {
    CheckpointData d;
    d.metadata = {{"model", to_json(model.config)}};
    if (!extra.is_null()) d.metadata["trainer"] = extra;
    for (auto* p : model.parameters()) {
        d.names.push_back(p->name);
        d.values.push_back(p->value);
    }
    return d;
}

inline void save_model(const std::string& path, Model& model) { save_checkpoint(path, model_checkpoint(model)); }

inline Model model_from_checkpoint(const CheckpointData& d) {
    if (!d.metadata.contains("model")) throw FormatError("checkpoint has no model config");
    Model m = Model::init(model_config_from_json(d.metadata.at("model")), 0);
    restore_parameters(d, m.parameters());
    return m;
}

inline Model load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

// --------------------------------------------------------------- sampling

/// One training batch under the spec's tightness assignment.
inline std::vector<Instance> vct_sample(const GenSpec& spec, int batch_size, std::uint64_t batch_index) {
    return gen_batch(spec, batch_size, batch_index);
}

// ------------------------------------------------------------ supervised

/// Number of label steps that carry a loss term.
inline int count_decisions(const Instance& inst, const Solution& label, const ModelConfig& config) {
    DecoderState s = initial_state(inst, config);
    if (!has_depot(inst.kind)) apply_action(s, label.visits.at(0));
    int count = 0;
    for (std::size_t i = 1; i < label.visits.size() && !s.done(); ++i) {
        if (allowed_mask(s, candidates(s)).count() > 1) ++count;
        apply_action(s, label.visits[i]);
    }
    return count;
}

/// Sum over label decisions of -log p(label step); the first TSP node is forced.
inline ad::Tensor teacher_forced_nll(ad::Tape& t, Model& model, const Instance& inst, const Solution& label,
                                     int* decisions = nullptr) {
    ad::Tensor h = encode(t, model, inst);
    DecoderState s = initial_state(inst, model.config);
    std::vector<ad::Tensor> terms;
    if (!has_depot(inst.kind)) apply_action(s, label.visits.at(0));
    for (std::size_t i = 1; i < label.visits.size() && !s.done(); ++i) {
        const int target = label.visits[i];
        const auto cands = candidates(s);
        const auto allowed = allowed_mask(s, cands);
        const auto it = std::find(cands.begin(), cands.end(), target);
        if (it == cands.end() || !allowed(0, it - cands.begin()))
            throw ad::MaskError("label step " + std::to_string(i) + " selects a masked node");
        if (allowed.count() > 1) {
            const StepOutput step = decode_step(t, model, h, s);
            const ad::Tensor lp = ad::masked_log_softmax(step.logits, step.allowed);
            terms.push_back(ad::pick(lp, 0, it - cands.begin()));
        }
        apply_action(s, target);
    }
    if (!s.done()) throw ad::MaskError("label does not visit every customer");
    if (decisions) *decisions = static_cast<int>(terms.size());
    if (terms.empty()) return t.constant(ad::Matrix::Zero(1, 1));
    return ad::scale(ad::sum(ad::concat_rows(terms)), -1.0);
}

/// Mean per-step cross-entropy over the batch; accumulates gradients only.
inline double supervised_gradients(Model& model, const std::vector<Instance>& batch, const std::vector<Solution>& labels) {
    int total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) total += count_decisions(batch[i], labels[i], model.config);
    if (total == 0) return 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ad::Tape t;
        ad::Tensor nll = ad::scale(teacher_forced_nll(t, model, batch[i], labels[i]), 1.0 / total);
        loss += nll.item();
        t.backward(nll);
    }
    return loss;
}

inline double supervised_step(Model& model, Adam& opt, const std::vector<Instance>& batch,
                              const std::vector<Solution>& labels) {
    model.zero_grad();
    const double loss = supervised_gradients(model, batch, labels);
    opt.step(model.parameters());
    return loss;
}

// ------------------------------------------------------- policy gradient

/// Advantages of one instance's rollouts: mean cost minus own cost, so that
/// cheaper-than-average tours are reinforced.
inline std::vector<double> multistart_advantages(const std::vector<double>& costs) {
    const double mean = std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
    std::vector<double> adv;
    for (double c : costs) adv.push_back(mean - c);
    return adv;
}

/// Loss mean_i(advantage_i * -log p_i) over all sampled multistart rollouts;
/// accumulates gradients. rng_base indexes the sampling streams.
inline double policy_gradients(Model& model, const std::vector<Instance>& batch, int starts, std::uint64_t seed,
                               std::uint64_t rng_base) {
    double loss = 0.0;
    const double norm = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ad::Tape t;
        const Instance& inst = batch[i];
        ad::Tensor h = encode(t, model, inst);
        CounterRng rng(seed, StreamTag::Sampling, rng_base + i);
        std::vector<RolloutResult> rs;
        for (int first : multistart_firsts(inst, starts)) {
            DecoderState probe = initial_state(inst, model.config);
            if (!action_allowed(probe, first)) continue;
            rs.push_back(rollout_from(t, model, h, inst, DecodeMode::Sample, &rng, first));
        }
        if (rs.size() < 2) continue;
        std::vector<double> costs;
        for (const auto& r : rs) costs.push_back(r.cost);
        const auto adv = multistart_advantages(costs);
        std::vector<ad::Tensor> terms;
        for (std::size_t k = 0; k < rs.size(); ++k)
            if (rs[k].log_prob_tensor.valid() && adv[k] != 0.0)
                terms.push_back(ad::scale(rs[k].log_prob_tensor, -adv[k] * norm / static_cast<double>(rs.size())));
        for (std::size_t k = 0; k < rs.size(); ++k) loss += -adv[k] * rs[k].log_prob * norm / static_cast<double>(rs.size());
        if (terms.empty()) continue;
        t.backward(ad::sum(ad::concat_rows(terms)));
    }
    return loss;
}

inline double policy_gradient_step(Model& model, Adam& opt, const std::vector<Instance>& batch, int starts,
                                   std::uint64_t seed, std::uint64_t rng_base) {
    if (starts < 2) throw DomainError("policy gradient needs at least two starts");
    model.zero_grad();
    const double loss = policy_gradients(model, batch, starts, seed, rng_base);
    opt.step(model.parameters());
    return loss;
}

// ------------------------------------------------------------- evaluation

struct BucketResult {
    std::string label;  // e.g. "C=50" or "alpha=1"
    double tightness = 0.0;
    double mean_cost = 0.0;
    double mean_reference = 0.0;
    double mean_gap_pct = 0.0;
    int instances = 0;
    double wall_ms = 0.0;
};

struct EvalReport {
    std::vector<BucketResult> buckets;
    double average_gap() const {
        if (buckets.empty()) return 0.0;
        double s = 0.0;
        for (const auto& b : buckets) s += b.mean_gap_pct;
        return s / static_cast<double>(buckets.size());
    }
};

inline const std::vector<int>& eval_capacities() {
    static const std::vector<int> caps{10, 50, 100, 200, 500};
    return caps;
}

inline const std::vector<double>& eval_alphas() {
    static const std::vector<double> alphas{0.2, 1.0, 3.0};
    return alphas;
}

inline std::string format_tightness(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

inline std::string bucket_label(ProblemKind kind, double tightness) {
    return (kind == ProblemKind::CVRPTW ? "alpha=" : "C=") + format_tightness(tightness);
}

/// Held-out bucket: fixed tightness, seed separate from training streams.
struct EvalBucket {
    std::string label;
    double tightness = 0.0;
    std::vector<Instance> instances;
    std::vector<double> reference;
};

inline std::uint64_t eval_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x5EEDE7A1ULL); }

inline std::vector<EvalBucket> make_eval_buckets(ProblemKind kind, int n, int count, std::uint64_t seed,
                                                 int capacity_for_alpha = 50) {
    std::vector<EvalBucket> out;
    std::vector<double> levels;
    if (kind == ProblemKind::CVRPTW) levels = eval_alphas();
    else
        for (int c : eval_capacities()) levels.push_back(c);
    for (double level : levels) {
        GenSpec g;
        g.kind = kind;
        g.n = n;
        g.count = count;
        g.seed = eval_seed(seed);
        if (kind == ProblemKind::CVRPTW) {
            g.capacity_min = g.capacity_max = capacity_for_alpha;
            g.alpha_min = g.alpha_max = level;
        } else {
            g.capacity_min = g.capacity_max = static_cast<int>(level);
        }
        EvalBucket b;
        b.label = bucket_label(kind, level);
        b.tightness = level;
        b.instances = gen_dataset(g);
        for (const auto& inst : b.instances) b.reference.push_back(solution_cost(inst, oracle(inst)));
        out.push_back(std::move(b));
    }
    return out;
}

using SolveFn = std::function<Solution(const Instance&)>;

inline EvalReport evaluate(const std::vector<EvalBucket>& buckets, const SolveFn& solve) {
    EvalReport report;
    for (const auto& b : buckets) {
        BucketResult r;
        r.label = b.label;
        r.tightness = b.tightness;
        r.instances = static_cast<int>(b.instances.size());
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < b.instances.size(); ++i) {
            const Solution sol = solve(b.instances[i]);
            const auto report_i = validate(b.instances[i], sol);
            if (!report_i.feasible) throw InfeasibleError("evaluated solution is infeasible: " + report_i.violations[0].message);
            const double c = solution_cost(b.instances[i], sol);
            r.mean_cost += c;
            r.mean_reference += b.reference[i];
            r.mean_gap_pct += gap(c, b.reference[i]);
        }
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (r.instances > 0) {
            r.mean_cost /= r.instances;
            r.mean_reference /= r.instances;
            r.mean_gap_pct /= r.instances;
        }
        report.buckets.push_back(r);
    }
    return report;
}

inline EvalReport evaluate_model(Model& model, const std::vector<EvalBucket>& buckets) {
    return evaluate(buckets, [&](const Instance& inst) { return rollout(model, inst).solution; });
}

// ---------------------------------------------------------------- trainer

struct Cursor {
    int epoch = 0;
    int batch = 0;  // next batch within the epoch
    std::uint64_t steps = 0;
};

struct MetricsRow {
    int epoch = 0;
    std::uint64_t step = 0;
    double loss = 0.0;
    std::vector<double> bucket_gaps;  // empty on plain step rows
};

class Trainer {
public:
    explicit Trainer(TrainSpec spec)
        : spec_((spec.validate(), spec)), model_(Model::init(spec_.model_config(), spec_.seed)), opt_() {
        opt_.lr = spec_.learning_rate;
        prepare();
    }

    const TrainSpec& spec() const { return spec_; }
    Model& model() { return model_; }
    Adam& optimizer() { return opt_; }
    const Cursor& cursor() const { return cursor_; }
    int batches_per_epoch() const { return (spec_.train_size + spec_.batch_size - 1) / spec_.batch_size; }
    bool finished() const { return cursor_.epoch >= spec_.epochs; }

    /// Changes the total epoch count, e.g. to extend a resumed run.
    void set_epochs(int epochs) {
        if (epochs < cursor_.epoch) throw DomainError("cannot end training before the current epoch");
        spec_.epochs = epochs;
    }
    double current_lr() const { return spec_.learning_rate * std::pow(spec_.lr_decay, cursor_.epoch); }

    /// Next training batch and its labels (labels empty in policy-gradient mode).
    std::pair<std::vector<Instance>, std::vector<Solution>> batch_at(const Cursor& c) {
        const auto order = epoch_order(c.epoch);
        const int b = order[static_cast<std::size_t>(c.batch)];
        const GenSpec g = spec_.generator();
        const int first = b * spec_.batch_size;
        const int size = std::min(spec_.batch_size, spec_.train_size - first);
        std::vector<Instance> insts;
        std::vector<Solution> labels;
        if (spec_.regime == Regime::Supervised && !spec_.resample_each_epoch) {
            for (int i = 0; i < size; ++i) {
                insts.push_back(data_[static_cast<std::size_t>(first + i)]);
                labels.push_back(labels_[static_cast<std::size_t>(first + i)]);
            }
        } else {
            const std::uint64_t bi = static_cast<std::uint64_t>(c.epoch) * static_cast<std::uint64_t>(batches_per_epoch()) +
                                     static_cast<std::uint64_t>(b);
            insts = vct_sample(g, spec_.batch_size, bi);
            insts.resize(static_cast<std::size_t>(size));
            if (spec_.regime == Regime::Supervised)
                for (const auto& inst : insts) labels.push_back(oracle(inst));
        }
        return {insts, labels};
    }

    /// One optimisation step on the next batch; returns its loss.
    double step() {
        if (finished()) throw TrainingError("training already finished");
        opt_.lr = current_lr();
        auto [insts, labels] = batch_at(cursor_);
        double loss;
        if (spec_.regime == Regime::Supervised) {
            loss = supervised_step(model_, opt_, insts, labels);
        } else {
            const std::uint64_t base = cursor_.steps * static_cast<std::uint64_t>(spec_.batch_size);
            loss = policy_gradient_step(model_, opt_, insts, spec_.starts, spec_.seed, base);
        }
        if (!std::isfinite(loss)) {
            std::ostringstream os;
            os << "non-finite loss at epoch " << cursor_.epoch << " batch " << cursor_.batch << " (step " << cursor_.steps
               << ", lr " << opt_.lr << ")";
            throw TrainingError(os.str());
        }
        ++cursor_.steps;
        if (++cursor_.batch >= batches_per_epoch()) {
            cursor_.batch = 0;
            ++cursor_.epoch;
        }
        return loss;
    }

    std::vector<EvalBucket>& eval_buckets() {
        if (!eval_ready_) {
            eval_ = make_eval_buckets(spec_.kind, spec_.n, spec_.eval_size, spec_.seed, spec_.fixed_capacity);
            eval_ready_ = true;
        }
        return eval_;
    }

    EvalReport evaluate() { return evaluate_model(model_, eval_buckets()); }

    /// Runs to completion. Metrics rows go to `log` as they are produced; a
    /// checkpoint is written after every epoch when a path is given.
    void run(const std::function<void(const MetricsRow&)>& log = {}, const std::string& checkpoint_path = {}) {
        double epoch_loss = 0.0;
        int epoch_steps = 0;
        while (!finished()) {
            const int epoch = cursor_.epoch;
            const double loss = step();
            epoch_loss += loss;
            ++epoch_steps;
            if (log) log({epoch, cursor_.steps, loss, {}});
            if (cursor_.epoch != epoch) {
                MetricsRow row{epoch, cursor_.steps, epoch_loss / std::max(epoch_steps, 1), {}};
                if (spec_.eval_size > 0 && ((epoch + 1) % spec_.eval_every == 0 || finished())) {
                    for (const auto& b : evaluate().buckets) row.bucket_gaps.push_back(b.mean_gap_pct);
                }
                if (log) log(row);
                if (!checkpoint_path.empty()) save(checkpoint_path);
                epoch_loss = 0.0;
                epoch_steps = 0;
            }
        }
    }

    CheckpointData checkpoint() {
        nlohmann::json state = {{"spec", to_json(spec_)},
                                {"epoch", cursor_.epoch},
                                {"batch", cursor_.batch},
                                {"steps", cursor_.steps},
                                {"lr", opt_.lr}};
        CheckpointData d = model_checkpoint(model_, state);
        const auto params = model_.parameters();
        auto& moments = opt_.moments();
        moments.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            MomentState m = moments[i];
            if (m.m.size() == 0) {
                m.m = ad::Matrix::Zero(params[i]->value.rows(), params[i]->value.cols());
                m.v = m.m;
            }
            d.moments.push_back(std::move(m));
        }
        return d;
    }

    void save(const std::string& path) { save_checkpoint(path, checkpoint()); }

    static Trainer resume(const CheckpointData& d) {
        if (!d.metadata.contains("trainer")) throw FormatError("checkpoint has no trainer state");
        const auto& st = d.metadata.at("trainer");
        Trainer t(train_spec_from_json(st.at("spec")));
        restore_parameters(d, t.model_.parameters());
        t.cursor_.epoch = st.at("epoch");
        t.cursor_.batch = st.at("batch");
        t.cursor_.steps = st.at("steps");
        t.opt_.lr = st.at("lr");
        if (!d.moments.empty()) {
            auto& moments = t.opt_.moments();
            moments = d.moments;
            for (auto& m : moments)
                if (m.step == 0) m = MomentState{};
        }
        return t;
    }

    static Trainer resume(const std::string& path) { return resume(load_checkpoint(path)); }

private:
    void prepare() {
        if (spec_.regime == Regime::Supervised && !spec_.resample_each_epoch) {
            const GenSpec g = spec_.generator();
            for (int b = 0; b < batches_per_epoch(); ++b) {
                auto batch = vct_sample(g, spec_.batch_size, static_cast<std::uint64_t>(b));
                for (auto& inst : batch) {
                    if (static_cast<int>(data_.size()) == spec_.train_size) break;
                    labels_.push_back(oracle(inst));
                    data_.push_back(std::move(inst));
                }
            }
        }
    }

    /// Batch visiting order for an epoch: a seeded shuffle of batch indices.
    std::vector<int> epoch_order(int epoch) const {
        std::vector<int> order(static_cast<std::size_t>(batches_per_epoch()));
        std::iota(order.begin(), order.end(), 0);
        CounterRng rng(spec_.seed, StreamTag::Shuffle, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
        return order;
    }

    TrainSpec spec_;
    Model model_;
    Adam opt_;
    Cursor cursor_;
    std::vector<Instance> data_;
    std::vector<Solution> labels_;
    std::vector<EvalBucket> eval_;
    bool eval_ready_ = false;
};

inline std::string metrics_header(const std::vector<std::string>& bucket_labels) {
    std::string h = "epoch,step,loss";
    for (const auto& l : bucket_labels) h += ",gap_" + l;
    return h;
}

inline std::string metrics_line(const MetricsRow& row, std::size_t buckets) {
    std::ostringstream os;
    os.precision(10);
    os << row.epoch << ',' << row.step << ',' << row.loss;
    for (std::size_t i = 0; i < buckets; ++i) {
        os << ',';
        if (i < row.bucket_gaps.size()) os << row.bucket_gaps[i];
    }
    return os.str();
}

}  // namespace vrplab
