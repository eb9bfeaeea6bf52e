#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "vrplab/baselines.hpp"
#include "vrplab/generator.hpp"
#include "vrplab/io.hpp"
#include "vrplab/policy.hpp"
#include "vrplab/similarity.hpp"
#include "vrplab/training.hpp"
#include "vrplab/transforms.hpp"

using namespace vrplab;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kFormat = 3, kInfeasible = 4 };

struct UsageError : Error { using Error::Error; };

// ------------------------------------------------------------------ files

class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") return;
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) throw UsageError("cannot write " + path);
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }
    void close() {
        if (!file_) return std::cout.flush(), void();
        file_->close();
        if (file_->fail()) throw Error("failed writing output");
    }

private:
    std::unique_ptr<std::ofstream> file_;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot read " + path);
    return is;
}

std::vector<Instance> load_instances(const std::string& path) {
    auto is = open_input(path);
    return read_instances(is);
}

std::vector<Solution> load_solutions(const std::string& path) {
    auto is = open_input(path);
    return read_solutions(is);
}

// --------------------------------------------------------- dataset flags

struct DataFlags {
    std::string kind = "CVRP";
    int n = 20;
    int count = 100;
    std::uint64_t seed = 1;
    std::optional<int> capacity;
    std::vector<int> capacity_range;
    std::optional<double> alpha;
    std::vector<double> alpha_range;
    std::string assignment = "instance";
    int batch_size = 64;
};

void add_data_flags(CLI::App* sub, DataFlags& f, bool with_assignment) {
    sub->add_option("--kind", f.kind, "Problem kind")->check(CLI::IsMember({"TSP", "CVRP", "OVRP", "CVRPTW"}));
    sub->add_option("--n", f.n, "Customers per instance")->check(CLI::PositiveNumber);
    sub->add_option("--count", f.count, "Number of instances")->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.seed, "Random seed");
    auto* cap = sub->add_option("--capacity", f.capacity, "Fixed vehicle capacity")->check(CLI::PositiveNumber);
    auto* cap_range = sub->add_option("--capacity-range", f.capacity_range, "Capacity range MIN MAX (uniform integer)")
                          ->expected(2);
    cap->excludes(cap_range);
    auto* alpha = sub->add_option("--alpha", f.alpha, "Fixed time-window tightness coefficient");
    auto* alpha_range = sub->add_option("--alpha-range", f.alpha_range, "Tightness range MIN MAX (uniform)")->expected(2);
    alpha->excludes(alpha_range);
    if (with_assignment) {
        sub->add_option("--assignment", f.assignment, "Tightness assignment level")
            ->check(CLI::IsMember({"instance", "batch"}));
        sub->add_option("--batch-size", f.batch_size, "Batch size for batch-level assignment")->check(CLI::PositiveNumber);
    }
}

GenSpec gen_spec(const DataFlags& f) {
    GenSpec g;
    g.kind = parse_kind(f.kind);
    g.n = f.n;
    g.count = f.count;
    g.seed = f.seed;
    if (f.capacity) g.capacity_min = g.capacity_max = *f.capacity;
    if (f.capacity_range.size() == 2) {
        g.capacity_min = f.capacity_range[0];
        g.capacity_max = f.capacity_range[1];
    }
    if (f.alpha) g.alpha_min = g.alpha_max = *f.alpha;
    if (f.alpha_range.size() == 2) {
        g.alpha_min = f.alpha_range[0];
        g.alpha_max = f.alpha_range[1];
    }
    g.assignment = f.assignment == "batch" ? Assignment::BatchLevel : Assignment::InstanceLevel;
    return g;
}

std::vector<Instance> generate(const GenSpec& g, int batch_size) {
    if (g.assignment == Assignment::InstanceLevel) return gen_dataset(g);
    std::vector<Instance> out;
    for (std::uint64_t b = 0; static_cast<int>(out.size()) < g.count; ++b)
        for (auto& inst : gen_batch(g, batch_size, b))
            if (static_cast<int>(out.size()) < g.count) out.push_back(std::move(inst));
    return out;
}

std::string dataset_name(ProblemKind kind, int n) {
    std::string k(to_string(kind));
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return k + std::to_string(n);
}

// ---------------------------------------------------------------- solvers

/// Rejects instances that no solution can satisfy.
void check_solvable(const Instance& inst, std::size_t which) {
    if (inst.nodes.empty()) throw FormatError("instance " + std::to_string(which) + " has no nodes");
    if (!has_depot(inst.kind)) return;
    for (std::size_t i = 1; i < inst.nodes.size(); ++i) {
        const Node& n = inst.nodes[i];
        if (n.demand > inst.capacity)
            throw InfeasibleError("instance " + std::to_string(which) + ": customer " + std::to_string(i) +
                                  " demand exceeds capacity");
        if (inst.kind == ProblemKind::CVRPTW && !route_time_feasible(inst, Route{static_cast<int>(i)}))
            throw InfeasibleError("instance " + std::to_string(which) + ": customer " + std::to_string(i) +
                                  " cannot be served within its window");
    }
}

struct MethodFlags {
    std::string method = "oracle";
    std::string checkpoint;
    int starts = 1;
};

void add_method_flags(CLI::App* sub, MethodFlags& f) {
    sub->add_option("--method", f.method, "Solver: nn, cw, ls (savings + local search), oracle or model")
        ->check(CLI::IsMember({"nn", "cw", "ls", "oracle", "model"}));
    sub->add_option("--checkpoint", f.checkpoint, "Model checkpoint for --method model");
    sub->add_option("--starts", f.starts, "Greedy multistart rollouts for --method model")->check(CLI::PositiveNumber);
}

struct MethodSolver {
    std::optional<Model> model;
    MethodFlags flags;

    explicit MethodSolver(const MethodFlags& f) : flags(f) {
        if (f.method == "model") {
            if (f.checkpoint.empty()) throw UsageError("--method model needs --checkpoint");
            if (!std::filesystem::exists(f.checkpoint)) throw UsageError("cannot read " + f.checkpoint);
            model = load_model(f.checkpoint);
        } else if (!f.checkpoint.empty()) {
            throw UsageError("--checkpoint only applies to --method model");
        }
    }

    Solution operator()(const Instance& inst) {
        if (flags.method == "nn") return nearest_neighbor(inst);
        if (flags.method == "cw") return clarke_wright(inst);
        if (flags.method == "ls") return two_opt_or_opt(inst, clarke_wright(inst));
        if (flags.method == "oracle") return oracle(inst);
        return solve_with_model(*model, inst, flags.starts);
    }
};

// ------------------------------------------------------------- commands

void cmd_gen(const DataFlags& f, const std::string& out_path) {
    const GenSpec g = gen_spec(f);
    const auto insts = generate(g, f.batch_size);
    Output out(out_path);
    write_instances(out.stream(), insts);
    out.close();
}

void cmd_solve(const std::string& in_path, const MethodFlags& m, const std::string& out_path) {
    const auto insts = load_instances(in_path);
    for (std::size_t i = 0; i < insts.size(); ++i) check_solvable(insts[i], i);
    MethodSolver solve(m);
    std::vector<Solution> sols;
    double total = 0.0;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        sols.push_back(solve(insts[i]));
        const auto report = validate(insts[i], sols.back());
        if (!report.feasible)
            throw InfeasibleError("instance " + std::to_string(i) + ": " + report.violations.front().message);
        total += solution_cost(insts[i], sols.back());
    }
    Output out(out_path);
    write_solutions(out.stream(), sols);
    out.close();
    std::cerr << "solved " << insts.size() << " instances, mean cost "
              << format_real(insts.empty() ? 0.0 : total / static_cast<double>(insts.size())) << '\n';
}

std::pair<ProblemKind, ProblemKind> transform_kinds(const std::string& name) {
    using K = ProblemKind;
    static const std::map<std::string, std::pair<K, K>> table{
        {"cvrp_to_tsp", {K::CVRP, K::TSP}},       {"tsp_to_cvrp", {K::TSP, K::CVRP}},
        {"cvrp_to_ovrp", {K::CVRP, K::OVRP}},     {"ovrp_to_cvrp", {K::OVRP, K::CVRP}},
        {"cvrp_to_cvrptw", {K::CVRP, K::CVRPTW}}, {"cvrptw_to_cvrp", {K::CVRPTW, K::CVRP}}};
    return table.at(name);
}

void cmd_transform(const std::string& in_path, const std::string& sol_path, const std::string& name,
                   const std::string& out_path) {
    const auto insts = load_instances(in_path);
    const auto sols = load_solutions(sol_path);
    if (sols.size() != insts.size())
        throw FormatError("solution file has " + std::to_string(sols.size()) + " lines for " +
                          std::to_string(insts.size()) + " instances");
    const auto [from, to] = transform_kinds(name);
    std::vector<Solution> outs;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        const bool windows = from == ProblemKind::CVRPTW || to == ProblemKind::CVRPTW;
        if (windows && insts[i].kind != ProblemKind::CVRPTW)
            throw UsageError("time-window transforms need CVRPTW instances");
        const Instance src = with_kind(insts[i], from);
        const auto in_report = validate(src, sols[i]);
        if (!in_report.feasible)
            throw InfeasibleError("solution " + std::to_string(i) + " is not a feasible " +
                                  std::string(to_string(from)) + " solution: " + in_report.violations.front().message);
        outs.push_back(transfer_solution(insts[i], from, to, sols[i]));
        const auto out_report = validate(with_kind(insts[i], to), outs.back());
        if (!out_report.feasible)
            throw InfeasibleError("transformed solution " + std::to_string(i) + ": " + out_report.violations.front().message);
    }
    Output out(out_path);
    write_solutions(out.stream(), outs);
    out.close();
}

void cmd_similarity(const std::string& table, int n, int count, std::uint64_t seed, std::vector<double> levels,
                    const std::string& out_path) {
    Output out(out_path);
    auto& os = out.stream();
    const Solver solver = [](const Instance& inst) { return oracle(inst); };
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    auto row = [&](const std::string& label) -> std::vector<double>& {
        for (auto& r : rows)
            if (r.first == label) return r.second;
        rows.emplace_back(label, std::vector<double>{});
        return rows.back().second;
    };
    GenSpec g;
    g.n = n;
    g.count = count;
    g.seed = seed;
    using K = ProblemKind;
    if (table == "capacity") {
        if (levels.empty()) levels = {10, 50, 400, 500};
        os << "row";
        for (double c : levels) os << ",C=" << format_real(c);
        os << '\n';
        for (double c : levels) {
            g.kind = K::CVRP;
            g.capacity_min = g.capacity_max = static_cast<int>(c);
            if (g.capacity_min != c || c < 1) throw UsageError("capacity levels must be positive integers");
            const auto data = gen_dataset(g);
            const auto ovrp = transfer_table(data, K::CVRP, K::OVRP, solver);
            const auto tsp = transfer_table(data, K::CVRP, K::TSP, solver);
            row("OVRP cost").push_back(ovrp.obj_b);
            row("CVRP cost").push_back(ovrp.obj_a);
            row("TSP cost").push_back(tsp.obj_b);
            row("OVRP->CVRP cost").push_back(ovrp.obj_a_of_b);
            row("CVRP->OVRP cost").push_back(ovrp.obj_b_of_a);
            row("TSP->CVRP cost").push_back(tsp.obj_a_of_b);
            row("CVRP->TSP cost").push_back(tsp.obj_b_of_a);
            row("Similarity CVRP-OVRP (%)").push_back(100.0 * similarity(ovrp));
            row("Similarity CVRP-TSP (%)").push_back(100.0 * similarity(tsp));
        }
    } else {
        if (levels.empty()) levels = {0.2, 1.0, 3.0, 5.0};
        os << "row";
        for (double a : levels) os << ",alpha=" << format_real(a);
        os << '\n';
        for (double a : levels) {
            g.kind = K::CVRPTW;
            g.capacity_min = g.capacity_max = 50;
            g.alpha_min = g.alpha_max = a;
            const auto data = gen_dataset(g);
            const auto tw = transfer_table(data, K::CVRP, K::CVRPTW, solver);
            row("CVRP cost").push_back(tw.obj_a);
            row("CVRPTW cost").push_back(tw.obj_b);
            row("CVRP->CVRPTW cost").push_back(tw.obj_b_of_a);
            row("CVRPTW->CVRP cost").push_back(tw.obj_a_of_b);
            row("Similarity CVRP-CVRPTW (%)").push_back(100.0 * similarity(tw));
        }
    }
    for (const auto& [label, values] : rows) {
        os << label;
        for (double v : values) os << ',' << format_real(v);
        os << '\n';
    }
    out.close();
}

struct TrainFlags {
    std::string preset = "desk";
    std::string kind = "CVRP";
    std::optional<std::string> regime, arm;
    std::optional<int> n, count, epochs, batch_size, starts, eval_size, eval_every;
    std::optional<double> lr, lr_decay;
    std::optional<std::uint64_t> seed;
    std::optional<int> capacity;
    std::vector<int> capacity_range;
    std::optional<double> alpha;
    std::vector<double> alpha_range;
    std::optional<std::string> assignment;
    std::optional<int> embed_dim, ff_dim, heads, encoder_layers, decoder_layers, experts, expert_depth;
    bool resample = false;
    std::string checkpoint, resume, out;
};

TrainSpec train_spec(const TrainFlags& f) {
    const bool tw = f.kind == "CVRPTW";
    TrainSpec s = f.preset == "paper" ? (tw ? TrainSpec::paper_tw() : TrainSpec::paper())
                                      : (tw ? TrainSpec::desk_tw() : TrainSpec::desk());
    s.kind = parse_kind(f.kind);
    if (s.kind == ProblemKind::TSP) throw UsageError("training needs a capacitated kind");
    if (f.regime) s.regime = parse_regime(*f.regime);
    if (f.arm) s.arm = parse_arm(*f.arm);
    if (f.n) s.n = *f.n;
    if (f.count) s.train_size = *f.count;
    if (f.epochs) s.epochs = *f.epochs;
    if (f.batch_size) s.batch_size = *f.batch_size;
    if (f.starts) s.starts = *f.starts;
    if (f.eval_size) s.eval_size = *f.eval_size;
    if (f.eval_every) s.eval_every = *f.eval_every;
    if (f.lr) s.learning_rate = *f.lr;
    if (f.lr_decay) s.lr_decay = *f.lr_decay;
    if (f.seed) s.seed = *f.seed;
    if (f.assignment) s.assignment = *f.assignment == "batch" ? Assignment::BatchLevel : Assignment::InstanceLevel;
    if (f.capacity) s.fixed_capacity = *f.capacity;
    if (f.capacity_range.size() == 2) {
        s.capacity_min = f.capacity_range[0];
        s.capacity_max = f.capacity_range[1];
    }
    if (f.alpha) s.fixed_alpha = *f.alpha;
    if (f.alpha_range.size() == 2) {
        s.alpha_min = f.alpha_range[0];
        s.alpha_max = f.alpha_range[1];
    }
    s.resample_each_epoch = f.resample;
    if (f.embed_dim) s.model.embed_dim = *f.embed_dim;
    if (f.ff_dim) s.model.ff_dim = *f.ff_dim;
    if (f.heads) s.model.heads = *f.heads;
    if (f.encoder_layers) s.model.encoder_layers = *f.encoder_layers;
    if (f.decoder_layers) s.model.decoder_layers = *f.decoder_layers;
    if (f.experts) s.model.experts = *f.experts;
    if (f.expert_depth) s.model.expert_depth = *f.expert_depth;
    s.validate();
    return s;
}

void cmd_train(const TrainFlags& f) {
    std::optional<Trainer> trainer;
    if (!f.resume.empty()) {
        if (!std::filesystem::exists(f.resume)) throw UsageError("cannot read " + f.resume);
        trainer.emplace(Trainer::resume(f.resume));
        if (f.epochs) trainer->set_epochs(*f.epochs);
    } else {
        trainer.emplace(train_spec(f));
    }
    const TrainSpec& s = trainer->spec();
    std::vector<std::string> labels;
    if (s.kind == ProblemKind::CVRPTW)
        for (double a : eval_alphas()) labels.push_back(bucket_label(s.kind, a));
    else
        for (int c : eval_capacities()) labels.push_back(bucket_label(s.kind, c));
    Output out(f.out);
    auto& os = out.stream();
    os << metrics_header(labels) << '\n';
    trainer->run(
        [&](const MetricsRow& row) {
            if (row.bucket_gaps.empty() && row.step % 10 != 0) return;
            os << metrics_line(row, labels.size()) << '\n';
            os.flush();
        },
        f.checkpoint);
    if (!f.checkpoint.empty()) trainer->save(f.checkpoint);
    out.close();
}

void cmd_eval(const DataFlags& d, bool data_set, const std::string& in_path, const MethodFlags& m,
              const std::string& label, const std::string& dataset, const std::string& out_path) {
    MethodSolver solve(m);
    std::vector<EvalBucket> buckets;
    ProblemKind kind = parse_kind(d.kind);
    int n = d.n;
    if (!in_path.empty()) {
        if (data_set) throw UsageError("dataset flags do not apply with --instances");
        const auto insts = load_instances(in_path);
        if (insts.empty()) throw FormatError("no instances in " + in_path);
        kind = insts[0].kind;
        n = insts[0].customer_count();
        std::map<double, std::size_t> pos;
        for (std::size_t i = 0; i < insts.size(); ++i) {
            check_solvable(insts[i], i);
            const double t = kind == ProblemKind::CVRPTW ? insts[i].alpha : insts[i].capacity;
            auto [it, fresh] = pos.emplace(t, buckets.size());
            if (fresh) buckets.push_back({bucket_label(kind, t), t, {}, {}});
            buckets[it->second].instances.push_back(insts[i]);
            buckets[it->second].reference.push_back(solution_cost(insts[i], oracle(insts[i])));
        }
    } else {
        if (kind == ProblemKind::TSP) throw UsageError("evaluation buckets need a capacitated kind");
        buckets = make_eval_buckets(kind, d.n, d.count, d.seed, d.capacity.value_or(50));
    }
    const auto report = evaluate(buckets, [&](const Instance& inst) { return solve(inst); });
    std::vector<ResultRow> rows;
    for (const auto& b : report.buckets)
        rows.push_back({dataset.empty() ? dataset_name(kind, n) : dataset, b.label, label.empty() ? m.method : label,
                        b.mean_cost, b.mean_gap_pct, b.instances, b.wall_ms});
    Output out(out_path);
    write_results(out.stream(), rows);
    out.close();
}

void cmd_gapstats(const std::vector<std::string>& inputs, const std::string& in_domain, const std::string& out_path) {
    std::vector<ResultRow> rows;
    for (const auto& path : inputs) {
        auto is = open_input(path);
        auto part = read_results(is);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const auto table = gap_table(rows, in_domain);
    Output out(out_path);
    write_gap_table(out.stream(), table);
    out.close();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vrplab: routing under varying constraint tightness"};
    app.require_subcommand(1);
    std::function<void()> run;

    DataFlags gen_flags;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "Generate an instance dataset");
    add_data_flags(gen, gen_flags, true);
    gen->add_option("--out", gen_out, "Output instance file (default stdout)");
    gen->callback([&] { run = [&] { cmd_gen(gen_flags, gen_out); }; });

    std::string solve_in, solve_out;
    MethodFlags solve_method;
    auto* solve = app.add_subcommand("solve", "Solve every instance of a dataset");
    solve->add_option("--instances", solve_in, "Instance file")->required();
    add_method_flags(solve, solve_method);
    solve->add_option("--out", solve_out, "Output solution file (default stdout)");
    solve->callback([&] { run = [&] { cmd_solve(solve_in, solve_method, solve_out); }; });

    std::string tr_in, tr_sol, tr_name, tr_out;
    auto* transform = app.add_subcommand("transform", "Adapt solutions from one problem kind to another");
    transform->add_option("--instances", tr_in, "Instance file")->required();
    transform->add_option("--solutions", tr_sol, "Solution file, one line per instance")->required();
    transform->add_option("--name", tr_name, "Transform")
        ->required()
        ->check(CLI::IsMember(
            {"cvrp_to_tsp", "tsp_to_cvrp", "cvrp_to_ovrp", "ovrp_to_cvrp", "cvrp_to_cvrptw", "cvrptw_to_cvrp"}));
    transform->add_option("--out", tr_out, "Output solution file (default stdout)");
    transform->callback([&] { run = [&] { cmd_transform(tr_in, tr_sol, tr_name, tr_out); }; });

    std::string sim_table = "capacity", sim_out;
    int sim_n = 20, sim_count = 20;
    std::uint64_t sim_seed = 1;
    std::vector<double> sim_levels;
    auto* sim = app.add_subcommand("similarity", "Problem-similarity table from transfer costs");
    sim->add_option("--table", sim_table, "capacity (CVRP vs OVRP/TSP) or tw (CVRP vs CVRPTW)")
        ->check(CLI::IsMember({"capacity", "tw"}));
    sim->add_option("--n", sim_n, "Customers per instance")->check(CLI::PositiveNumber);
    sim->add_option("--count", sim_count, "Instances per column")->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--levels", sim_levels, "Capacities or alphas, one column each");
    sim->add_option("--out", sim_out, "Output CSV (default stdout)");
    sim->callback([&] { run = [&] { cmd_similarity(sim_table, sim_n, sim_count, sim_seed, sim_levels, sim_out); }; });

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "Train a policy");
    train->add_option("--preset", tf.preset, "Hyperparameter preset")->check(CLI::IsMember({"desk", "paper"}));
    train->add_option("--kind", tf.kind, "Problem kind")->check(CLI::IsMember({"CVRP", "OVRP", "CVRPTW"}));
    train->add_option("--regime", tf.regime, "supervised or policy_gradient")
        ->check(CLI::IsMember({"supervised", "policy_gradient"}));
    train->add_option("--arm", tf.arm, "fixed, vct or vct_mem")->check(CLI::IsMember({"fixed", "vct", "vct_mem"}));
    train->add_option("--n", tf.n, "Customers per instance")->check(CLI::PositiveNumber);
    train->add_option("--count", tf.count, "Training instances per epoch")->check(CLI::PositiveNumber);
    train->add_option("--epochs", tf.epochs, "Epochs")->check(CLI::NonNegativeNumber);
    train->add_option("--batch-size", tf.batch_size, "Batch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", tf.lr, "Initial learning rate")->check(CLI::PositiveNumber);
    train->add_option("--lr-decay", tf.lr_decay, "Per-epoch learning-rate factor");
    train->add_option("--starts", tf.starts, "Multistart rollouts per instance (policy gradient)");
    train->add_option("--eval-size", tf.eval_size, "Held-out instances per bucket")->check(CLI::NonNegativeNumber);
    train->add_option("--eval-every", tf.eval_every, "Evaluate every k epochs")->check(CLI::PositiveNumber);
    train->add_option("--seed", tf.seed, "Random seed");
    train->add_option("--assignment", tf.assignment, "Tightness assignment level")
        ->check(CLI::IsMember({"instance", "batch"}));
    auto* tcap = train->add_option("--capacity", tf.capacity, "Capacity of the fixed arm")->check(CLI::PositiveNumber);
    auto* tcap_range = train->add_option("--capacity-range", tf.capacity_range, "Capacity range MIN MAX")->expected(2);
    tcap->excludes(tcap_range);
    auto* talpha = train->add_option("--alpha", tf.alpha, "Alpha of the fixed arm");
    auto* talpha_range = train->add_option("--alpha-range", tf.alpha_range, "Alpha range MIN MAX")->expected(2);
    talpha->excludes(talpha_range);
    train->add_flag("--resample", tf.resample, "Draw fresh supervised instances every epoch");
    train->add_option("--embed-dim", tf.embed_dim, "Embedding width")->check(CLI::PositiveNumber);
    train->add_option("--ff-dim", tf.ff_dim, "Feed-forward width")->check(CLI::PositiveNumber);
    train->add_option("--heads", tf.heads, "Attention heads")->check(CLI::PositiveNumber);
    train->add_option("--encoder-layers", tf.encoder_layers, "Encoder layers")->check(CLI::NonNegativeNumber);
    train->add_option("--decoder-layers", tf.decoder_layers, "Decoder layers")->check(CLI::NonNegativeNumber);
    train->add_option("--experts", tf.experts, "Experts in the multi-expert module")->check(CLI::PositiveNumber);
    train->add_option("--expert-depth", tf.expert_depth, "Layers per expert")->check(CLI::PositiveNumber);
    train->add_option("--checkpoint", tf.checkpoint, "Checkpoint written after every epoch");
    auto* resume = train->add_option("--resume", tf.resume, "Continue from a training checkpoint (--epochs extends it)");
    for (auto* o : train->get_options())
        if (o != resume && o->get_name() != "--checkpoint" && o->get_name() != "--epochs" && o->get_name() != "--help")
            resume->excludes(o);
    train->add_option("--out", tf.out, "Metrics CSV (default stdout)");
    train->callback([&] { run = [&] { cmd_train(tf); }; });

    DataFlags ev;
    ev.count = 50;
    MethodFlags ev_method;
    std::string ev_in, ev_label, ev_dataset, ev_out;
    auto* eval = app.add_subcommand("eval", "Per-bucket optimality gaps against the oracle");
    add_data_flags(eval, ev, false);
    eval->add_option("--instances", ev_in, "Evaluate a dataset file, bucketed by tightness");
    add_method_flags(eval, ev_method);
    eval->add_option("--label", ev_label, "Method name in the results (default --method)");
    eval->add_option("--dataset", ev_dataset, "Dataset name in the results");
    eval->add_option("--out", ev_out, "Results CSV (default stdout)");
    eval->callback([&] {
        const bool data_set = eval->count("--n") + eval->count("--count") + eval->count("--seed") +
                                  eval->count("--kind") + eval->count("--capacity") + eval->count("--alpha") +
                                  eval->count("--capacity-range") + eval->count("--alpha-range") >
                              0;
        run = [&, data_set] { cmd_eval(ev, data_set, ev_in, ev_method, ev_label, ev_dataset, ev_out); };
    });

    std::vector<std::string> gs_in;
    std::string gs_domain, gs_out;
    auto* gapstats = app.add_subcommand("gapstats", "Aggregate results CSVs into a gap table");
    gapstats->add_option("results", gs_in, "Results CSV files")->required();
    gapstats->add_option("--in-domain", gs_domain, "In-domain bucket; adds expansion ratio columns");
    gapstats->add_option("--out", gs_out, "Output CSV (default stdout)");
    gapstats->callback([&] { run = [&] { cmd_gapstats(gs_in, gs_domain, gs_out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }
    try {
        run();
        return kOk;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kFormat;
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return kInfeasible;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const DomainError& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
