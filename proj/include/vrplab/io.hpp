#pragma once

// Text formats: instance files, solution files, result CSVs and the
// aggregated gap table.
//
// Instance block:
//   VRPT 1 <kind> <n> <capacity> <alpha>
//   <index> <x> <y> <demand> <e> <l> <s>      (one line per node, depot first)
// n counts customers, so depot kinds carry n + 1 node lines and TSP carries n.

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vrplab/core.hpp"

namespace vrplab {

inline constexpr int kInstanceFormatVersion = 1;

inline std::string format_real(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

template <typename T>
T parse_number(const std::string& tok, const char* what, int line) {
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw FormatError("line " + std::to_string(line) + ": bad " + what + " '" + tok + "'");
    return v;
}

inline bool next_content_line(std::istream& is, std::string& line, int& line_no) {
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
}

}  // namespace detail

// ------------------------------------------------------------- instances

inline void write_instance(std::ostream& os, const Instance& inst) {
    os << "VRPT " << kInstanceFormatVersion << ' ' << to_string(inst.kind) << ' ' << inst.customer_count() << ' '
       << inst.capacity << ' ' << format_real(inst.alpha) << '\n';
    for (const auto& n : inst.nodes)
        os << n.index << ' ' << format_real(n.x) << ' ' << format_real(n.y) << ' ' << n.demand << ' '
           << format_real(n.early) << ' ' << format_real(n.late) << ' ' << format_real(n.service) << '\n';
}

inline void write_instances(std::ostream& os, const std::vector<Instance>& insts) {
    for (const auto& inst : insts) write_instance(os, inst);
}

inline std::vector<Instance> read_instances(std::istream& is) {
    std::vector<Instance> out;
    std::string line;
    int line_no = 0;
    while (detail::next_content_line(is, line, line_no)) {
        const auto head = detail::split_ws(line);
        if (head.size() != 6 || head[0] != "VRPT")
            throw FormatError("line " + std::to_string(line_no) + ": expected 'VRPT 1 <kind> <n> <capacity> <alpha>'");
        if (detail::parse_number<int>(head[1], "version", line_no) != kInstanceFormatVersion)
            throw FormatError("line " + std::to_string(line_no) + ": unsupported format version " + head[1]);
        Instance inst;
        inst.kind = parse_kind(head[2]);
        const int n = detail::parse_number<int>(head[3], "customer count", line_no);
        inst.capacity = detail::parse_number<int>(head[4], "capacity", line_no);
        inst.alpha = detail::parse_number<double>(head[5], "alpha", line_no);
        if (n < 1) throw FormatError("line " + std::to_string(line_no) + ": customer count must be positive");
        if (inst.capacity < 1) throw FormatError("line " + std::to_string(line_no) + ": capacity must be positive");
        if (!(inst.alpha > 0.0)) throw FormatError("line " + std::to_string(line_no) + ": alpha must be positive");
        const int total = has_depot(inst.kind) ? n + 1 : n;
        for (int i = 0; i < total; ++i) {
            if (!detail::next_content_line(is, line, line_no))
                throw FormatError("instance " + std::to_string(out.size()) + ": expected " + std::to_string(total) +
                                  " node lines");
            const auto tok = detail::split_ws(line);
            if (tok.size() != 7) throw FormatError("line " + std::to_string(line_no) + ": expected 7 node fields");
            Node node;
            node.index = detail::parse_number<int>(tok[0], "index", line_no);
            if (node.index != i)
                throw FormatError("line " + std::to_string(line_no) + ": expected node index " + std::to_string(i));
            node.x = detail::parse_number<double>(tok[1], "x", line_no);
            node.y = detail::parse_number<double>(tok[2], "y", line_no);
            node.demand = detail::parse_number<int>(tok[3], "demand", line_no);
            node.early = detail::parse_number<double>(tok[4], "e", line_no);
            node.late = detail::parse_number<double>(tok[5], "l", line_no);
            node.service = detail::parse_number<double>(tok[6], "s", line_no);
            if (node.demand < 0) throw FormatError("line " + std::to_string(line_no) + ": negative demand");
            if (!std::isfinite(node.x) || !std::isfinite(node.y))
                throw FormatError("line " + std::to_string(line_no) + ": non-finite coordinate");
            inst.nodes.push_back(node);
        }
        out.push_back(std::move(inst));
    }
    return out;
}

// ------------------------------------------------------------- solutions

inline void write_solution(std::ostream& os, const Solution& sol) {
    for (std::size_t i = 0; i < sol.visits.size(); ++i) os << (i ? " " : "") << sol.visits[i];
    os << '\n';
}

inline void write_solutions(std::ostream& os, const std::vector<Solution>& sols) {
    for (const auto& s : sols) write_solution(os, s);
}

inline std::vector<Solution> read_solutions(std::istream& is) {
    std::vector<Solution> out;
    std::string line;
    int line_no = 0;
    while (detail::next_content_line(is, line, line_no)) {
        Solution s;
        for (const auto& tok : detail::split_ws(line)) s.visits.push_back(detail::parse_number<int>(tok, "node index", line_no));
        out.push_back(std::move(s));
    }
    return out;
}

// --------------------------------------------------------------- results

inline constexpr const char* kResultsHeader = "dataset,bucket,method,mean_cost,mean_gap_pct,instances,wall_ms";

struct ResultRow {
    std::string dataset, bucket, method;
    double mean_cost = 0.0;
    double mean_gap_pct = 0.0;
    int instances = 0;
    double wall_ms = 0.0;

    bool operator==(const ResultRow&) const = default;
};

inline void write_result_row(std::ostream& os, const ResultRow& r) {
    os << r.dataset << ',' << r.bucket << ',' << r.method << ',' << format_real(r.mean_cost) << ','
       << format_real(r.mean_gap_pct) << ',' << r.instances << ',' << format_real(r.wall_ms) << '\n';
}

inline void write_results(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << kResultsHeader << '\n';
    for (const auto& r : rows) write_result_row(os, r);
}

inline std::vector<ResultRow> read_results(std::istream& is) {
    std::string line;
    int line_no = 0;
    if (!detail::next_content_line(is, line, line_no) || detail::split_csv(line) != detail::split_csv(kResultsHeader))
        throw FormatError(std::string("results file must start with '") + kResultsHeader + "'");
    std::vector<ResultRow> out;
    while (detail::next_content_line(is, line, line_no)) {
        const auto f = detail::split_csv(line);
        if (f == detail::split_csv(kResultsHeader)) continue;  // concatenated files
        if (f.size() != 7) throw FormatError("line " + std::to_string(line_no) + ": expected 7 fields");
        ResultRow r;
        r.dataset = f[0];
        r.bucket = f[1];
        r.method = f[2];
        r.mean_cost = detail::parse_number<double>(f[3], "mean_cost", line_no);
        r.mean_gap_pct = detail::parse_number<double>(f[4], "mean_gap_pct", line_no);
        r.instances = detail::parse_number<int>(f[5], "instances", line_no);
        r.wall_ms = detail::parse_number<double>(f[6], "wall_ms", line_no);
        out.push_back(std::move(r));
    }
    return out;
}

// ------------------------------------------------------------- gap table

/// Methods as rows, buckets as columns, then the average gap over buckets.
/// With an in-domain bucket, each other bucket also gets an expansion ratio
/// (its gap divided by the in-domain gap).
struct GapTable {
    std::vector<std::string> buckets;
    std::vector<std::string> methods;
    std::vector<std::vector<double>> gaps;  // NaN where a method lacks a bucket
    std::vector<double> average;
    std::string in_domain;
    std::vector<std::vector<double>> expansion;  // per method, per bucket other than in_domain
};

inline GapTable gap_table(const std::vector<ResultRow>& rows, const std::string& in_domain = {}) {
    GapTable t;
    t.in_domain = in_domain;
    std::map<std::string, std::size_t> bucket_pos, method_pos;
    std::set<std::string> datasets;
    for (const auto& r : rows) datasets.insert(r.dataset);
    auto row_label = [&](const ResultRow& r) { return datasets.size() > 1 ? r.dataset + "/" + r.method : r.method; };
    for (const auto& r : rows) {
        if (bucket_pos.emplace(r.bucket, t.buckets.size()).second) t.buckets.push_back(r.bucket);
        if (method_pos.emplace(row_label(r), t.methods.size()).second) t.methods.push_back(row_label(r));
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.gaps.assign(t.methods.size(), std::vector<double>(t.buckets.size(), nan));
    for (const auto& r : rows) {
        double& cell = t.gaps[method_pos[row_label(r)]][bucket_pos[r.bucket]];
        if (!std::isnan(cell)) throw FormatError("duplicate result for " + row_label(r) + " at " + r.bucket);
        cell = r.mean_gap_pct;
    }
    if (!in_domain.empty() && !bucket_pos.count(in_domain)) throw FormatError("unknown in-domain bucket " + in_domain);
    for (const auto& g : t.gaps) {
        double s = 0.0;
        int k = 0;
        for (double v : g)
            if (!std::isnan(v)) {
                s += v;
                ++k;
            }
        t.average.push_back(k ? s / k : nan);
        if (!in_domain.empty()) {
            const double base = g[bucket_pos[in_domain]];
            std::vector<double> e;
            for (std::size_t b = 0; b < t.buckets.size(); ++b)
                if (t.buckets[b] != in_domain) e.push_back(g[b] / base);
            t.expansion.push_back(std::move(e));
        }
    }
    return t;
}

inline void write_gap_table(std::ostream& os, const GapTable& t) {
    auto cell = [](double v) { return std::isnan(v) ? std::string() : format_real(v); };
    os << "method";
    for (const auto& b : t.buckets) os << ',' << b;
    os << ",avg_gap";
    if (!t.in_domain.empty())
        for (const auto& b : t.buckets)
            if (b != t.in_domain) os << ",expansion_" << b;
    os << '\n';
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
        os << t.methods[m];
        for (double g : t.gaps[m]) os << ',' << cell(g);
        os << ',' << cell(t.average[m]);
        if (!t.in_domain.empty())
            for (double e : t.expansion[m]) os << ',' << cell(e);
        os << '\n';
    }
}

}  // namespace vrplab
