#pragma once

// Command-line front end of qnd. Commands write tables to an output stream and
// return the process exit code: 0 success, 2 input, 3 solver/engine, 64 usage.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qnet/capbounds.hpp"
#include "qnet/chain.hpp"
#include "qnet/chainformulas.hpp"
#include "qnet/deskernel.hpp"
#include "qnet/disttrack.hpp"
#include "qnet/error.hpp"
#include "qnet/format.hpp"
#include "qnet/markovchain.hpp"
#include "qnet/montecarlo.hpp"
#include "qnet/netmodel.hpp"
#include "qnet/parallel.hpp"

namespace qnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitEngine = 3;
inline constexpr int kExitUsage = 64;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Quotes a CSV field when it contains a separator, quote or line break.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string csv_opt(const std::optional<double>& x) { return x ? format_number(*x) : ""; }

inline nlohmann::ordered_json json_num(double x) {
    if (std::isfinite(x)) return x;
    return format_number(x);
}

inline nlohmann::ordered_json json_opt(const std::optional<double>& x) {
    return x ? json_num(*x) : nlohmann::ordered_json(nullptr);
}

struct OutputOptions {
    std::string format = "csv";
    std::string out;
};

inline void add_output_options(CLI::App* cmd, OutputOptions& o) {
    cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--out", o.out, "Write to this file instead of stdout");
}

// Writes `body` to --out or to `out`.
inline void emit(const OutputOptions& o, std::ostream& out, const std::string& body) {
    if (o.out.empty()) {
        out << body;
        return;
    }
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw DomainError("cannot open output file \"" + o.out + "\"");
    f << body;
}

inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot open output file \"" + path + "\"");
    fn(f);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot read \"" + path + "\"");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- bounds

struct BoundsArgs {
    std::string network;
    std::vector<std::string> bipartite;
    bool multipair = false;
    bool multipartite = false;
    std::vector<std::string> pairs;  // "A:B"
    std::vector<std::string> users;
    std::string objective = "total";
    std::string unit = "network-use";
    bool esq = false;
    double slack = 1.0;
    std::string packing = "kriesell";
    OutputOptions out;
};

inline std::vector<std::pair<std::string, std::string>> parse_pairs(const std::vector<std::string>& items) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : items) {
        const auto c = s.find(':');
        if (c == std::string::npos || c == 0 || c + 1 == s.size())
            throw UsageError("--pairs expects A:B items, got \"" + s + "\"");
        out.emplace_back(s.substr(0, c), s.substr(c + 1));
    }
    return out;
}

inline std::string join_q(const std::optional<std::vector<double>>& q) {
    if (!q) return "";
    std::string s;
    for (std::size_t i = 0; i < q->size(); ++i) s += (i ? ";" : "") + format_number((*q)[i]);
    return s;
}

inline int cmd_bounds(const BoundsArgs& a, std::ostream& out) {
    const int tasks = (!a.bipartite.empty()) + a.multipair + a.multipartite;
    if (tasks != 1) throw UsageError("bounds: choose exactly one of --bipartite A B, --multipair, --multipartite");

    const auto net = parse_network(read_file(a.network));
    BoundOptions opt;
    opt.unit = parse_unit(a.unit);
    opt.use_esq = a.esq;
    opt.slack_factor = a.slack;
    if (a.packing == "kriesell") opt.packing = TreePacking::Kriesell;
    else if (a.packing == "lau") opt.packing = TreePacking::Lau;
    else if (a.packing == "petingi") opt.packing = TreePacking::Petingi;
    else throw DomainError("unknown packing \"" + a.packing + "\"");

    std::string task;
    BoundReport r;
    nlohmann::ordered_json terminals;
    if (!a.bipartite.empty()) {
        task = "bipartite";
        r = bipartite_bounds(net, a.bipartite[0], a.bipartite[1], opt);
        terminals = a.bipartite;
    } else if (a.multipair) {
        task = "multipair";
        auto pairs = a.pairs.empty() ? net.commodities : parse_pairs(a.pairs);
        if (pairs.empty()) throw DomainError("multipair: no pairs given and the network lists no commodities");
        FlowObjective obj;
        if (a.objective == "total") obj = FlowObjective::Total;
        else if (a.objective == "worst") obj = FlowObjective::Worst;
        else throw DomainError("unknown objective \"" + a.objective + "\"");
        task += "-" + a.objective;
        r = multipair_bounds(net, pairs, obj, opt);
        for (const auto& [x, y] : pairs) terminals.push_back({x, y});
    } else {
        task = "multipartite";
        std::vector<std::string> users = a.users;
        if (users.empty() && net.users) users = *net.users;
        if (users.empty()) throw DomainError("multipartite: no users given and the network lists none");
        r = multipartite_bounds(net, users, opt);
        terminals = users;
    }

    std::ostringstream s;
    if (a.out.format == "json") {
        nlohmann::ordered_json j;
        j["task"] = task;
        j["terminals"] = terminals;
        j["unit"] = to_string(r.unit);
        j["lower"] = json_num(r.lower);
        j["upper"] = json_num(r.upper);
        j["slack_factor"] = json_num(r.slack_factor);
        j["upper_with_slack"] = json_num(r.upper_with_slack);
        j["q_opt_lower"] = r.q_opt_lower ? nlohmann::ordered_json(*r.q_opt_lower) : nlohmann::ordered_json(nullptr);
        j["q_opt_upper"] = r.q_opt_upper ? nlohmann::ordered_json(*r.q_opt_upper) : nlohmann::ordered_json(nullptr);
        j["note"] = r.slack_note;
        s << j.dump(2) << '\n';
    } else {
        s << "task,unit,lower,upper,slack_factor,upper_with_slack,q_opt_lower,q_opt_upper,note\n";
        s << task << ',' << to_string(r.unit) << ',' << format_number(r.lower) << ',' << format_number(r.upper)
          << ',' << format_number(r.slack_factor) << ',' << format_number(r.upper_with_slack) << ','
          << join_q(r.q_opt_lower) << ',' << join_q(r.q_opt_upper) << ',' << csv_field(r.slack_note) << '\n';
    }
    emit(a.out, out, s.str());
    return kExitOk;
}

// ---------------------------------------------------------------- chain grid

struct GridArgs {
    std::vector<int> n{1};
    std::vector<double> p_g{0.5};
    std::vector<double> p_s{0.5};
    std::vector<double> t_coh;
    std::vector<long> cutoff;
    double w0 = 1.0;
    std::string protocol;
    int distill = 0;
};

inline void add_grid_options(CLI::App* cmd, GridArgs& g) {
    cmd->add_option("--n", g.n, "Nesting levels (comma list)")->delimiter(',');
    cmd->add_option("--pg", g.p_g, "Link generation probability (comma list)")->delimiter(',');
    cmd->add_option("--ps", g.p_s, "Swap success probability (comma list)")->delimiter(',');
    cmd->add_option("--tcoh", g.t_coh, "Memory coherence time, default inf (comma list)")->delimiter(',');
    cmd->add_option("--cutoff", g.cutoff, "Memory cut-off tau (comma list)")->delimiter(',');
    cmd->add_option("--w0", g.w0, "Werner parameter of fresh links");
    cmd->add_option("--protocol", g.protocol, "Step string such as DSDS (D distill, S swap)");
    cmd->add_option("--distill", g.distill, "Distillation rounds before every swap");
}

struct Cell {
    ChainParams params;
    Protocol protocol;
};

inline std::vector<Cell> expand_grid(const GridArgs& g) {
    if (g.n.empty() || g.p_g.empty() || g.p_s.empty()) throw DomainError("parameter grid is empty");
    if (!g.protocol.empty() && g.distill > 0) throw UsageError("--protocol and --distill are exclusive");
    const std::vector<double> tcohs = g.t_coh.empty() ? std::vector<double>{kInfinity} : g.t_coh;
    std::vector<std::optional<long>> taus;
    if (g.cutoff.empty()) taus.push_back(std::nullopt);
    for (long t : g.cutoff) taus.push_back(t);

    std::vector<Cell> cells;
    for (int n : g.n)
        for (double pg : g.p_g)
            for (double ps : g.p_s)
                for (double tc : tcohs)
                    for (const auto& tau : taus) {
                        Cell c;
                        c.params.n = n;
                        c.params.p_g = pg;
                        c.params.p_s = ps;
                        c.params.t_coh = tc;
                        c.params.tau = tau;
                        c.params.w0 = g.w0;
                        c.params.validate();
                        c.protocol = !g.protocol.empty() ? Protocol::parse(g.protocol)
                                                         : Protocol::with_distillation(n, g.distill);
                        c.protocol.check_against(c.params);
                        cells.push_back(std::move(c));
                    }
    return cells;
}

struct ChainRow {
    std::string engine;
    std::string method;
    Cell cell;
    double mean_t = 0.0;
    std::optional<double> stddev_t;
    std::optional<double> mean_w;
    std::optional<double> captured_mass;
    std::optional<double> stderr_t;
    std::optional<std::size_t> n_samples;
    std::optional<std::uint64_t> seed;
    double wall_ms = 0.0;
};

struct ChainArgs {
    std::string engine;
    GridArgs grid;
    std::optional<std::size_t> trunc;
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    std::string swap_time = "zero-step";
    long delay = 0;
    bool timing = false;
    std::string dist_out;
    std::string dot_out;
    OutputOptions out;
};

inline ChainRow run_analytic(const Cell& c) {
    const auto& p = c.params;
    if (c.protocol.has_distillation())
        throw FeatureMismatchError("engine analytic does not support distillation");
    ChainRow r;
    if (p.n <= 1) {
        r.method = "closed-form";
        r.mean_t = formulas::single_repeater_cutoff_mean(p);
        if (p.n == 0) r.mean_w = p.w0;
        else if (!p.tau) r.mean_w = p.w0 * p.w0 * formulas::gamma_decay(p.p_g, p.t_coh);
        return r;
    }
    if (p.tau) throw FeatureMismatchError("engine analytic supports cut-offs only for n <= 1");
    if (p.p_s == 1.0) {
        r.method = "det-swap";
        r.mean_t = formulas::det_swap_mean(1L << p.n, p.p_g);
    } else {
        r.method = "geometric-level";
        r.mean_t = formulas::geometric_level_mean(p);
    }
    return r;
}

inline ChainRow run_track(const Cell& c, const ChainArgs& a) {
    ChainRow r;
    TrackOptions o;
    o.t_trunc = a.trunc;
    if (a.trunc) {
        r.method = "distribution";
        const auto d = chain_distribution(c.params, c.protocol, o);
        r.mean_t = d.mean();
        r.stddev_t = d.stddev();
        r.mean_w = d.overall_mean_w();
        r.captured_mass = d.captured_mass();
    } else {
        r.method = "exact-mean";
        const auto e = exact_mean(c.params, c.protocol, o);
        r.mean_t = e.mean;
        r.mean_w = e.mean_w;
        r.captured_mass = e.captured_mass;
    }
    return r;
}

inline RepeaterMarkovChain markov_chain_for(const Cell& c, const ChainArgs& a) {
    if (c.protocol.has_distillation())
        throw FeatureMismatchError("engine markov does not support distillation");
    if (c.params.tau) throw FeatureMismatchError("engine markov does not support cut-offs");
    return build_chain(c.params, parse_swap_timing(a.swap_time));
}

inline ChainRow run_markov(const Cell& c, const ChainArgs& a) {
    ChainRow r;
    r.method = a.swap_time;
    const auto st = absorption_stats(markov_chain_for(c, a));
    r.mean_t = st.mean;
    r.stddev_t = std::sqrt(std::max(0.0, st.variance));
    return r;
}

inline void fill_batch(ChainRow& r, const BatchSummary& s) {
    r.mean_t = s.mean_t;
    r.stddev_t = s.stddev_t();
    r.mean_w = s.mean_w;
    r.stderr_t = s.stderr_t;
    r.n_samples = s.n_samples;
    r.seed = s.seed;
}

inline ChainRow run_cell(const Cell& c, const ChainArgs& a, unsigned inner_workers) {
    const auto start = std::chrono::steady_clock::now();
    ChainRow r;
    if (a.engine == "analytic") r = run_analytic(c);
    else if (a.engine == "track") r = run_track(c, a);
    else if (a.engine == "markov") r = run_markov(c, a);
    else if (a.engine == "mc") {
        r.method = "trajectory";
        fill_batch(r, run_batch(c.params, c.protocol, a.samples, a.seed, inner_workers));
    } else {
        r.method = "event-queue";
        DesOptions o;
        o.delay = a.delay;
        fill_batch(r, run_des_batch(c.params, c.protocol, a.samples, a.seed, o, inner_workers));
    }
    r.engine = a.engine;
    r.cell = c;
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline std::string format_rows(const std::vector<ChainRow>& rows, const std::string& format, bool timing) {
    std::ostringstream s;
    if (format == "json") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            const auto& p = r.cell.params;
            nlohmann::ordered_json j;
            j["engine"] = r.engine;
            j["method"] = r.method;
            j["n"] = p.n;
            j["p_g"] = p.p_g;
            j["p_s"] = p.p_s;
            j["t_coh"] = json_num(p.t_coh);
            j["tau"] = p.tau ? nlohmann::ordered_json(*p.tau) : nlohmann::ordered_json(nullptr);
            j["protocol"] = r.cell.protocol.to_string();
            j["mean_t"] = json_num(r.mean_t);
            j["stddev_t"] = json_opt(r.stddev_t);
            j["mean_w"] = json_opt(r.mean_w);
            j["mean_F"] = r.mean_w ? json_num(fidelity_of(*r.mean_w)) : nlohmann::ordered_json(nullptr);
            j["captured_mass"] = json_opt(r.captured_mass);
            j["stderr_t"] = json_opt(r.stderr_t);
            j["n_samples"] = r.n_samples ? nlohmann::ordered_json(*r.n_samples) : nlohmann::ordered_json(nullptr);
            j["seed"] = r.seed ? nlohmann::ordered_json(*r.seed) : nlohmann::ordered_json(nullptr);
            if (timing) j["wall_ms"] = r.wall_ms;
            arr.push_back(j);
        }
        nlohmann::ordered_json doc;
        doc["rows"] = arr;
        s << doc.dump(2) << '\n';
        return s.str();
    }
    s << "engine,method,n,p_g,p_s,t_coh,tau,protocol,mean_t,stddev_t,mean_w,mean_F,captured_mass,stderr_t,"
         "n_samples,seed";
    if (timing) s << ",wall_ms";
    s << '\n';
    for (const auto& r : rows) {
        const auto& p = r.cell.params;
        s << r.engine << ',' << r.method << ',' << p.n << ',' << format_number(p.p_g) << ','
          << format_number(p.p_s) << ',' << format_number(p.t_coh) << ',' << (p.tau ? std::to_string(*p.tau) : "")
          << ',' << r.cell.protocol.to_string() << ',' << format_number(r.mean_t) << ',' << csv_opt(r.stddev_t)
          << ',' << csv_opt(r.mean_w) << ','
          << (r.mean_w ? format_number(fidelity_of(*r.mean_w)) : std::string()) << ','
          << csv_opt(r.captured_mass) << ',' << csv_opt(r.stderr_t) << ','
          << (r.n_samples ? std::to_string(*r.n_samples) : "") << ','
          << (r.seed ? std::to_string(*r.seed) : "");
        if (timing) s << ',' << format_number(r.wall_ms);
        s << '\n';
    }
    return s.str();
}

// Distribution export of a single grid cell.
inline void write_distribution(const Cell& c, const ChainArgs& a) {
    if (a.engine == "analytic") throw FeatureMismatchError("engine analytic has no distribution export");
    write_file(a.dist_out, [&](std::ostream& os) {
        if (a.engine == "track") {
            TrackOptions o;
            o.t_trunc = a.trunc;
            write_csv(os, chain_distribution(c.params, c.protocol, o));
        } else if (a.engine == "markov") {
            const auto ch = markov_chain_for(c, a);
            const std::size_t T =
                a.trunc ? *a.trunc : static_cast<std::size_t>(std::ceil(40.0 * absorption_stats(ch).mean));
            write_csv(os, waiting_pmf(ch, T));
        } else if (a.engine == "mc") {
            write_csv(os, run_batch(c.params, c.protocol, a.samples, a.seed));
        } else {
            DesOptions o;
            o.delay = a.delay;
            write_csv(os, run_des_batch(c.params, c.protocol, a.samples, a.seed, o));
        }
    });
}

inline int cmd_chain(const ChainArgs& a, std::ostream& out) {
    const auto cells = expand_grid(a.grid);
    if (a.engine != "des" && a.delay != 0) throw UsageError("--delay applies to engine des only");
    if (a.engine != "markov" && (a.swap_time != "zero-step" || !a.dot_out.empty()))
        throw UsageError("--swap-time and --dot-out apply to engine markov only");
    if ((!a.dist_out.empty() || !a.dot_out.empty()) && cells.size() != 1)
        throw UsageError("--dist-out and --dot-out need a single grid cell");
    if ((a.engine == "mc" || a.engine == "des") && a.samples < 1) throw DomainError("--samples must be >= 1");

    std::vector<ChainRow> rows(cells.size());
    const unsigned inner = cells.size() > 1 ? 1u : worker_count();
    parallel_for(cells.size(), [&](std::size_t i) { rows[i] = run_cell(cells[i], a, inner); },
                 cells.size() > 1 ? worker_count() : 1u);
    if (!a.dist_out.empty()) write_distribution(cells[0], a);
    if (!a.dot_out.empty()) {
        const auto ch = markov_chain_for(cells[0], a);
        write_file(a.dot_out, [&](std::ostream& os) { write_dot(os, ch); });
    }
    emit(a.out, out, format_rows(rows, a.out.format, a.timing));
    return kExitOk;
}

// ---------------------------------------------------------------- compare

struct CompareArgs {
    std::vector<int> n{1, 2, 3, 4};
    std::vector<double> p_g{0.1, 0.5};
    std::vector<double> p_s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::optional<std::size_t> trunc;
    std::string pmf_out;
    OutputOptions out;
};

struct CompareRow {
    ChainParams params;
    double exact = 0.0;
    double captured_mass = 0.0;
    double mean_only = 0.0, three_over_two = 0.0, geometric_level = 0.0, det_swap = 0.0;
};

inline double relative_error(double approx, double exact) { return std::abs(approx - exact) / exact; }

inline CompareRow compare_cell(const ChainParams& p, const std::optional<std::size_t>& trunc) {
    CompareRow r;
    r.params = p;
    TrackOptions o;
    o.t_trunc = trunc;
    const auto e = exact_mean(p, o);
    r.exact = e.mean;
    r.captured_mass = e.captured_mass;
    r.mean_only = formulas::mean_only(p);
    r.three_over_two = formulas::three_over_two(p);
    r.geometric_level = formulas::geometric_level_mean(p);
    // swaps treated as deterministic, then one 1/p_s factor per level
    r.det_swap = formulas::det_swap_mean(1L << p.n, p.p_g) / std::pow(p.p_s, p.n);
    return r;
}

inline int cmd_compare(const CompareArgs& a, std::ostream& out) {
    GridArgs g;
    g.n = a.n;
    g.p_g = a.p_g;
    g.p_s = a.p_s;
    const auto cells = expand_grid(g);
    if (!a.pmf_out.empty() && cells.size() != 1) throw UsageError("--pmf-out needs a single grid cell");
    for (const auto& c : cells)
        if (c.params.n < 1) throw DomainError("compare: n must be >= 1");

    std::vector<CompareRow> rows(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) { rows[i] = compare_cell(cells[i].params, a.trunc); });

    if (!a.pmf_out.empty()) {
        TrackOptions o;
        o.t_trunc = a.trunc;
        const auto d = chain_distribution(cells[0].params, o);
        const double q = 1.0 / d.mean();
        write_file(a.pmf_out, [&](std::ostream& os) {
            os << "t,exact_pmf,geometric_pmf\n";
            for (std::size_t t = 1; t <= d.t_trunc(); ++t)
                os << t << ',' << format_number(d.prob(t)) << ','
                   << format_number(q * std::pow(1.0 - q, static_cast<double>(t - 1))) << '\n';
        });
    }

    std::ostringstream s;
    if (a.out.format == "json") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json j;
            j["n"] = r.params.n;
            j["p_g"] = r.params.p_g;
            j["p_s"] = r.params.p_s;
            j["exact_mean"] = r.exact;
            j["captured_mass"] = r.captured_mass;
            j["mean_only"] = r.mean_only;
            j["err_mean_only"] = relative_error(r.mean_only, r.exact);
            j["three_over_two"] = r.three_over_two;
            j["err_three_over_two"] = relative_error(r.three_over_two, r.exact);
            j["geometric_level"] = r.geometric_level;
            j["err_geometric_level"] = relative_error(r.geometric_level, r.exact);
            j["det_swap"] = r.det_swap;
            j["err_det_swap"] = relative_error(r.det_swap, r.exact);
            arr.push_back(j);
        }
        nlohmann::ordered_json doc;
        doc["rows"] = arr;
        s << doc.dump(2) << '\n';
    } else {
        s << "n,p_g,p_s,exact_mean,captured_mass,mean_only,err_mean_only,three_over_two,err_three_over_two,"
             "geometric_level,err_geometric_level,det_swap,err_det_swap\n";
        for (const auto& r : rows) {
            s << r.params.n << ',' << format_number(r.params.p_g) << ',' << format_number(r.params.p_s) << ','
              << format_number(r.exact) << ',' << format_number(r.captured_mass);
            for (double x : {r.mean_only, r.three_over_two, r.geometric_level, r.det_swap})
                s << ',' << format_number(x) << ',' << format_number(relative_error(x, r.exact));
            s << '\n';
        }
    }
    emit(a.out, out, s.str());
    return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    GridArgs grid;
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    long delay = 0;
    std::string trace;
    OutputOptions out;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    const auto cells = expand_grid(a.grid);
    if (cells.size() != 1) throw UsageError("simulate takes single parameter values");
    const auto& c = cells[0];
    DesOptions o;
    o.delay = a.delay;
    const auto s = run_des_batch(c.params, c.protocol, a.samples, a.seed, o);

    // trace of the first run of the batch
    DesOptions traced = o;
    traced.hash_trace = true;
    std::ofstream tf;
    if (!a.trace.empty()) {
        tf.open(a.trace, std::ios::binary);
        if (!tf) throw DomainError("cannot open trace file \"" + a.trace + "\"");
        traced.trace = &tf;
    }
    const auto first = simulate_chain_run(c.params, c.protocol, substream_seed(a.seed, 0), traced);

    std::ostringstream os;
    if (a.out.format == "json") {
        auto j = summary_json(s);
        j["delay"] = a.delay;
        j["trace_hash"] = hex64(first.trace_hash);
        j["trace_events"] = first.events;
        os << j.dump(2) << '\n';
    } else {
        write_csv(os, s);
    }
    emit(a.out, out, os.str());
    return kExitOk;
}

// ---------------------------------------------------------------- entry point

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"qnd: quantum network capacity bounds and repeater-chain waiting times"};
    app.require_subcommand(1);

    BoundsArgs ba;
    auto* bounds = app.add_subcommand("bounds", "Capacity bounds of a network file via flow LPs");
    bounds->add_option("network", ba.network, "Network JSON file")->required();
    bounds->add_option("--bipartite", ba.bipartite, "Two end nodes")->expected(2);
    bounds->add_flag("--multipair", ba.multipair, "Concurrent pairs (network commodities or --pairs)");
    bounds->add_flag("--multipartite", ba.multipartite, "Multipartite states (network users or --users)");
    bounds->add_option("--pairs", ba.pairs, "Pairs as A:B (comma list)")->delimiter(',');
    bounds->add_option("--users", ba.users, "Users (comma list)")->delimiter(',');
    bounds->add_option("--objective", ba.objective, "Multipair objective")->check(CLI::IsMember({"total", "worst"}));
    bounds->add_option("--unit", ba.unit, "network-use, channel-use or fixed-q");
    bounds->add_flag("--esq", ba.esq, "Squashed-entanglement upper weights for lossy channels");
    bounds->add_option("--slack", ba.slack, "Numeric multicommodity slack factor");
    bounds->add_option("--packing", ba.packing, "Steiner packing constants: kriesell, lau or petingi");
    add_output_options(bounds, ba.out);

    ChainArgs ca;
    auto* chain = app.add_subcommand("chain", "Waiting time and quality of a repeater chain");
    chain->add_option("engine", ca.engine, "analytic, track, markov, mc or des")
        ->required()
        ->check(CLI::IsMember({"analytic", "track", "markov", "mc", "des"}));
    add_grid_options(chain, ca.grid);
    chain->add_option("--trunc", ca.trunc, "Truncation horizon (track, markov export)");
    chain->add_option("--samples", ca.samples, "Samples per cell (mc, des)");
    chain->add_option("--seed", ca.seed, "Master seed (mc, des)");
    chain->add_option("--swap-time", ca.swap_time, "Markov swap timing")
        ->check(CLI::IsMember({"zero-step", "one-step"}));
    chain->add_option("--delay", ca.delay, "Classical delay per swap (des)");
    chain->add_flag("--timing", ca.timing, "Add a wall_ms column");
    chain->add_option("--dist-out", ca.dist_out, "Write the waiting-time distribution CSV");
    chain->add_option("--dot-out", ca.dot_out, "Write the Markov chain as Graphviz DOT");
    add_output_options(chain, ca.out);

    CompareArgs cmpa;
    auto* compare = app.add_subcommand("compare", "Relative error of mean waiting-time approximations");
    compare->add_option("--n", cmpa.n, "Nesting levels (comma list)")->delimiter(',');
    compare->add_option("--pg", cmpa.p_g, "Link generation probability (comma list)")->delimiter(',');
    compare->add_option("--ps", cmpa.p_s, "Swap success probability (comma list)")->delimiter(',');
    compare->add_option("--trunc", cmpa.trunc, "Truncation horizon");
    compare->add_option("--pmf-out", cmpa.pmf_out, "Exact PMF next to the moment-matched geometric PMF");
    add_output_options(compare, cmpa.out);

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Discrete-event simulation batch");
    add_grid_options(simulate, sa.grid);
    simulate->add_option("--samples", sa.samples, "Number of runs");
    simulate->add_option("--seed", sa.seed, "Master seed");
    simulate->add_option("--delay", sa.delay, "Classical delay per swap");
    simulate->add_option("--trace", sa.trace, "Event trace of the first run");
    add_output_options(simulate, sa.out);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) {
                app.exit(e, out, err);
                return kExitOk;
            }
            app.exit(e, err, err);
            return kExitUsage;
        }
        if (*bounds) return cmd_bounds(ba, out);
        if (*chain) return cmd_chain(ca, out);
        if (*compare) return cmd_compare(cmpa, out);
        return cmd_simulate(sa, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DomainError& e) {
        err << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kExitInput;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << '\n';
        return kExitInput;
    } catch (const FeatureMismatchError& e) {
        err << "unsupported: " << e.what() << '\n';
        return kExitInput;
    } catch (const Error& e) {
        err << "engine error: " << e.what() << '\n';
        return kExitEngine;
    }
}

}  // namespace qnet::cli
