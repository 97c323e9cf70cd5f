#pragma once

// Flow programs over undirected weighted graphs and exhaustive cut oracles.
//
// Every flow quantity is the value of a linear program built here and solved
// by lp::solve. The brute-force routines are independent of the LP path and
// exist to check it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qnet/error.hpp"
#include "qnet/lp.hpp"
#include "qnet/netmodel.hpp"

namespace qnet {

using Commodity = std::pair<std::size_t, std::size_t>;

enum class FlowObjective { Total, Worst };

struct FlowLimits {
    std::size_t min_cut_vertices = 24;
    std::size_t multicut_edges = 22;
    std::size_t cut_ratio_vertices = 20;
    std::size_t steiner_edges = 12;
};

/// Per-commodity edge flows. flow[i][e] = (f_uv, f_vu) for the e-th edge
/// {u,v} of the graph, in graph edge order.
struct FlowAssignment {
    std::vector<std::vector<std::pair<double, double>>> flow;
    std::vector<double> values;
};

// ---------------------------------------------------------------------------
// Generic flow program

/// One undirected edge of a flow program. Its capacity is
/// constant + sum_j coeff_j * q[j]; an infinite term removes the row.
struct FlowEdgeSpec {
    std::size_t u = 0;
    std::size_t v = 0;
    double constant = 0.0;
    std::vector<std::pair<std::size_t, double>> q_terms;
};

struct FlowProgramSpec {
    std::size_t num_vertices = 0;
    std::vector<FlowEdgeSpec> edges;
    std::vector<Commodity> commodities;
    FlowObjective objective = FlowObjective::Total;
    // true: commodities share each edge's capacity. false: every commodity
    // gets its own copy of the capacity rows (pairs routed independently).
    bool shared_capacity = true;
    // Number of usage-frequency variables; when nonzero they are LP
    // variables constrained by sum q = 1.
    std::size_t num_q = 0;
};

struct FlowProgramResult {
    lp::Status status = lp::Status::Optimal;
    double value = 0.0;
    FlowAssignment assignment;
    std::vector<double> q;
    std::size_t num_vars = 0;
    std::size_t num_rows = 0;
};

inline FlowProgramResult solve_flow_program(const FlowProgramSpec& spec) {
    const std::size_t E = spec.edges.size();
    const std::size_t k = spec.commodities.size();
    if (k == 0) throw DomainError("flow program needs at least one commodity");
    for (const auto& [s, t] : spec.commodities) {
        if (s >= spec.num_vertices || t >= spec.num_vertices)
            throw DomainError("commodity endpoint not in graph");
        if (s == t) throw DomainError("commodity endpoints must differ");
    }
    for (const auto& e : spec.edges) {
        if (e.u >= spec.num_vertices || e.v >= spec.num_vertices || e.u == e.v)
            throw DomainError("flow edge endpoints invalid");
        for (const auto& [j, c] : e.q_terms)
            if (j >= spec.num_q) throw DomainError("flow edge references unknown q variable");
    }

    const bool worst = spec.objective == FlowObjective::Worst;
    auto fwd = [&](std::size_t i, std::size_t e) { return 2 * (i * E + e); };
    auto bwd = [&](std::size_t i, std::size_t e) { return 2 * (i * E + e) + 1; };
    const std::size_t q_off = 2 * k * E;
    const std::size_t worst_var = q_off + spec.num_q;
    const std::size_t nvars = worst_var + (worst ? 1 : 0);

    // Net outflow of commodity i at vertex w, as a coefficient row.
    auto net_out = [&](std::size_t i, std::size_t w, std::vector<double>& row, double sign) {
        for (std::size_t e = 0; e < E; ++e) {
            const auto& ed = spec.edges[e];
            if (ed.u == w) {
                row[fwd(i, e)] += sign;
                row[bwd(i, e)] -= sign;
            } else if (ed.v == w) {
                row[bwd(i, e)] += sign;
                row[fwd(i, e)] -= sign;
            }
        }
    };

    std::vector<double> c(nvars, 0.0);
    if (worst) {
        c[worst_var] = 1.0;
    } else {
        for (std::size_t i = 0; i < k; ++i) net_out(i, spec.commodities[i].first, c, 1.0);
    }

    std::vector<std::vector<double>> A_ineq, A_eq;
    std::vector<double> b_ineq, b_eq;

    auto capacity_finite = [](const FlowEdgeSpec& e) {
        if (!std::isfinite(e.constant)) return false;
        for (const auto& [j, coeff] : e.q_terms)
            if (!std::isfinite(coeff)) return false;
        return true;
    };

    const std::size_t groups = spec.shared_capacity ? 1 : k;
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t e = 0; e < E; ++e) {
            const auto& ed = spec.edges[e];
            if (!capacity_finite(ed)) continue;
            std::vector<double> row(nvars, 0.0);
            for (std::size_t i = 0; i < k; ++i) {
                if (!spec.shared_capacity && i != g) continue;
                row[fwd(i, e)] = 1.0;
                row[bwd(i, e)] = 1.0;
            }
            for (const auto& [j, coeff] : ed.q_terms) row[q_off + j] -= coeff;
            A_ineq.push_back(std::move(row));
            b_ineq.push_back(ed.constant);
        }
    }

    for (std::size_t i = 0; i < k; ++i) {
        const auto [s, t] = spec.commodities[i];
        for (std::size_t w = 0; w < spec.num_vertices; ++w) {
            if (w == s || w == t) continue;
            std::vector<double> row(nvars, 0.0);
            net_out(i, w, row, 1.0);
            if (std::all_of(row.begin(), row.end(), [](double x) { return x == 0.0; })) continue;
            A_eq.push_back(std::move(row));
            b_eq.push_back(0.0);
        }
    }

    if (worst) {
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> row(nvars, 0.0);
            row[worst_var] = 1.0;
            net_out(i, spec.commodities[i].first, row, -1.0);
            A_ineq.push_back(std::move(row));
            b_ineq.push_back(0.0);
        }
    }

    if (spec.num_q > 0) {
        std::vector<double> row(nvars, 0.0);
        for (std::size_t j = 0; j < spec.num_q; ++j) row[q_off + j] = 1.0;
        A_eq.push_back(std::move(row));
        b_eq.push_back(1.0);
    }

    auto program = lp::from_inequalities(c, A_ineq, b_ineq, A_eq, b_eq);
    const auto res = lp::solve(program.lp);

    FlowProgramResult out;
    out.status = res.status;
    out.num_vars = program.lp.num_vars();
    out.num_rows = program.lp.num_rows();
    if (res.status == lp::Status::Infeasible) throw SolverError("flow program infeasible");
    if (res.status == lp::Status::Unbounded) {
        out.value = kInfinity;
        return out;
    }
    const auto x = program.map.original(res.solution);
    out.value = res.value;
    out.assignment.flow.assign(k, std::vector<std::pair<double, double>>(E));
    out.assignment.values.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t s = spec.commodities[i].first;
        for (std::size_t e = 0; e < E; ++e) {
            out.assignment.flow[i][e] = {x[fwd(i, e)], x[bwd(i, e)]};
            const auto& ed = spec.edges[e];
            if (ed.u == s) out.assignment.values[i] += x[fwd(i, e)] - x[bwd(i, e)];
            if (ed.v == s) out.assignment.values[i] += x[bwd(i, e)] - x[fwd(i, e)];
        }
    }
    out.q.assign(x.begin() + static_cast<std::ptrdiff_t>(q_off),
                 x.begin() + static_cast<std::ptrdiff_t>(q_off + spec.num_q));
    return out;
}

inline FlowProgramSpec flow_spec_from_graph(const WeightedUGraph& g, std::vector<Commodity> commodities,
                                            FlowObjective objective, bool shared_capacity = true) {
    FlowProgramSpec spec;
    spec.num_vertices = g.num_vertices();
    for (const auto& e : g.edges()) spec.edges.push_back({e.u, e.v, e.weight, {}});
    spec.commodities = std::move(commodities);
    spec.objective = objective;
    spec.shared_capacity = shared_capacity;
    return spec;
}

// ---------------------------------------------------------------------------
// Independent verification

struct FlowCheck {
    bool ok = true;
    double capacity_violation = 0.0;
    double conservation_violation = 0.0;
    double negativity = 0.0;
    std::vector<double> values;
};

/// Re-derives capacity use, conservation and commodity values straight from
/// the edge flows, without touching the LP.
inline FlowCheck verify_flow(const WeightedUGraph& g, const std::vector<Commodity>& commodities,
                             const FlowAssignment& a, bool shared_capacity = true, double tol = 1e-7) {
    FlowCheck chk;
    const auto& edges = g.edges();
    const std::size_t k = commodities.size();
    if (a.flow.size() != k) throw DomainError("verify_flow: commodity count mismatch");
    for (const auto& f : a.flow)
        if (f.size() != edges.size()) throw DomainError("verify_flow: edge count mismatch");

    for (std::size_t e = 0; e < edges.size(); ++e) {
        double used_total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto [f, b] = a.flow[i][e];
            chk.negativity = std::max({chk.negativity, -f, -b});
            used_total += f + b;
            if (!shared_capacity)
                chk.capacity_violation = std::max(chk.capacity_violation, f + b - edges[e].weight);
        }
        if (shared_capacity)
            chk.capacity_violation = std::max(chk.capacity_violation, used_total - edges[e].weight);
    }

    chk.values.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> out(g.num_vertices(), 0.0);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [f, b] = a.flow[i][e];
            out[edges[e].u] += f - b;
            out[edges[e].v] += b - f;
        }
        const auto [s, t] = commodities[i];
        for (std::size_t w = 0; w < g.num_vertices(); ++w)
            if (w != s && w != t) chk.conservation_violation = std::max(chk.conservation_violation, std::abs(out[w]));
        chk.values[i] = out[s];
        chk.conservation_violation = std::max(chk.conservation_violation, std::abs(out[s] + out[t]));
    }
    chk.ok = chk.capacity_violation <= tol && chk.conservation_violation <= tol && chk.negativity <= tol;
    return chk;
}

// ---------------------------------------------------------------------------
// Max flow and multicommodity flow

struct FlowResult {
    double value = 0.0;
    FlowAssignment assignment;
};

inline FlowResult max_flow(const WeightedUGraph& g, std::size_t s, std::size_t t) {
    g.check_vertex(s);
    g.check_vertex(t);
    if (s == t) throw DomainError("max_flow: s and t must differ");
    auto r = solve_flow_program(flow_spec_from_graph(g, {{s, t}}, FlowObjective::Total));
    return {r.value, std::move(r.assignment)};
}

inline FlowResult max_flow(const WeightedUGraph& g, const std::string& s, const std::string& t) {
    return max_flow(g, g.index(s), g.index(t));
}

inline FlowResult multicommodity_flow(const WeightedUGraph& g, const std::vector<Commodity>& commodities,
                                      FlowObjective objective) {
    for (const auto& [s, t] : commodities) {
        g.check_vertex(s);
        g.check_vertex(t);
    }
    auto r = solve_flow_program(flow_spec_from_graph(g, commodities, objective));
    return {r.value, std::move(r.assignment)};
}

// ---------------------------------------------------------------------------
// Brute-force oracles

struct CutResult {
    std::vector<std::size_t> partition;  // W, sorted
    std::vector<std::size_t> cut_edges;  // indices into g.edges()
    double weight = 0.0;
};

namespace detail {

inline std::vector<std::size_t> mask_to_list(std::uint64_t mask, std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (mask >> i & 1U) out.push_back(i);
    return out;
}

inline double cut_weight(const WeightedUGraph& g, std::uint64_t mask, std::vector<std::size_t>* cut = nullptr) {
    double w = 0.0;
    const auto& edges = g.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (((mask >> edges[e].u) & 1U) != ((mask >> edges[e].v) & 1U)) {
            w += edges[e].weight;
            if (cut) cut->push_back(e);
        }
    }
    return w;
}

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

inline constexpr double kTieTol = 1e-12;

}  // namespace detail

/// Minimum-weight s-t cut by enumerating every W with s in W and t outside.
/// Ties go to the lexicographically smallest sorted W.
inline CutResult min_cut_bruteforce(const WeightedUGraph& g, std::size_t s, std::size_t t,
                                    const FlowLimits& limits = {}) {
    g.check_vertex(s);
    g.check_vertex(t);
    if (s == t) throw DomainError("min_cut: s and t must differ");
    const std::size_t n = g.num_vertices();
    if (n > limits.min_cut_vertices)
        throw SizeLimitError("min_cut_bruteforce: " + std::to_string(n) + " vertices exceeds limit " +
                             std::to_string(limits.min_cut_vertices));

    std::vector<std::size_t> free;
    for (std::size_t v = 0; v < n; ++v)
        if (v != s && v != t) free.push_back(v);

    // Gray-code walk with an incrementally maintained cut weight; infinite
    // edges are counted separately so no inf - inf arises. Candidates are
    // re-scored from scratch before being compared.
    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (const auto& e : g.edges()) {
        adj[e.u].emplace_back(e.v, e.weight);
        adj[e.v].emplace_back(e.u, e.weight);
    }
    std::uint64_t mask = 1ULL << s;
    double finite_w = 0.0;
    long inf_count = 0;
    for (const auto& [u, w] : adj[s]) {
        if (std::isinf(w)) ++inf_count;
        else finite_w += w;
    }

    CutResult best;
    best.weight = kInfinity;
    bool have = false;
    std::vector<std::size_t> best_list;
    auto consider = [&](std::uint64_t m) {
        const double approx = inf_count > 0 ? kInfinity : finite_w;
        if (have && approx > best.weight + 1e-9 * (1.0 + std::abs(best.weight))) return;
        const double exact = detail::cut_weight(g, m);
        auto list = detail::mask_to_list(m, n);
        if (!have || exact < best.weight - detail::kTieTol ||
            (std::abs(exact - best.weight) <= detail::kTieTol && list < best_list) ||
            (std::isinf(exact) && std::isinf(best.weight) && list < best_list)) {
            have = true;
            best.weight = exact;
            best_list = std::move(list);
            best.partition = best_list;
        }
    };
    consider(mask);
    const std::uint64_t total = 1ULL << free.size();
    for (std::uint64_t i = 1; i < total; ++i) {
        const auto bit = static_cast<std::size_t>(__builtin_ctzll(i));
        const std::size_t v = free[bit];
        const bool was_in = (mask >> v) & 1U;
        for (const auto& [u, w] : adj[v]) {
            const bool u_in = (mask >> u) & 1U;
            // Before the toggle the edge is cut iff u_in != was_in.
            const int delta = (u_in == was_in) ? 1 : -1;
            if (std::isinf(w)) inf_count += delta;
            else finite_w += delta * w;
        }
        mask ^= 1ULL << v;
        consider(mask);
    }

    std::uint64_t best_mask = 0;
    for (auto v : best.partition) best_mask |= 1ULL << v;
    best.cut_edges.clear();
    best.weight = detail::cut_weight(g, best_mask, &best.cut_edges);
    return best;
}

inline CutResult min_cut_bruteforce(const WeightedUGraph& g, const std::string& s, const std::string& t) {
    return min_cut_bruteforce(g, g.index(s), g.index(t));
}

struct MulticutResult {
    double value = 0.0;
    std::vector<std::size_t> edges;  // indices into g.edges()
};

/// Minimum-weight edge set whose removal disconnects every commodity pair.
inline MulticutResult min_multicut_bruteforce(const WeightedUGraph& g, const std::vector<Commodity>& commodities,
                                              const FlowLimits& limits = {}) {
    const std::size_t m = g.num_edges();
    if (m > limits.multicut_edges)
        throw SizeLimitError("min_multicut_bruteforce: " + std::to_string(m) + " edges exceeds limit " +
                             std::to_string(limits.multicut_edges));
    if (commodities.empty()) throw DomainError("min_multicut: no commodities");
    for (const auto& [s, t] : commodities) {
        g.check_vertex(s);
        g.check_vertex(t);
        if (s == t) throw DomainError("min_multicut: commodity endpoints must differ");
    }
    const auto& edges = g.edges();

    bool have = false;
    MulticutResult best;
    best.value = kInfinity;
    for (std::uint64_t mask = 0; mask < (1ULL << m); ++mask) {
        double w = 0.0;
        for (std::size_t e = 0; e < m; ++e)
            if (mask >> e & 1U) w += edges[e].weight;
        if (have && !(w < best.value - detail::kTieTol)) continue;
        detail::DisjointSets ds(g.num_vertices());
        for (std::size_t e = 0; e < m; ++e)
            if (!(mask >> e & 1U)) ds.unite(edges[e].u, edges[e].v);
        bool separated = true;
        for (const auto& [s, t] : commodities) separated = separated && ds.find(s) != ds.find(t);
        if (!separated) continue;
        have = true;
        best.value = w;
        best.edges = detail::mask_to_list(mask, m);
    }
    return best;
}

struct CutRatioResult {
    double value = 0.0;
    std::vector<std::size_t> partition;
};

/// min over W of c(boundary W) / (number of commodity pairs W separates).
inline CutRatioResult min_cut_ratio_bruteforce(const WeightedUGraph& g, const std::vector<Commodity>& commodities,
                                               const FlowLimits& limits = {}) {
    const std::size_t n = g.num_vertices();
    if (n > limits.cut_ratio_vertices)
        throw SizeLimitError("min_cut_ratio_bruteforce: " + std::to_string(n) + " vertices exceeds limit " +
                             std::to_string(limits.cut_ratio_vertices));
    if (commodities.empty()) throw DomainError("min_cut_ratio: no commodities");
    for (const auto& [s, t] : commodities) {
        g.check_vertex(s);
        g.check_vertex(t);
    }
    bool have = false;
    CutRatioResult best;
    best.value = kInfinity;
    for (std::uint64_t mask = 1; mask + 1 < (1ULL << n); ++mask) {
        std::size_t d = 0;
        for (const auto& [s, t] : commodities)
            if (((mask >> s) & 1U) != ((mask >> t) & 1U)) ++d;
        if (d == 0) continue;
        const double ratio = detail::cut_weight(g, mask) / static_cast<double>(d);
        auto list = detail::mask_to_list(mask, n);
        if (!have || ratio < best.value - detail::kTieTol ||
            ((std::abs(ratio - best.value) <= detail::kTieTol || (std::isinf(ratio) && std::isinf(best.value))) &&
             list < best.partition)) {
            have = true;
            best.value = ratio;
            best.partition = std::move(list);
        }
    }
    if (!have) throw DomainError("min_cut_ratio: no vertex subset separates any commodity pair");
    return best;
}

/// Minimum pairwise max-flow over the terminal set S.
inline double s_connectivity(const WeightedUGraph& g, const std::vector<std::size_t>& S) {
    if (S.size() < 2) throw DomainError("s_connectivity: S needs at least two vertices");
    double best = kInfinity;
    for (std::size_t i = 0; i < S.size(); ++i)
        for (std::size_t j = i + 1; j < S.size(); ++j) best = std::min(best, max_flow(g, S[i], S[j]).value);
    return best;
}

/// Unit-capacity multigraph; parallel edges are listed repeatedly.
struct UnitMultigraph {
    std::size_t num_vertices = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;

    /// Weighted graph whose edge weights are the multiplicities.
    WeightedUGraph to_weighted() const {
        WeightedUGraph g(num_vertices);
        for (const auto& [u, v] : edges) g.add_weight(u, v, 1.0);
        return g;
    }
};

/// Maximum number of edge-disjoint trees each connecting every vertex of S.
inline std::size_t steiner_packing_bruteforce(const UnitMultigraph& mg, const std::vector<std::size_t>& S,
                                              const FlowLimits& limits = {}) {
    const std::size_t m = mg.edges.size();
    if (m > limits.steiner_edges)
        throw SizeLimitError("steiner_packing_bruteforce: " + std::to_string(m) + " edges exceeds limit " +
                             std::to_string(limits.steiner_edges));
    if (S.size() < 2) throw DomainError("steiner_packing: S needs at least two vertices");
    for (auto v : S)
        if (v >= mg.num_vertices) throw DomainError("steiner_packing: terminal not in graph");
    for (const auto& [u, v] : mg.edges)
        if (u >= mg.num_vertices || v >= mg.num_vertices || u == v)
            throw DomainError("steiner_packing: invalid edge");

    // An edge set connecting S contains an S-tree, so packing connecting sets
    // is equivalent to packing trees.
    const std::uint64_t full = 1ULL << m;
    std::vector<char> connects(full, 0);
    for (std::uint64_t mask = 1; mask < full; ++mask) {
        detail::DisjointSets ds(mg.num_vertices);
        for (std::size_t e = 0; e < m; ++e)
            if (mask >> e & 1U) ds.unite(mg.edges[e].first, mg.edges[e].second);
        bool ok = true;
        for (auto v : S) ok = ok && ds.find(v) == ds.find(S[0]);
        connects[mask] = ok;
    }
    std::vector<std::uint8_t> best(full, 0);
    for (std::uint64_t mask = 1; mask < full; ++mask) {
        std::uint8_t b = 0;
        for (std::uint64_t sub = mask; sub; sub = (sub - 1) & mask)
            if (connects[sub]) b = std::max<std::uint8_t>(b, static_cast<std::uint8_t>(1 + best[mask ^ sub]));
        best[mask] = b;
    }
    return best[full - 1];
}

}  // namespace qnet
