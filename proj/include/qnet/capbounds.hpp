#pragma once

// Lower/upper capacity sandwiches for bipartite, multi-pair and multipartite
// distribution over a network. Each side is one flow LP: lower bounds use the
// channels' capacity values, upper bounds their entanglement values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qnet/error.hpp"
#include "qnet/flows.hpp"
#include "qnet/format.hpp"
#include "qnet/netmodel.hpp"

namespace qnet {

enum class Unit { PerChannelUse, PerNetworkUse, FixedQ };

inline const char* to_string(Unit u) {
    switch (u) {
        case Unit::PerChannelUse: return "channel-use";
        case Unit::PerNetworkUse: return "network-use";
        case Unit::FixedQ: return "fixed-q";
    }
    return "?";
}

inline Unit parse_unit(const std::string& s) {
    if (s == "channel-use") return Unit::PerChannelUse;
    if (s == "network-use") return Unit::PerNetworkUse;
    if (s == "fixed-q") return Unit::FixedQ;
    throw DomainError("unknown unit \"" + s + "\" (expected channel-use, network-use or fixed-q)");
}

/// Constants (g3, g4) of the Steiner-tree packing relation t_S >= floor(g3 lambda_S) - g4
/// used to turn the multipartite flow LP into a lower bound.
enum class TreePacking { Kriesell, Lau, Petingi };

struct BoundOptions {
    Unit unit = Unit::PerNetworkUse;
    bool use_esq = false;       // E_sq bound instead of PLOB as lossy upper weight
    double slack_factor = 1.0;  // numeric stand-in for g1(k) / g2(k)
    TreePacking packing = TreePacking::Kriesell;
};

struct BoundReport {
    double lower = 0.0;
    double upper = 0.0;
    Unit unit = Unit::PerNetworkUse;
    std::optional<std::vector<double>> q_opt_lower;
    std::optional<std::vector<double>> q_opt_upper;
    double slack_factor = 1.0;
    double upper_with_slack = 0.0;
    std::string slack_note;
};

namespace detail {

struct SideResult {
    double value = 0.0;
    std::optional<std::vector<double>> q;
};

// Builds the flow program of `net` for the given commodities: one undirected
// edge per node pair whose capacity combines both directed channels.
inline SideResult bound_side(const NetworkSpec& net, const std::vector<Commodity>& commodities,
                             FlowObjective objective, bool shared_capacity, Measure measure,
                             const BoundOptions& opt) {
    FlowProgramSpec spec;
    spec.num_vertices = net.nodes.size();
    spec.commodities = commodities;
    spec.objective = objective;
    spec.shared_capacity = shared_capacity;
    if (opt.unit == Unit::PerChannelUse) spec.num_q = net.edges.size();

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < net.nodes.size(); ++i) index[net.nodes[i]] = i;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_of;

    for (std::size_t j = 0; j < net.edges.size(); ++j) {
        const auto& e = net.edges[j];
        const auto key = std::minmax(index.at(e.from), index.at(e.to));
        auto it = edge_of.find(key);
        if (it == edge_of.end()) {
            it = edge_of.emplace(key, spec.edges.size()).first;
            spec.edges.push_back({key.first, key.second, 0.0, {}});
        }
        auto& fe = spec.edges[it->second];
        double val;
        if (opt.use_esq && measure == Measure::UpperEntanglement && e.channel.kind == ChannelModel::Kind::Lossy)
            val = esq_lossy_bound(e.channel.eta, true);
        else
            val = channel_value(e.channel, measure);
        switch (opt.unit) {
            case Unit::PerNetworkUse: fe.constant += val; break;
            case Unit::FixedQ: fe.constant += scaled(e.q, val); break;
            case Unit::PerChannelUse: fe.q_terms.emplace_back(j, val); break;
        }
    }

    const auto r = solve_flow_program(spec);
    SideResult out;
    out.value = r.value;
    if (opt.unit == Unit::PerChannelUse && std::isfinite(r.value)) out.q = r.q;
    return out;
}

inline std::vector<Commodity> resolve_pairs(const NetworkSpec& net,
                                            const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<Commodity> out;
    for (const auto& [a, b] : pairs) {
        auto ia = std::find(net.nodes.begin(), net.nodes.end(), a);
        auto ib = std::find(net.nodes.begin(), net.nodes.end(), b);
        if (ia == net.nodes.end()) throw DomainError("node \"" + a + "\" not in network");
        if (ib == net.nodes.end()) throw DomainError("node \"" + b + "\" not in network");
        if (a == b) throw DomainError("pair endpoints must differ (\"" + a + "\")");
        out.emplace_back(static_cast<std::size_t>(ia - net.nodes.begin()),
                         static_cast<std::size_t>(ib - net.nodes.begin()));
    }
    return out;
}

inline void check_sandwich(const BoundReport& r) {
    if (r.lower > r.upper + 1e-9)
        throw SolverError("lower bound " + format_number(r.lower) + " exceeds upper bound " +
                          format_number(r.upper));
}

}  // namespace detail

inline BoundReport bipartite_bounds(const NetworkSpec& net, const std::string& A, const std::string& B,
                                    const BoundOptions& opt = {}) {
    net.validate();
    const auto pairs = detail::resolve_pairs(net, {{A, B}});
    const auto lo = detail::bound_side(net, pairs, FlowObjective::Total, true, Measure::LowerCapacity, opt);
    const auto up = detail::bound_side(net, pairs, FlowObjective::Total, true, Measure::UpperEntanglement, opt);
    BoundReport r;
    r.unit = opt.unit;
    r.lower = lo.value;
    r.upper = up.value;
    r.q_opt_lower = lo.q;
    r.q_opt_upper = up.q;
    r.slack_factor = 1.0;
    r.upper_with_slack = r.upper;
    detail::check_sandwich(r);
    return r;
}

inline BoundReport multipair_bounds(const NetworkSpec& net,
                                    const std::vector<std::pair<std::string, std::string>>& pairs,
                                    FlowObjective objective, const BoundOptions& opt = {}) {
    net.validate();
    if (pairs.empty()) throw DomainError("multipair_bounds: at least one pair required");
    if (!(opt.slack_factor >= 1.0)) throw DomainError("slack factor must be >= 1");
    const auto cs = detail::resolve_pairs(net, pairs);
    const auto lo = detail::bound_side(net, cs, objective, true, Measure::LowerCapacity, opt);
    const auto up = detail::bound_side(net, cs, objective, true, Measure::UpperEntanglement, opt);
    BoundReport r;
    r.unit = opt.unit;
    r.lower = lo.value;
    r.upper = up.value;
    r.q_opt_lower = lo.q;
    r.q_opt_upper = up.q;
    r.slack_factor = opt.slack_factor;
    r.upper_with_slack = opt.slack_factor * r.upper;
    const std::string g = objective == FlowObjective::Total ? "g1" : "g2";
    r.slack_note = "upper is the flow value; the capacity bound is up to " + g + "(k) = O(log k) larger, k = " +
                   std::to_string(pairs.size());
    detail::check_sandwich(r);
    return r;
}

inline std::pair<double, double> tree_packing_constants(TreePacking p, std::size_t num_vertices,
                                                        std::size_t num_terminals) {
    switch (p) {
        case TreePacking::Kriesell: return {0.5, 0.0};
        case TreePacking::Lau: return {1.0 / 26.0, 0.0};
        case TreePacking::Petingi:
            return {static_cast<double>(num_vertices - num_terminals) / 2.0, 1.0};
    }
    return {0.5, 0.0};
}

inline BoundReport multipartite_bounds(const NetworkSpec& net, const std::vector<std::string>& users,
                                       const BoundOptions& opt = {}) {
    net.validate();
    if (users.size() < 2) throw DomainError("multipartite_bounds: at least two users required");
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < users.size(); ++i)
        for (std::size_t j = i + 1; j < users.size(); ++j) pairs.emplace_back(users[i], users[j]);
    const auto cs = detail::resolve_pairs(net, pairs);

    const auto lo = detail::bound_side(net, cs, FlowObjective::Worst, false, Measure::LowerCapacity, opt);
    const auto up = detail::bound_side(net, cs, FlowObjective::Worst, false, Measure::UpperEntanglement, opt);
    const auto [g3, g4] = tree_packing_constants(opt.packing, net.nodes.size(), users.size());

    BoundReport r;
    r.unit = opt.unit;
    // The floor and the additive g4 vanish per use in the asymptotic rate.
    r.lower = g3 * lo.value;
    r.upper = up.value;
    r.q_opt_lower = lo.q;
    r.q_opt_upper = up.q;
    r.slack_factor = 1.0;
    r.upper_with_slack = r.upper;
    r.slack_note = "lower = g3 * flow with g3 = " + format_number(g3) + ", g4 = " + format_number(g4);
    if (r.lower > r.upper + 1e-9)
        throw DomainError("tree-packing constant g3 = " + format_number(g3) +
                          " pushes the lower bound above the upper bound");
    return r;
}

inline nlohmann::json to_json(const BoundReport& r) {
    auto num = [](double x) -> nlohmann::json {
        if (std::isfinite(x)) return x;
        return format_number(x);
    };
    nlohmann::json j;
    j["lower"] = num(r.lower);
    j["upper"] = num(r.upper);
    j["unit"] = to_string(r.unit);
    j["slack_factor"] = num(r.slack_factor);
    j["upper_with_slack"] = num(r.upper_with_slack);
    j["slack_note"] = r.slack_note;
    if (r.q_opt_lower) j["q_opt_lower"] = *r.q_opt_lower;
    if (r.q_opt_upper) j["q_opt_upper"] = *r.q_opt_upper;
    return j;
}

}  // namespace qnet
