#pragma once

// Networks as directed multigraphs whose channels carry scalar
// entanglement/capacity values, and their undirected weighted projections.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qnet/error.hpp"

namespace qnet {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Measure { UpperEntanglement, LowerCapacity };

struct ChannelModel {
    enum class Kind { Lossy, Explicit };
    Kind kind = Kind::Lossy;
    double eta = 0.0;      // Lossy
    double E_upper = 0.0;  // Explicit
    double Q_lower = 0.0;  // Explicit

    static ChannelModel lossy(double eta) { return {Kind::Lossy, eta, 0.0, 0.0}; }
    static ChannelModel explicit_values(double E, double Q) { return {Kind::Explicit, 0.0, E, Q}; }

    void validate() const {
        if (kind == Kind::Lossy) {
            if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta out of range [0,1]");
        } else {
            if (!(Q_lower >= 0.0)) throw DomainError("Q must be >= 0");
            if (!(E_upper >= Q_lower)) throw DomainError("Q must not exceed E");
        }
    }

    bool operator==(const ChannelModel&) const = default;
};

/// Per-use channel value. Pure-loss channels return the PLOB value
/// -log2(1 - eta) for both measures; eta = 1 yields +inf.
inline double channel_value(const ChannelModel& ch, Measure m) {
    ch.validate();
    if (ch.kind == ChannelModel::Kind::Lossy) {
        if (ch.eta == 1.0) return kInfinity;
        return -std::log2(1.0 - ch.eta);
    }
    return m == Measure::UpperEntanglement ? ch.E_upper : ch.Q_lower;
}

/// Squashed-entanglement upper bound log2((1+eta)/(1-eta)) for a lossy channel.
inline double esq_lossy_bound(double eta, bool allow_infinity = false) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta out of range [0,1]");
    if (eta == 1.0) {
        if (allow_infinity) return kInfinity;
        throw DomainError("esq bound diverges at eta = 1");
    }
    return std::log2((1.0 + eta) / (1.0 - eta));
}

struct NetworkEdge {
    std::string from;
    std::string to;
    ChannelModel channel;
    double q = 1.0;

    bool operator==(const NetworkEdge&) const = default;
};

struct NetworkSpec {
    std::vector<std::string> nodes;
    std::vector<NetworkEdge> edges;
    std::vector<std::pair<std::string, std::string>> commodities;
    std::optional<std::vector<std::string>> users;

    bool operator==(const NetworkSpec&) const = default;

    bool has_node(const std::string& v) const {
        return std::find(nodes.begin(), nodes.end(), v) != nodes.end();
    }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& v : nodes)
            if (!seen.insert(v).second) throw ValidationError("duplicate node \"" + v + "\"");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto& e = edges[i];
            const std::string where = "edges[" + std::to_string(i) + "]";
            if (!seen.count(e.from)) throw ValidationError(where + ": unknown node \"" + e.from + "\"");
            if (!seen.count(e.to)) throw ValidationError(where + ": unknown node \"" + e.to + "\"");
            if (e.from == e.to) throw ValidationError(where + ": self-loop on \"" + e.from + "\"");
            if (!(e.q >= 0.0) || !std::isfinite(e.q)) throw ValidationError(where + ": q must be finite and >= 0");
            try {
                e.channel.validate();
            } catch (const DomainError& err) {
                throw ValidationError(where + ".channel: " + err.what());
            }
        }
        for (std::size_t i = 0; i < commodities.size(); ++i) {
            const auto& [a, b] = commodities[i];
            const std::string where = "commodities[" + std::to_string(i) + "]";
            if (!seen.count(a)) throw ValidationError(where + ": unknown node \"" + a + "\"");
            if (!seen.count(b)) throw ValidationError(where + ": unknown node \"" + b + "\"");
            if (a == b) throw ValidationError(where + ": endpoints must differ");
        }
        if (users) {
            std::set<std::string> u;
            for (const auto& v : *users) {
                if (!seen.count(v)) throw ValidationError("users: unknown node \"" + v + "\"");
                if (!u.insert(v).second) throw ValidationError("users: duplicate node \"" + v + "\"");
            }
        }
    }
};

/// Undirected graph with nonnegative weights and at most one edge per pair.
/// Vertices are addressed by index; names are kept for reporting.
class WeightedUGraph {
public:
    struct UEdge {
        std::size_t u;
        std::size_t v;
        double weight;
    };

    WeightedUGraph() = default;
    explicit WeightedUGraph(std::vector<std::string> names) : names_(std::move(names)) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (!index_.emplace(names_[i], i).second)
                throw ValidationError("duplicate vertex \"" + names_[i] + "\"");
        }
    }
    explicit WeightedUGraph(std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) add_vertex(std::to_string(i));
    }

    std::size_t add_vertex(const std::string& name) {
        auto [it, inserted] = index_.emplace(name, names_.size());
        if (!inserted) throw ValidationError("duplicate vertex \"" + name + "\"");
        names_.push_back(name);
        return it->second;
    }

    /// Adds w to the edge {u,v}, creating it if absent.
    void add_weight(std::size_t u, std::size_t v, double w) {
        check_vertex(u);
        check_vertex(v);
        if (u == v) throw ValidationError("self-loop on vertex \"" + names_[u] + "\"");
        if (!(w >= 0.0)) throw ValidationError("edge weights must be >= 0");
        const auto key = std::minmax(u, v);
        auto it = edge_index_.find(key);
        if (it == edge_index_.end()) {
            edge_index_.emplace(key, edges_.size());
            edges_.push_back({key.first, key.second, w});
        } else {
            edges_[it->second].weight += w;
        }
    }
    void add_weight(const std::string& u, const std::string& v, double w) {
        add_weight(index(u), index(v), w);
    }

    std::size_t num_vertices() const { return names_.size(); }
    std::size_t num_edges() const { return edges_.size(); }
    const std::vector<UEdge>& edges() const { return edges_; }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t i) const { return names_.at(i); }

    std::size_t index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DomainError("vertex \"" + name + "\" not in graph");
        return it->second;
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    /// Weight of {u,v}, or nullopt when there is no such edge.
    std::optional<double> weight(std::size_t u, std::size_t v) const {
        auto it = edge_index_.find(std::minmax(u, v));
        if (it == edge_index_.end()) return std::nullopt;
        return edges_[it->second].weight;
    }

    void check_vertex(std::size_t v) const {
        if (v >= names_.size()) throw DomainError("vertex index " + std::to_string(v) + " not in graph");
    }

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
    std::vector<UEdge> edges_;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_index_;
};

namespace detail {
// q * value with the convention 0 * inf = 0 (an unused channel carries nothing).
inline double scaled(double q, double value) { return q == 0.0 ? 0.0 : q * value; }
}  // namespace detail

/// Projects a network onto its undirected weighted graph:
/// weight{v,w} = q_vw * val(N_vw) + q_wv * val(N_wv).
/// use_esq replaces the upper weight of lossy channels with the E_sq bound.
inline WeightedUGraph undirect(const NetworkSpec& net, Measure m, bool use_esq = false) {
    net.validate();
    WeightedUGraph g(net.nodes);
    for (const auto& e : net.edges) {
        double val;
        if (use_esq && m == Measure::UpperEntanglement && e.channel.kind == ChannelModel::Kind::Lossy)
            val = esq_lossy_bound(e.channel.eta, true);
        else
            val = channel_value(e.channel, m);
        g.add_weight(e.from, e.to, detail::scaled(e.q, val));
    }
    return g;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& path,
                           std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw ParseError(path + ": unknown key \"" + it.key() + "\"");
    }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(path + ": missing key \"" + key + "\"");
    return *it;
}

inline double get_number(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw ParseError(path + ": expected a number");
    return v.get<double>();
}

inline std::string get_string(const nlohmann::json& v, const std::string& path) {
    if (!v.is_string()) throw ParseError(path + ": expected a string");
    return v.get<std::string>();
}

inline std::vector<std::string> get_string_list(const nlohmann::json& v, const std::string& path) {
    if (!v.is_array()) throw ParseError(path + ": expected an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_string(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace detail

/// Parses and validates a network document. Unknown keys are rejected.
inline NetworkSpec parse_network(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("line " + std::to_string(detail::line_of_offset(text, e.byte)) + ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError("$: expected an object");
    detail::reject_unknown(doc, "$", {"nodes", "edges", "commodities", "users"});

    NetworkSpec net;
    net.nodes = detail::get_string_list(detail::require(doc, "nodes", "$"), "$.nodes");

    const auto& edges = detail::require(doc, "edges", "$");
    if (!edges.is_array()) throw ParseError("$.edges: expected an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string path = "$.edges[" + std::to_string(i) + "]";
        const auto& e = edges[i];
        if (!e.is_object()) throw ParseError(path + ": expected an object");
        detail::reject_unknown(e, path, {"from", "to", "channel", "q"});
        NetworkEdge edge;
        edge.from = detail::get_string(detail::require(e, "from", path), path + ".from");
        edge.to = detail::get_string(detail::require(e, "to", path), path + ".to");
        if (e.contains("q")) edge.q = detail::get_number(e["q"], path + ".q");

        const std::string cpath = path + ".channel";
        const auto& ch = detail::require(e, "channel", path);
        if (!ch.is_object()) throw ParseError(cpath + ": expected an object");
        const std::string type = detail::get_string(detail::require(ch, "type", cpath), cpath + ".type");
        if (type == "lossy") {
            detail::reject_unknown(ch, cpath, {"type", "eta"});
            edge.channel = ChannelModel::lossy(detail::get_number(detail::require(ch, "eta", cpath), cpath + ".eta"));
        } else if (type == "explicit") {
            detail::reject_unknown(ch, cpath, {"type", "E", "Q"});
            edge.channel = ChannelModel::explicit_values(
                detail::get_number(detail::require(ch, "E", cpath), cpath + ".E"),
                detail::get_number(detail::require(ch, "Q", cpath), cpath + ".Q"));
        } else {
            throw ParseError(cpath + ".type: unknown channel type \"" + type + "\"");
        }
        net.edges.push_back(std::move(edge));
    }

    if (doc.contains("commodities")) {
        const auto& cs = doc["commodities"];
        if (!cs.is_array()) throw ParseError("$.commodities: expected an array");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            const std::string path = "$.commodities[" + std::to_string(i) + "]";
            auto pair = detail::get_string_list(cs[i], path);
            if (pair.size() != 2) throw ParseError(path + ": expected two node names");
            net.commodities.emplace_back(pair[0], pair[1]);
        }
    }
    if (doc.contains("users")) net.users = detail::get_string_list(doc["users"], "$.users");

    net.validate();
    return net;
}

inline nlohmann::json to_json(const NetworkSpec& net) {
    nlohmann::json doc;
    doc["nodes"] = net.nodes;
    doc["edges"] = nlohmann::json::array();
    for (const auto& e : net.edges) {
        nlohmann::json ch;
        if (e.channel.kind == ChannelModel::Kind::Lossy) {
            ch = {{"type", "lossy"}, {"eta", e.channel.eta}};
        } else {
            ch = {{"type", "explicit"}, {"E", e.channel.E_upper}, {"Q", e.channel.Q_lower}};
        }
        doc["edges"].push_back({{"from", e.from}, {"to", e.to}, {"channel", ch}, {"q", e.q}});
    }
    if (!net.commodities.empty()) {
        doc["commodities"] = nlohmann::json::array();
        for (const auto& [a, b] : net.commodities) doc["commodities"].push_back({a, b});
    }
    if (net.users) doc["users"] = *net.users;
    return doc;
}

inline std::string serialize_network(const NetworkSpec& net) { return to_json(net).dump(2) + "\n"; }

}  // namespace qnet
