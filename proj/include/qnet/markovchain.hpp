#pragma once

// Discrete Markov chain of a swap-only nested repeater chain. One tick is one
// generation attempt on every idle segment.
//
// A state records which links of the binary protocol tree currently exist.
// Subtree codes are laid out as [self][left][right], so a level-l subtree
// occupies 2^(l+1) - 1 bits and the whole chain fits in 63 bits for n <= 5.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qnet/chain.hpp"
#include "qnet/disttrack.hpp"
#include "qnet/error.hpp"
#include "qnet/format.hpp"

namespace qnet {

enum class SwapTiming { ZeroStep, OneStep };

inline const char* to_string(SwapTiming m) { return m == SwapTiming::ZeroStep ? "zero-step" : "one-step"; }

inline SwapTiming parse_swap_timing(const std::string& s) {
    if (s == "zero-step") return SwapTiming::ZeroStep;
    if (s == "one-step") return SwapTiming::OneStep;
    throw DomainError("unknown swap timing \"" + s + "\" (expected zero-step or one-step)");
}

struct MarkovOptions {
    std::size_t state_limit = std::size_t{1} << 20;
    bool merge_symmetric = false;  // identify states that differ by mirroring subtrees
    std::size_t dense_limit = 4096;
    std::size_t transition_limit = std::size_t{1} << 24;  // stored TPM entries
};

struct RepeaterMarkovChain {
    struct Entry {
        std::size_t col;
        double prob;
    };
    int n = 0;
    SwapTiming timing = SwapTiming::ZeroStep;
    bool merged = false;
    std::vector<std::uint64_t> states;          // codes; index 0 is the empty start state
    std::vector<std::vector<Entry>> tpm;        // row-sparse
    std::size_t absorbing = 0;

    std::size_t num_states() const { return states.size(); }
};

namespace markov_detail {

using Code = std::uint64_t;
using Dist = std::vector<std::pair<Code, double>>;

inline int code_bits(int level) { return (1 << (level + 1)) - 1; }

inline Code self_bit(int level) { return Code{1} << (code_bits(level) - 1); }

inline Code left_of(Code c, int level) {
    const int s = code_bits(level - 1);
    return (c >> s) & ((Code{1} << s) - 1);
}

inline Code right_of(Code c, int level) {
    const int s = code_bits(level - 1);
    return c & ((Code{1} << s) - 1);
}

inline Code join(bool self, Code left, Code right, int level) {
    const int s = code_bits(level - 1);
    return (self ? self_bit(level) : 0) | (left << s) | right;
}

inline Code canonical(Code c, int level) {
    if (level == 0) return c;
    Code l = canonical(left_of(c, level), level - 1), r = canonical(right_of(c, level), level - 1);
    if (r < l) std::swap(l, r);
    return join(c & self_bit(level), l, r, level);
}

// Unmerged state count: every subtree is either finished or a pair of
// children states, minus the pair that cannot persist in zero-step mode.
inline double state_count(int n, SwapTiming timing) {
    double c = 2.0;
    for (int l = 1; l <= n; ++l) c = c * c + (timing == SwapTiming::OneStep ? 1.0 : 0.0);
    return c;
}

class Stepper {
public:
    Stepper(double p_g, double p_s, SwapTiming timing) : p_g_(p_g), p_s_(p_s), timing_(timing) {}

    const Dist& step(Code c, int level) {
        auto key = std::make_pair(level, c);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Dist out;
        if (c & self_bit(level)) {
            out.push_back({c, 1.0});
        } else if (level == 0) {
            out.push_back({1, p_g_});
            if (p_g_ < 1.0) out.push_back({0, 1.0 - p_g_});
        } else {
            const Code l = left_of(c, level), r = right_of(c, level);
            const Code lb = self_bit(level - 1);
            if (timing_ == SwapTiming::OneStep && (l & lb) && (r & lb)) {
                // swap resolves during this tick
                out.push_back({self_bit(level), p_s_});
                if (p_s_ < 1.0) out.push_back({0, 1.0 - p_s_});
            } else {
                const Dist dl = step(l, level - 1);
                const Dist dr = step(r, level - 1);
                std::map<Code, double> acc;
                for (const auto& [cl, pl] : dl)
                    for (const auto& [cr, pr] : dr) {
                        const double p = pl * pr;
                        if (timing_ == SwapTiming::ZeroStep && (cl & lb) && (cr & lb)) {
                            acc[self_bit(level)] += p * p_s_;
                            if (p_s_ < 1.0) acc[0] += p * (1.0 - p_s_);
                        } else {
                            acc[join(false, cl, cr, level)] += p;
                        }
                    }
                out.assign(acc.begin(), acc.end());
            }
        }
        return memo_.emplace(key, std::move(out)).first->second;
    }

private:
    struct KeyHash {
        std::size_t operator()(const std::pair<int, Code>& k) const {
            return std::hash<Code>()(k.second * 31 + static_cast<Code>(k.first));
        }
    };
    double p_g_, p_s_;
    SwapTiming timing_;
    std::unordered_map<std::pair<int, Code>, Dist, KeyHash> memo_;
};

}  // namespace markov_detail

inline RepeaterMarkovChain build_chain(const ChainParams& params, SwapTiming timing, const MarkovOptions& opt = {}) {
    namespace md = markov_detail;
    params.validate();
    if (params.tau) throw FeatureMismatchError("markov engine does not support cut-offs");
    const double count = md::state_count(params.n, timing);
    if (params.n > 5 || (!opt.merge_symmetric && count > static_cast<double>(opt.state_limit)))
        throw StateLimitError("markov chain for n = " + std::to_string(params.n) + " needs " + format_number(count) +
                              " states (limit " + std::to_string(opt.state_limit) + ")");

    RepeaterMarkovChain chain;
    chain.n = params.n;
    chain.timing = timing;
    chain.merged = opt.merge_symmetric;
    const md::Code done = md::self_bit(params.n);
    md::Stepper stepper(params.p_g, params.p_s, timing);

    std::unordered_map<md::Code, std::size_t> index;
    std::deque<md::Code> queue;
    auto intern = [&](md::Code c) {
        if (opt.merge_symmetric) c = md::canonical(c, params.n);
        auto it = index.find(c);
        if (it != index.end()) return it->second;
        if (chain.states.size() >= opt.state_limit)
            throw StateLimitError("markov chain exceeds state limit " + std::to_string(opt.state_limit));
        const std::size_t id = chain.states.size();
        index.emplace(c, id);
        chain.states.push_back(c);
        chain.tpm.emplace_back();
        queue.push_back(c);
        return id;
    };
    intern(0);
    std::size_t transitions = 0;
    while (!queue.empty()) {
        const md::Code c = queue.front();
        queue.pop_front();
        const std::size_t row = index.at(c);
        if (c == done) {
            chain.absorbing = row;
            chain.tpm[row] = {{row, 1.0}};
            continue;
        }
        std::map<std::size_t, double> acc;
        for (const auto& [next, p] : stepper.step(c, params.n)) acc[intern(next)] += p;
        transitions += acc.size();
        if (transitions > opt.transition_limit)
            throw StateLimitError("markov chain exceeds transition limit " + std::to_string(opt.transition_limit));
        double sum = 0.0;
        for (const auto& [col, p] : acc) {
            chain.tpm[row].push_back({col, p});
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw SolverError("transition row " + std::to_string(row) + " sums to " + format_number(sum));
    }
    if (index.find(done) == index.end()) throw SingularSystemError("absorbing state unreachable");
    return chain;
}

struct AbsorptionStats {
    double mean;
    double variance;
};

namespace markov_detail {

inline void check_absorbing_reachable(const RepeaterMarkovChain& ch) {
    std::vector<std::vector<std::size_t>> rev(ch.num_states());
    for (std::size_t i = 0; i < ch.num_states(); ++i)
        for (const auto& e : ch.tpm[i])
            if (e.prob > 0.0) rev[e.col].push_back(i);
    std::vector<char> seen(ch.num_states(), 0);
    std::vector<std::size_t> stack{ch.absorbing};
    seen[ch.absorbing] = 1;
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (auto u : rev[v])
            if (!seen[u]) {
                seen[u] = 1;
                stack.push_back(u);
            }
    }
    for (std::size_t i = 0; i < ch.num_states(); ++i)
        if (!seen[i]) throw SingularSystemError("state " + std::to_string(i) + " never reaches absorption");
}

}  // namespace markov_detail

/// Mean and variance of the absorption time from the empty state, from
/// (I - Q) m = 1 and (I - Q) s = 1 + 2 Q m with s the second moment.
inline AbsorptionStats absorption_stats(const RepeaterMarkovChain& ch, const MarkovOptions& opt = {}) {
    markov_detail::check_absorbing_reachable(ch);
    const std::size_t N = ch.num_states();
    std::vector<long> tid(N, -1);
    long m = 0;
    for (std::size_t i = 0; i < N; ++i)
        if (i != ch.absorbing) tid[i] = m++;
    if (m == 0) return {0.0, 0.0};

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(m), mean, second;
    auto q_times = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
        for (std::size_t i = 0; i < N; ++i) {
            if (tid[i] < 0) continue;
            for (const auto& e : ch.tpm[i])
                if (tid[e.col] >= 0) out(tid[i]) += e.prob * v(tid[e.col]);
        }
        return out;
    };
    if (static_cast<std::size_t>(m) <= opt.dense_limit) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
        for (std::size_t i = 0; i < N; ++i) {
            if (tid[i] < 0) continue;
            for (const auto& e : ch.tpm[i])
                if (tid[e.col] >= 0) A(tid[i], tid[e.col]) -= e.prob;
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
        mean = lu.solve(ones);
        second = lu.solve(ones + 2.0 * q_times(mean));
    } else {
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t i = 0; i < N; ++i) {
            if (tid[i] < 0) continue;
            trip.emplace_back(tid[i], tid[i], 1.0);
            for (const auto& e : ch.tpm[i])
                if (tid[e.col] >= 0) trip.emplace_back(tid[i], tid[e.col], -e.prob);
        }
        Eigen::SparseMatrix<double> A(m, m);
        A.setFromTriplets(trip.begin(), trip.end());
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>> solver;
        solver.setTolerance(1e-14);
        solver.setMaxIterations(100000);
        solver.compute(A);
        mean = solver.solve(ones);
        if (solver.info() != Eigen::Success) throw SingularSystemError("iterative solve did not converge");
        second = solver.solve(ones + 2.0 * q_times(mean));
        if (solver.info() != Eigen::Success) throw SingularSystemError("iterative solve did not converge");
    }
    if (!mean.allFinite() || !second.allFinite()) throw SingularSystemError("absorption system is singular");
    const double mu = mean(tid[0]);
    return {mu, std::max(0.0, second(tid[0]) - mu * mu)};
}

/// Pr(first absorption at tick t) for t = 1..t_max; carries no quality data.
inline TruncatedDistribution waiting_pmf(const RepeaterMarkovChain& ch, std::size_t t_max) {
    if (t_max < 1) throw DomainError("t_max must be >= 1");
    const std::size_t N = ch.num_states();
    TruncatedDistribution d;
    d.pmf.assign(t_max + 1, 0.0);
    std::vector<double> v(N, 0.0), next(N);
    v[0] = 1.0;
    for (std::size_t t = 1; t <= t_max; ++t) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            if (i == ch.absorbing || v[i] == 0.0) continue;
            for (const auto& e : ch.tpm[i]) next[e.col] += v[i] * e.prob;
        }
        d.pmf[t] = next[ch.absorbing];
        next[ch.absorbing] = 0.0;
        v.swap(next);
    }
    return d;
}

/// Human-readable state label: segment bits left to right, then one group per
/// higher level separated by '|'. The absorbing state is "done".
inline std::string state_label(const RepeaterMarkovChain& ch, std::size_t i) {
    namespace md = markov_detail;
    if (i == ch.absorbing) return "done";
    std::vector<std::string> levels(static_cast<std::size_t>(ch.n) + 1);
    auto walk = [&](auto&& self, md::Code c, int level) -> void {
        if (level > 0) {
            self(self, md::left_of(c, level), level - 1);
            self(self, md::right_of(c, level), level - 1);
        }
        levels[static_cast<std::size_t>(level)] += (c & md::self_bit(level)) ? '1' : '0';
    };
    walk(walk, ch.states[i], ch.n);
    std::string out = levels[0];
    for (int l = 1; l < ch.n; ++l) out += "|" + levels[static_cast<std::size_t>(l)];
    return out;
}

inline void write_dot(std::ostream& os, const RepeaterMarkovChain& ch) {
    os << "digraph repeater {\n  rankdir=LR;\n";
    for (std::size_t i = 0; i < ch.num_states(); ++i)
        os << "  s" << i << " [label=\"" << state_label(ch, i) << "\""
           << (i == ch.absorbing ? ", shape=doublecircle" : "") << "];\n";
    for (std::size_t i = 0; i < ch.num_states(); ++i)
        for (const auto& e : ch.tpm[i])
            os << "  s" << i << " -> s" << e.col << " [label=\"" << format_number(e.prob) << "\"];\n";
    os << "}\n";
}

}  // namespace qnet
