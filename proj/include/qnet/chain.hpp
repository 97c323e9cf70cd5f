#pragma once

// Shared repeater-chain model: parameters, nested protocols and the Werner
// parameter algebra used identically by every chain engine.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qnet/error.hpp"

namespace qnet {

struct ChainParams {
    int n = 0;           // nesting levels; 2^n segments
    double p_g = 1.0;    // generation success per attempt
    double p_s = 1.0;    // swap success
    double t_coh = std::numeric_limits<double>::infinity();  // memory coherence time, attempts
    std::optional<long> tau;  // cut-off, attempts
    double w0 = 1.0;     // Werner parameter of a fresh elementary link

    static constexpr int delta = 1;  // attempt duration

    long segments() const { return 1L << n; }

    /// Per-attempt storage factor e^{-1/t_coh}.
    double decay_per_step() const { return std::isinf(t_coh) ? 1.0 : std::exp(-1.0 / t_coh); }

    void validate() const {
        if (n < 0) throw DomainError("n must be >= 0");
        if (n > 30) throw DomainError("n must be <= 30");
        if (!(p_g > 0.0 && p_g <= 1.0)) throw DomainError("p_g must be in (0,1]");
        if (!(p_s > 0.0 && p_s <= 1.0)) throw DomainError("p_s must be in (0,1]");
        if (!(t_coh > 0.0)) throw DomainError("t_coh must be > 0");
        if (tau && *tau < 1) throw DomainError("cut-off tau must be >= 1");
        if (!(w0 >= 0.0 && w0 <= 1.0)) throw DomainError("w0 must be in [0,1]");
    }
};

enum class Step { Swap, Distill };

/// Nested protocol: steps applied bottom-up starting from elementary-link
/// generation. Every step consumes two independent copies of the unit built
/// so far, so Swap doubles the span and Distill keeps it.
struct Protocol {
    std::vector<Step> steps;

    static Protocol swap_only(int n) {
        Protocol p;
        p.steps.assign(static_cast<std::size_t>(n), Step::Swap);
        return p;
    }

    /// `rounds` distillation steps on every level before its swap.
    static Protocol with_distillation(int n, int rounds) {
        if (rounds < 0) throw DomainError("distillation rounds must be >= 0");
        Protocol p;
        for (int level = 0; level < n; ++level) {
            for (int r = 0; r < rounds; ++r) p.steps.push_back(Step::Distill);
            p.steps.push_back(Step::Swap);
        }
        return p;
    }

    /// Parses a step string such as "DSDS" (D = distill, S = swap).
    static Protocol parse(const std::string& text) {
        Protocol p;
        for (char c : text) {
            if (c == 'S' || c == 's') p.steps.push_back(Step::Swap);
            else if (c == 'D' || c == 'd') p.steps.push_back(Step::Distill);
            else throw DomainError(std::string("protocol: unknown step '") + c + "' (expected S or D)");
        }
        return p;
    }

    std::string to_string() const {
        std::string s;
        for (Step st : steps) s += st == Step::Swap ? 'S' : 'D';
        return s;
    }

    int swap_count() const {
        int c = 0;
        for (Step s : steps) c += s == Step::Swap;
        return c;
    }
    bool has_distillation() const { return swap_count() != static_cast<int>(steps.size()); }

    /// Number of elementary links consumed by one successful run.
    long links_per_run() const { return 1L << steps.size(); }

    void check_against(const ChainParams& params) const {
        if (swap_count() != params.n)
            throw DomainError("protocol has " + std::to_string(swap_count()) + " swaps but n = " +
                              std::to_string(params.n));
        if (steps.size() > 40) throw DomainError("protocol too deep");
    }
};

inline double fidelity_of(double w) { return (1.0 + 3.0 * w) / 4.0; }
inline double werner_of(double F) { return (4.0 * F - 1.0) / 3.0; }

inline void check_werner(double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw DomainError("Werner parameter must be in [0,1]");
}

/// Storage decay of a Werner parameter over `dt` attempts.
inline double decay(double w, double dt, double t_coh) {
    if (std::isinf(t_coh)) return w;
    return w * std::exp(-dt / t_coh);
}

inline double swap_quality(double w1, double w2) {
    check_werner(w1);
    check_werner(w2);
    return w1 * w2;
}

struct DistillOutcome {
    double success_prob;
    double w;
};

/// BBPSSW recurrence on two Werner pairs, output twirled back to Werner form.
inline DistillOutcome distill_step(double w1, double w2) {
    check_werner(w1);
    check_werner(w2);
    const double F1 = fidelity_of(w1), F2 = fidelity_of(w2);
    const double p = F1 * F2 + F1 * (1 - F2) / 3 + F2 * (1 - F1) / 3 + 5 * (1 - F1) * (1 - F2) / 9;
    const double F = (F1 * F2 + (1 - F1) * (1 - F2) / 9) / p;
    return {p, werner_of(F)};
}

// In Werner coordinates the success probability and the success-weighted
// output are bilinear: p = (1 + w1 w2)/2 and p * w_out = (w1 + w2)/6 + 2 w1 w2/3.
// The distribution tracker relies on this to propagate exact means.
struct DistillBilinear {
    static constexpr double p_const = 0.5;
    static constexpr double p_cross = 0.5;
    static constexpr double pw_linear = 1.0 / 6.0;
    static constexpr double pw_cross = 2.0 / 3.0;
};

}  // namespace qnet
