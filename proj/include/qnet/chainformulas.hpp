#pragma once

// Closed-form and iteratively evaluated waiting-time and decay expressions
// for swap-based repeater chains.

#include <cmath>
#include <cstddef>
#include <vector>

#include "qnet/chain.hpp"
#include "qnet/error.hpp"

namespace qnet::formulas {

/// 1 / (p_s^n p_g): product of the expected attempt counts.
inline double mean_only(const ChainParams& p) {
    p.validate();
    return 1.0 / (std::pow(p.p_s, p.n) * p.p_g);
}

inline double three_over_two(const ChainParams& p) {
    p.validate();
    return std::pow(1.5, p.n) / (std::pow(p.p_s, p.n) * p.p_g);
}

/// Mean of max(T, T') for i.i.d. Geometric(p).
inline double mean_max_two_geometric(double p) { return (3.0 - 2.0 * p) / ((2.0 - p) * p); }

/// Level-by-level recursion that treats every level's waiting time as geometric.
inline double geometric_level_mean(const ChainParams& p) {
    p.validate();
    double T = 1.0 / p.p_g;
    for (int i = 1; i <= p.n; ++i) T = mean_max_two_geometric(1.0 / T) / p.p_s;
    return T;
}

/// Expected decay factor E[e^{-|dT|/t_coh}] of the earlier of two Geometric(p_g) links.
inline double gamma_decay(double p_g, double t_coh) {
    if (!(p_g > 0.0 && p_g <= 1.0)) throw DomainError("p_g must be in (0,1]");
    if (!(t_coh > 0.0)) throw DomainError("t_coh must be > 0");
    const double d = std::isinf(t_coh) ? 1.0 : std::exp(-1.0 / t_coh);
    const double q = 1.0 - p_g;
    return p_g / (2.0 - p_g) * (2.0 / (1.0 - q * d) - 1.0);
}

struct SingleRepeater {
    double mean_M0;  // both elementary links present
    double mean_T1;  // end-to-end link
    double gamma;
    double p_g;

    /// Probability that the two links are |j| steps apart, folded onto j >= 0
    /// (the j >= 1 entries count both orderings).
    double storage_pmf(long j) const {
        if (j < 0) throw DomainError("storage_pmf: j must be >= 0");
        const double base = p_g / (2.0 - p_g);
        if (j == 0) return base;
        return 2.0 * base * std::pow(1.0 - p_g, static_cast<double>(j));
    }
};

inline SingleRepeater single_repeater(const ChainParams& p) {
    p.validate();
    if (p.n != 1) throw DomainError("single_repeater requires n = 1");
    SingleRepeater r;
    r.p_g = p.p_g;
    r.mean_M0 = mean_max_two_geometric(p.p_g);
    r.mean_T1 = r.mean_M0 / p.p_s;
    r.gamma = gamma_decay(p.p_g, p.t_coh);
    return r;
}

namespace detail {

// 1 - (1 - x)^N without cancellation for small x.
inline double one_minus_pow_complement(double x, double N) {
    if (x >= 1.0) return 1.0;
    return -std::expm1(N * std::log1p(-x));
}

inline void check_segments(long N) {
    if (N < 1) throw DomainError("N must be >= 1");
    if (N > 10000) throw DomainError("N must be <= 10^4");
}

}  // namespace detail

/// E[max of N i.i.d. Geometric(p_g)].
///
/// Small N uses the alternating binomial sum in long double with positive and
/// negative parts accumulated separately. Beyond that the cancellation eats
/// every digit, so the equivalent tail series sum_{t>=0} 1 - (1 - q^t)^N is
/// summed instead.
inline double det_swap_mean(long N, double p_g) {
    detail::check_segments(N);
    if (!(p_g > 0.0 && p_g <= 1.0)) throw DomainError("p_g must be in (0,1]");
    if (p_g == 1.0) return 1.0;
    const long double q = 1.0L - static_cast<long double>(p_g);
    if (N <= 32) {
        long double pos = 0.0L, neg = 0.0L, binom = 1.0L;
        for (long k = 1; k <= N; ++k) {
            binom = binom * static_cast<long double>(N - k + 1) / static_cast<long double>(k);
            const long double term = binom / (1.0L - std::pow(q, static_cast<long double>(k)));
            if (k % 2) pos += term;
            else neg += term;
        }
        return static_cast<double>(pos - neg);
    }
    // E[T] = sum_{t>=0} Pr(T > t) with Pr(T > 0) = 1.
    long double sum = 1.0L, qt = q;
    for (long t = 1; t < 100000000; ++t) {
        const long double term = -std::expm1(static_cast<long double>(N) * std::log1p(-qt));
        sum += term;
        if (term < 1e-20L) break;
        qt *= q;
    }
    return static_cast<double>(sum);
}

/// H(N) / p_g, the small-p_g approximation.
inline double det_swap_mean_harmonic(long N, double p_g) {
    detail::check_segments(N);
    if (!(p_g > 0.0 && p_g <= 1.0)) throw DomainError("p_g must be in (0,1]");
    double H = 0.0;
    for (long k = N; k >= 1; --k) H += 1.0 / static_cast<double>(k);
    return H / p_g;
}

/// Mean waiting time for N segments with deterministic swaps and a memory
/// cut-off tau, in the model where every stored link is discarded once the
/// oldest exceeds tau.
inline double det_swap_mean_cutoff(long N, double p_g, long tau) {
    detail::check_segments(N);
    if (!(p_g > 0.0 && p_g <= 1.0)) throw DomainError("p_g must be in (0,1]");
    if (tau < 1) throw DomainError("tau must be >= 1");
    const double q = 1.0 - p_g;
    const double Nd = static_cast<double>(N);
    auto cdf_pow = [&](double k) { return std::pow(-std::expm1(k * std::log1p(-p_g)), Nd); };  // (1-q^k)^N
    if (q == 0.0) {
        // (1 - 0 + 1 * [tau - (tau-1)]) / 1 reduces to 1.
        return 1.0;
    }
    // tau - sum_{j=1}^{tau-1} (1-q^j)^N written as 1 + sum (1 - (1-q^j)^N).
    double bracket = 1.0;
    double qj = q;
    for (long j = 1; j < tau; ++j) {
        const double term = detail::one_minus_pow_complement(qj, Nd);
        bracket += term;
        if (term < 1e-300) break;
        qj *= q;
    }
    const double qN = std::pow(q, Nd);
    const double num = detail::one_minus_pow_complement(std::pow(q, static_cast<double>(tau)), Nd) +
                       (1.0 - qN) * bracket;
    const double den = cdf_pow(static_cast<double>(tau + 1)) - qN * cdf_pow(static_cast<double>(tau));
    return num / den;
}

/// E[time until at least k of N links exist], by summing Pr(T_{N,k} > t).
inline double partial_links_mean(long N, long k, double p_g) {
    detail::check_segments(N);
    if (k < 1 || k > N) throw DomainError("k must be in [1, N]");
    if (!(p_g > 0.0 && p_g <= 1.0)) throw DomainError("p_g must be in (0,1]");
    if (p_g == 1.0) return 1.0;
    const double q = 1.0 - p_g;
    // Pr(T > t) = Pr(Binomial(N, F_t) < k), F_t = 1 - q^t.
    std::vector<double> log_binom(static_cast<std::size_t>(k));
    for (long m = 0; m < k; ++m)
        log_binom[static_cast<std::size_t>(m)] =
            std::lgamma(N + 1.0) - std::lgamma(m + 1.0) - std::lgamma(static_cast<double>(N - m) + 1.0);
    double mean = 1.0;  // t = 0 term
    double qt = q;
    for (long t = 1; t < 100000000; ++t) {
        const double logF = std::log1p(-qt), logQ = std::log(qt);
        double tail = 0.0;
        for (long m = 0; m < k; ++m)
            tail += std::exp(log_binom[static_cast<std::size_t>(m)] + m * logF + static_cast<double>(N - m) * logQ);
        mean += tail;
        // Pr(T > t) shrinks at least by q per step, so the rest is <= tail / p_g.
        if (tail / p_g < 1e-15) break;
        qt *= q;
    }
    return mean;
}

/// Success probability of one end-to-end attempt of a second-generation
/// scheme; the waiting time is Geometric(returned value).
inline double second_gen_distribution(const std::vector<double>& step_success_probs) {
    double p = 1.0;
    for (double x : step_success_probs) {
        if (!(x > 0.0 && x <= 1.0)) throw DomainError("step success probabilities must be in (0,1]");
        p *= x;
    }
    return p;
}

/// Mean waiting time of a single repeater (n = 1) with cut-off: the two-link
/// cut-off mean divided by p_s.
inline double single_repeater_cutoff_mean(const ChainParams& p) {
    p.validate();
    if (p.n > 1) throw DomainError("closed-form cut-off mean only for n <= 1");
    if (p.n == 0) return 1.0 / p.p_g;
    if (!p.tau) return mean_max_two_geometric(p.p_g) / p.p_s;
    return det_swap_mean_cutoff(2, p.p_g, *p.tau) / p.p_s;
}

}  // namespace qnet::formulas
