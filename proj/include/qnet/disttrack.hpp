#pragma once

// Exact truncated waiting-time distribution of nested repeater protocols,
// together with the mean Werner parameter of the delivered link.
//
// Everything is carried as two sequences over t = 0..T:
//   pmf[t]   = Pr(T = t)
//   omega[t] = E[w ; T = t]
// Values for t <= T are exact; truncation only loses the mass beyond T.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnet/chain.hpp"
#include "qnet/chainformulas.hpp"
#include "qnet/convolution.hpp"
#include "qnet/error.hpp"
#include "qnet/format.hpp"

namespace qnet {

struct TruncatedDistribution {
    std::vector<double> pmf;    // index t, pmf[0] == 0
    std::vector<double> omega;  // E[w ; T = t]

    std::size_t t_trunc() const { return pmf.empty() ? 0 : pmf.size() - 1; }

    double prob(std::size_t t) const { return t < pmf.size() ? pmf[t] : 0.0; }

    /// False for distributions that carry waiting times only.
    bool has_quality() const { return omega.size() == pmf.size(); }

    /// Mean Werner parameter conditioned on delivery at t; 0 where pmf vanishes.
    double mean_w(std::size_t t) const {
        if (!has_quality()) return std::numeric_limits<double>::quiet_NaN();
        if (t >= pmf.size() || !(pmf[t] > 0.0)) return 0.0;
        return std::clamp(omega[t] / pmf[t], 0.0, 1.0);
    }

    double captured_mass() const {
        double s = 0.0;
        for (double p : pmf) s += p;
        return s;
    }

    /// Mean of T conditioned on T <= t_trunc.
    double mean() const {
        double s = 0.0, m = 0.0;
        for (std::size_t t = 1; t < pmf.size(); ++t) {
            s += pmf[t];
            m += static_cast<double>(t) * pmf[t];
        }
        return m / s;
    }

    double stddev() const {
        double s = 0.0, m = 0.0, m2 = 0.0;
        for (std::size_t t = 1; t < pmf.size(); ++t) {
            const double td = static_cast<double>(t);
            s += pmf[t];
            m += td * pmf[t];
            m2 += td * td * pmf[t];
        }
        m /= s;
        return std::sqrt(std::max(0.0, m2 / s - m * m));
    }

    /// Delivered Werner parameter averaged over all captured deliveries.
    double overall_mean_w() const {
        if (!has_quality()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0, w = 0.0;
        for (std::size_t t = 0; t < pmf.size(); ++t) {
            s += pmf[t];
            w += omega[t];
        }
        return s > 0.0 ? std::clamp(w / s, 0.0, 1.0) : 0.0;
    }
};

struct TrackOptions {
    std::optional<std::size_t> t_trunc;   // default: horizon_multiplier x estimated mean
    double horizon_multiplier = 40.0;
    double mass_floor = 1.0 - 1e-6;       // 0 disables the check
    std::size_t cutoff_trunc_limit = 3000;
    std::size_t max_trunc = std::size_t{1} << 25;
    conv::Options conv;
};

namespace detail {

inline void check_floor(const TruncatedDistribution& d, double floor, const char* what) {
    if (floor <= 0.0) return;
    const double m = d.captured_mass();
    if (m < floor)
        throw HorizonError(std::string(what) + ": captured mass " + format_number(m) + " below floor " +
                           format_number(floor) + " at t_trunc " + std::to_string(d.t_trunc()) +
                           "; increase the truncation horizon");
}

// Joint moments of two links at the time the later one arrives:
//   m0[t] = Pr(pair ready at t), m1[t] = E[w1' + w2'; t], m2[t] = E[w1' w2'; t]
// where w' are the Werner parameters after storage decay.
struct PairMoments {
    std::vector<double> m0, m1, m2;
};

inline PairMoments pair_moments(const TruncatedDistribution& a, const TruncatedDistribution& b, double d) {
    const std::size_t n = a.pmf.size();
    PairMoments r{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    double Ca = 0.0, Cb = 0.0, Qa = 0.0, Qb = 0.0;  // Q = sum_{u<=t} omega(u) d^{t-u}
    for (std::size_t t = 0; t < n; ++t) {
        const double pa = a.pmf[t], pb = b.pmf[t], wa = a.omega[t], wb = b.omega[t];
        const double Ca_prev = Ca;
        Ca += pa;
        Cb += pb;
        Qa = d * Qa + wa;
        Qb = d * Qb + wb;
        const double Qa_before = Qa - wa;  // arrivals strictly before t
        // a arrives at t with b at or before t; b arrives at t with a strictly before.
        r.m0[t] = pa * Cb + pb * Ca_prev;
        r.m1[t] = wa * Cb + pa * Qb + wb * Ca_prev + pb * Qa_before;
        r.m2[t] = wa * Qb + wb * Qa_before;
    }
    return r;
}

// Same moments when a link that waits more than tau for its partner is
// discarded and only its own side restarts, at expiry time arrival + tau.
//
// States (k, s, y): side k restarts fresh at s, the other side's link is due
// at y > s. A state only feeds states with the same y and a larger s (fresh
// link expires again) or states whose pending time is a later arrival of
// side k (pending link expires). Columns y are therefore final once all
// smaller columns are done, and each column is a renewal sum along s.
// O(T^3) time, O(T^2) memory.
inline PairMoments pair_moments_cutoff(const TruncatedDistribution& a, const TruncatedDistribution& b, double d,
                                       long tau) {
    const std::size_t n = a.pmf.size();
    const long T = static_cast<long>(n) - 1;
    PairMoments r{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    if (T < 1) return r;
    const bool symmetric = a.pmf == b.pmf && a.omega == b.omega;
    const TruncatedDistribution* side[2] = {&a, &b};
    const int nsides = symmetric ? 1 : 2;

    std::vector<double> dpow(n, 1.0);
    for (std::size_t i = 1; i < n; ++i) dpow[i] = dpow[i - 1] * d;

    // colA[k][y][s], colW[k][y][s] for s < y
    using Columns = std::vector<std::vector<double>>;
    std::vector<Columns> colA(nsides, Columns(n)), colW(nsides, Columns(n));
    for (int k = 0; k < nsides; ++k)
        for (long y = 1; y <= T; ++y) {
            colA[k][static_cast<std::size_t>(y)].assign(static_cast<std::size_t>(y), 0.0);
            colW[k][static_cast<std::size_t>(y)].assign(static_cast<std::size_t>(y), 0.0);
        }

    auto complete = [&](long x, long y, double pa, double pw, double qa, double qw) {
        // fresh link (pa, pw) at x, pending link (qa, qw) at y
        const auto t = static_cast<std::size_t>(std::max(x, y));
        const double dec = dpow[static_cast<std::size_t>(std::labs(x - y))];
        r.m0[t] += pa * qa;
        if (x <= y) r.m1[t] += qw * pa + pw * qa * dec;
        else r.m1[t] += qw * pa * dec + pw * qa;
        r.m2[t] += pw * qw * dec;
    };

    // Both sides start fresh at time 0.
    for (long x = 1; x <= T; ++x) {
        const double pa = a.pmf[static_cast<std::size_t>(x)], wa = a.omega[static_cast<std::size_t>(x)];
        if (pa == 0.0) continue;
        for (long y = 1; y <= T; ++y) {
            const double pb = b.pmf[static_cast<std::size_t>(y)], wb = b.omega[static_cast<std::size_t>(y)];
            if (pb == 0.0) continue;
            if (std::labs(x - y) <= tau) {
                complete(x, y, pa, wa, pb, wb);
            } else if (x < y) {
                const auto s = static_cast<std::size_t>(x + tau);
                colA[0][static_cast<std::size_t>(y)][s] += pa * pb;
                colW[0][static_cast<std::size_t>(y)][s] += pa * wb;
            } else {
                const auto s = static_cast<std::size_t>(y + tau);
                const int k = symmetric ? 0 : 1;
                colA[k][static_cast<std::size_t>(x)][s] += pa * pb;
                colW[k][static_cast<std::size_t>(x)][s] += wa * pb;
            }
        }
    }

    std::vector<double> outA(n), outW(n);
    for (long y = 1; y <= T; ++y) {
        for (int k = 0; k < nsides; ++k) {
            const auto& pi = side[k]->pmf;
            const auto& om = side[k]->omega;
            const int other = symmetric ? 0 : 1 - k;
            auto& A = colA[k][static_cast<std::size_t>(y)];
            auto& W = colW[k][static_cast<std::size_t>(y)];
            // Fresh link expires before the pending one arrives:
            // state (s, y) with arrival x = s2 - tau moves to (s2, y).
            for (long s = 1; s + tau + 1 < y; ++s) {
                const double qa = A[static_cast<std::size_t>(s)], qw = W[static_cast<std::size_t>(s)];
                if (qa == 0.0 && qw == 0.0) continue;
                // arrival s + X expires at s + X + tau
                double* __restrict a_dst = A.data() + s + tau;
                double* __restrict w_dst = W.data() + s + tau;
                const double* __restrict p = pi.data();
                const long len = y - s - tau;
                for (long X = 1; X < len; ++X) {
                    a_dst[X] += qa * p[X];
                    w_dst[X] += qw * p[X];
                }
            }
            for (long s = 1; s < y; ++s) {
                const double qa = A[static_cast<std::size_t>(s)], qw = W[static_cast<std::size_t>(s)];
                if (qa == 0.0 && qw == 0.0) continue;
                const long x_lo = std::max(s + 1, y - tau), x_hi = std::min(T, y + tau);
                for (long x = x_lo; x <= x_hi; ++x) {
                    const auto X = static_cast<std::size_t>(x - s);
                    complete(x, y, pi[X], om[X], qa, qw);
                }
            }
            // Pending link expires first at s2 = y + tau; the fresh side's
            // arrival x > s2 becomes the pending link of the other side.
            const long s2 = y + tau;
            if (s2 >= T) continue;
            std::fill(outA.begin(), outA.end(), 0.0);
            std::fill(outW.begin(), outW.end(), 0.0);
            for (long s = 1; s < y; ++s) {
                const double qa = A[static_cast<std::size_t>(s)];
                if (qa == 0.0) continue;
                double* __restrict oa = outA.data();
                double* __restrict ow = outW.data();
                const double* __restrict pp = pi.data() - s;
                const double* __restrict po = om.data() - s;
                for (long x = s2 + 1; x <= T; ++x) {
                    oa[x] += qa * pp[x];
                    ow[x] += qa * po[x];
                }
            }
            for (long x = s2 + 1; x <= T; ++x) {
                colA[other][static_cast<std::size_t>(x)][static_cast<std::size_t>(s2)] += outA[static_cast<std::size_t>(x)];
                colW[other][static_cast<std::size_t>(x)][static_cast<std::size_t>(s2)] += outW[static_cast<std::size_t>(x)];
            }
        }
        // Column y is no longer needed.
        for (int k = 0; k < nsides; ++k) {
            std::vector<double>().swap(colA[k][static_cast<std::size_t>(y)]);
            std::vector<double>().swap(colW[k][static_cast<std::size_t>(y)]);
        }
    }
    return r;
}

inline bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Repeats a round until success: failures f0 restart both inputs at once.
inline TruncatedDistribution compound(const std::vector<double>& s0, const std::vector<double>& sw,
                                      const std::vector<double>& f0, const conv::Options& opt) {
    TruncatedDistribution out;
    if (all_zero(f0)) {
        out.pmf = s0;
        out.omega = sw;
        return out;
    }
    const std::size_t n = s0.size();
    const auto R = conv::renewal(f0, n, opt);
    out.pmf = conv::convolve(R, s0, n, opt);
    out.omega = conv::convolve(R, sw, n, opt);
    for (std::size_t t = 0; t < n; ++t) {
        out.pmf[t] = std::max(out.pmf[t], 0.0);
        out.omega[t] = std::clamp(out.omega[t], 0.0, out.pmf[t]);
    }
    out.pmf[0] = 0.0;
    out.omega[0] = 0.0;
    return out;
}

struct RoundOutcome {
    std::vector<double> s0, sw, f0;
};

inline RoundOutcome apply_step(Step step, const PairMoments& m, double p_s) {
    const std::size_t n = m.m0.size();
    RoundOutcome r{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t t = 0; t < n; ++t) {
        if (step == Step::Swap) {
            r.s0[t] = p_s * m.m0[t];
            r.sw[t] = p_s * m.m2[t];
            r.f0[t] = p_s == 1.0 ? 0.0 : (1.0 - p_s) * m.m0[t];
        } else {
            using B = DistillBilinear;
            r.s0[t] = B::p_const * m.m0[t] + B::p_cross * m.m2[t];
            r.sw[t] = B::pw_linear * m.m1[t] + B::pw_cross * m.m2[t];
            r.f0[t] = std::max(0.0, m.m0[t] - r.s0[t]);
        }
    }
    return r;
}

inline PairMoments moments(const TruncatedDistribution& a, const TruncatedDistribution& b, double d,
                           std::optional<long> tau, const TrackOptions& opt) {
    if (a.pmf.size() != b.pmf.size()) throw DomainError("inputs must share t_trunc");
    if (!tau || *tau >= static_cast<long>(a.t_trunc())) return pair_moments(a, b, d);
    if (a.t_trunc() > opt.cutoff_trunc_limit)
        throw SizeLimitError("cut-off tracking limited to t_trunc <= " + std::to_string(opt.cutoff_trunc_limit) +
                             " (got " + std::to_string(a.t_trunc()) + ")");
    return pair_moments_cutoff(a, b, d, *tau);
}

}  // namespace detail

/// Pr(T = t) = p (1-p)^{t-1} on t = 1..t_trunc, every link with Werner parameter w0.
inline TruncatedDistribution geometric_pmf(double p, std::size_t t_trunc, double w0 = 1.0) {
    if (!(p > 0.0 && p <= 1.0)) throw DomainError("p must be in (0,1]");
    if (t_trunc < 1) throw DomainError("t_trunc must be >= 1");
    check_werner(w0);
    TruncatedDistribution d;
    d.pmf.assign(t_trunc + 1, 0.0);
    d.omega.assign(t_trunc + 1, 0.0);
    double pt = p;
    for (std::size_t t = 1; t <= t_trunc; ++t) {
        d.pmf[t] = pt;
        d.omega[t] = w0 * pt;
        pt *= 1.0 - p;
    }
    return d;
}

struct CombineOptions {
    double t_coh = std::numeric_limits<double>::infinity();
    std::optional<long> tau;
    double mass_floor = 0.0;
};

/// Time until both links exist; omega carries E[w1' w2'], the product of the
/// decayed input qualities at that time.
inline TruncatedDistribution max_combine(const TruncatedDistribution& d1, const TruncatedDistribution& d2,
                                         const CombineOptions& copt = {}, const TrackOptions& opt = {}) {
    if (!(copt.t_coh > 0.0)) throw DomainError("t_coh must be > 0");
    if (copt.tau && *copt.tau < 1) throw DomainError("cut-off tau must be >= 1");
    const double d = std::isinf(copt.t_coh) ? 1.0 : std::exp(-1.0 / copt.t_coh);
    const auto m = detail::moments(d1, d2, d, copt.tau, opt);
    TruncatedDistribution out{m.m0, m.m2};
    detail::check_floor(out, copt.mass_floor, "max_combine");
    return out;
}

/// Sum of K i.i.d. rounds distributed as d, K ~ Geometric(p_s); the delivered
/// quality is that of the successful round.
inline TruncatedDistribution compound_geometric(const TruncatedDistribution& d, double p_s, double mass_floor = 0.0,
                                                const conv::Options& copt = {}) {
    if (!(p_s > 0.0 && p_s <= 1.0)) throw DomainError("p_s must be in (0,1]");
    const std::size_t n = d.pmf.size();
    std::vector<double> s0(n), sw(n), f0(n);
    for (std::size_t t = 0; t < n; ++t) {
        s0[t] = p_s * d.pmf[t];
        sw[t] = p_s * d.omega[t];
        f0[t] = p_s == 1.0 ? 0.0 : (1.0 - p_s) * d.pmf[t];
    }
    auto out = detail::compound(s0, sw, f0, copt);
    detail::check_floor(out, mass_floor, "compound_geometric");
    return out;
}

/// Rough mean time until two units with the given mean both exist.
inline double estimate_pair_mean(double unit_mean, std::optional<long> tau) {
    const double p = std::min(1.0, 1.0 / unit_mean);
    double M = formulas::mean_max_two_geometric(p);
    if (tau) M = std::max(M, formulas::det_swap_mean_cutoff(2, p, *tau));
    return M;
}

/// Rough mean waiting time of each protocol prefix, used to pick horizons.
/// Entry i belongs to the unit after i steps.
inline std::vector<double> estimate_level_means(const ChainParams& params, const Protocol& protocol) {
    std::vector<double> est{1.0 / params.p_g};
    double w = params.w0;
    for (Step st : protocol.steps) {
        const double M = estimate_pair_mean(est.back(), params.tau);
        if (st == Step::Swap) {
            est.push_back(M / params.p_s);
            w = w * w;
        } else {
            const auto o = distill_step(w, w);
            est.push_back(M / o.success_prob);
            w = o.w;
        }
    }
    return est;
}

inline std::size_t default_horizon(double estimated_mean, const TrackOptions& opt) {
    const double h = std::ceil(opt.horizon_multiplier * estimated_mean);
    if (!(h <= static_cast<double>(opt.max_trunc)))
        throw SizeLimitError("required horizon " + format_number(h) + " exceeds limit " +
                             std::to_string(opt.max_trunc));
    return std::max<std::size_t>(2, static_cast<std::size_t>(h));
}

namespace detail {

inline TruncatedDistribution run_steps(const ChainParams& params, const Protocol& protocol, std::size_t nsteps,
                                       std::size_t T, const TrackOptions& opt) {
    auto unit = geometric_pmf(params.p_g, T, params.w0);
    const double d = params.decay_per_step();
    for (std::size_t i = 0; i < nsteps; ++i) {
        const auto m = moments(unit, unit, d, params.tau, opt);
        const auto r = apply_step(protocol.steps[i], m, params.p_s);
        unit = compound(r.s0, r.sw, r.f0, opt.conv);
    }
    return unit;
}

inline void check_setup(const ChainParams& params, const Protocol& protocol, const TrackOptions& opt,
                        std::size_t T) {
    params.validate();
    protocol.check_against(params);
    if (T < 1) throw DomainError("t_trunc must be >= 1");
    if (T > opt.max_trunc)
        throw SizeLimitError("t_trunc " + std::to_string(T) + " exceeds limit " + std::to_string(opt.max_trunc));
}

}  // namespace detail

/// Full truncated distribution of the end-to-end waiting time and delivered
/// Werner parameter.
inline TruncatedDistribution chain_distribution(const ChainParams& params, const Protocol& protocol,
                                                const TrackOptions& opt = {}) {
    params.validate();
    const std::size_t T =
        opt.t_trunc ? *opt.t_trunc : default_horizon(estimate_level_means(params, protocol).back(), opt);
    detail::check_setup(params, protocol, opt, T);
    auto out = detail::run_steps(params, protocol, protocol.steps.size(), T, opt);
    detail::check_floor(out, opt.mass_floor, "chain_distribution");
    return out;
}

inline TruncatedDistribution chain_distribution(const ChainParams& params, const TrackOptions& opt = {}) {
    return chain_distribution(params, Protocol::swap_only(params.n), opt);
}

struct ExactMean {
    double mean;
    double mean_w;
    double success_prob;      // per round of the top step
    double captured_mass;     // of the top round's duration
    std::size_t t_trunc;
};

/// Mean waiting time without tracking the top level's compound sum: rounds of
/// the last step are i.i.d. and the round count is a stopping time, so
/// E[T] = E[round] / Pr(round succeeds).
inline ExactMean exact_mean(const ChainParams& params, const Protocol& protocol, const TrackOptions& opt = {}) {
    params.validate();
    protocol.check_against(params);
    if (protocol.steps.empty()) return {1.0 / params.p_g, params.w0, params.p_g, 1.0, 0};
    const auto est = estimate_level_means(params, protocol);
    const std::size_t last = protocol.steps.size() - 1;
    const std::size_t T =
        opt.t_trunc ? *opt.t_trunc : default_horizon(estimate_pair_mean(est[last], params.tau), opt);
    detail::check_setup(params, protocol, opt, T);
    const auto unit = detail::run_steps(params, protocol, last, T, opt);
    const auto m = detail::moments(unit, unit, params.decay_per_step(), params.tau, opt);
    const auto r = detail::apply_step(protocol.steps[last], m, params.p_s);
    double mass = 0.0, tm = 0.0, s = 0.0, sw = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
        mass += m.m0[t];
        tm += static_cast<double>(t) * m.m0[t];
        s += r.s0[t];
        sw += r.sw[t];
    }
    TruncatedDistribution probe{m.m0, m.m2};
    detail::check_floor(probe, opt.mass_floor, "exact_mean");
    ExactMean out;
    out.success_prob = s / mass;
    out.mean = (tm / mass) / out.success_prob;
    out.mean_w = std::clamp(sw / s, 0.0, 1.0);
    out.captured_mass = mass;
    out.t_trunc = T;
    return out;
}

inline ExactMean exact_mean(const ChainParams& params, const TrackOptions& opt = {}) {
    return exact_mean(params, Protocol::swap_only(params.n), opt);
}

/// CSV with columns t,pmf,cdf,mean_w,mean_F for t = 1..t_trunc; quality
/// columns stay empty for waiting-time-only distributions.
inline void write_csv(std::ostream& os, const TruncatedDistribution& d) {
    os << "t,pmf,cdf,mean_w,mean_F\n";
    double cdf = 0.0;
    for (std::size_t t = 1; t < d.pmf.size(); ++t) {
        cdf += d.pmf[t];
        os << t << ',' << format_number(d.pmf[t]) << ',' << format_number(cdf) << ',';
        if (d.has_quality()) {
            const double w = d.mean_w(t);
            os << format_number(w) << ',' << format_number(fidelity_of(w));
        } else {
            os << ',';
        }
        os << '\n';
    }
}

inline nlohmann::ordered_json summary_json(const TruncatedDistribution& d) {
    nlohmann::ordered_json j;
    j["mean"] = d.mean();
    j["stddev"] = d.stddev();
    j["captured_mass"] = d.captured_mass();
    j["t_trunc"] = d.t_trunc();
    if (d.has_quality()) j["mean_w"] = d.overall_mean_w();
    else j["mean_w"] = nullptr;
    return j;
}

}  // namespace qnet
