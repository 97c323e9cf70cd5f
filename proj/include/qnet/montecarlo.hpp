#pragma once

// Trajectory sampling of nested repeater protocols: one draw returns the
// delivery time and the delivered Werner parameter.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include <json.hpp>

#include "qnet/chain.hpp"
#include "qnet/error.hpp"
#include "qnet/format.hpp"
#include "qnet/parallel.hpp"

namespace qnet {

struct SampleRecord {
    long t;
    double w;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of sample `index` under master `seed`; independent of execution order.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

class SampleRng {
public:
    explicit SampleRng(std::uint64_t s) : eng_(s) {}

    /// Uniform on (0, 1].
    double uniform() { return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() <= p; }

    /// Geometric on {1, 2, ...} by inversion.
    long geometric(double p) {
        if (p >= 1.0) return 1;
        const double k = std::floor(std::log(uniform()) / std::log1p(-p));
        if (k >= static_cast<double>(std::numeric_limits<long>::max() / 2)) throw SolverError("geometric draw overflow");
        return 1 + static_cast<long>(k);
    }

private:
    std::mt19937_64 eng_;
};

namespace mc_detail {

struct Link {
    long t;    // completion time relative to the start of the request
    double w;  // Werner parameter at completion
};

class Sampler {
public:
    Sampler(const ChainParams& p, const Protocol& pr, SampleRng& rng)
        : p_(p), pr_(pr), rng_(rng), d_(p.decay_per_step()) {}

    // Unit produced after `k` protocol steps, started at time 0.
    Link unit(std::size_t k) {
        if (k == 0) return {rng_.geometric(p_.p_g), p_.w0};
        const Step step = pr_.steps[k - 1];
        long start = 0;
        if (step == Step::Swap) {
            const long rounds = rng_.geometric(p_.p_s);
            Link pair{};
            for (long r = 0; r < rounds; ++r) {
                pair = ready_pair(k - 1);
                if (r + 1 < rounds) start += pair.t;
            }
            return {start + pair.t, pair.w};
        }
        for (;;) {
            const auto pr = ready_pair_raw(k - 1);
            const auto o = distill_step(pr.w1, pr.w2);
            if (rng_.bernoulli(o.success_prob)) return {start + pr.t, o.w};
            start += pr.t;
        }
    }

private:
    struct RawPair {
        long t;
        double w1, w2;  // decayed to t
    };

    // Two units racing, with cut-off restarts of a link that waited too long.
    RawPair ready_pair_raw(std::size_t k) {
        Link a = unit(k), b = unit(k);
        if (p_.tau) {
            const long tau = *p_.tau;
            for (;;) {
                if (a.t < b.t - tau) {
                    const long s = a.t + tau;
                    a = unit(k);
                    a.t += s;
                } else if (b.t < a.t - tau) {
                    const long s = b.t + tau;
                    b = unit(k);
                    b.t += s;
                } else {
                    break;
                }
            }
            if (std::labs(a.t - b.t) > tau) throw SolverError("cut-off violated at swap time");
        }
        const long t = std::max(a.t, b.t);
        return {t, a.w * std::pow(d_, static_cast<double>(t - a.t)), b.w * std::pow(d_, static_cast<double>(t - b.t))};
    }

    Link ready_pair(std::size_t k) {
        const auto r = ready_pair_raw(k);
        return {r.t, swap_quality(r.w1, r.w2)};
    }

    const ChainParams& p_;
    const Protocol& pr_;
    SampleRng& rng_;
    double d_;
};

}  // namespace mc_detail

inline SampleRecord sample_chain(const ChainParams& params, const Protocol& protocol, SampleRng& rng) {
    mc_detail::Sampler s(params, protocol, rng);
    const auto l = s.unit(protocol.steps.size());
    return {l.t, l.w};
}

inline void check_sampling_setup(const ChainParams& params, const Protocol& protocol) {
    params.validate();
    protocol.check_against(params);
}

/// All samples of a batch in index order.
inline std::vector<SampleRecord> sample_batch(const ChainParams& params, const Protocol& protocol,
                                              std::size_t n_samples, std::uint64_t seed,
                                              unsigned workers = worker_count()) {
    check_sampling_setup(params, protocol);
    if (n_samples < 1) throw DomainError("n_samples must be >= 1");
    std::vector<SampleRecord> out(n_samples);
    parallel_for(
        n_samples,
        [&](std::size_t i) {
            SampleRng rng(substream_seed(seed, i));
            out[i] = sample_chain(params, protocol, rng);
        },
        workers);
    return out;
}

struct BatchSummary {
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
    double mean_t = 0.0;
    std::optional<double> stderr_t;
    double mean_w = 0.0;
    std::optional<double> stderr_w;
    std::map<long, std::size_t> histogram;
    std::map<long, double> w_sum;  // sum of delivered w per time

    double stddev_t() const { return stderr_t ? *stderr_t * std::sqrt(static_cast<double>(n_samples)) : 0.0; }
};

inline BatchSummary summarize(const std::vector<SampleRecord>& samples, std::uint64_t seed) {
    BatchSummary s;
    s.n_samples = samples.size();
    s.seed = seed;
    if (samples.empty()) return s;
    const double n = static_cast<double>(samples.size());
    double st = 0.0, sw = 0.0;
    for (const auto& r : samples) {
        st += static_cast<double>(r.t);
        sw += r.w;
        ++s.histogram[r.t];
        s.w_sum[r.t] += r.w;
    }
    s.mean_t = st / n;
    s.mean_w = sw / n;
    if (samples.size() > 1) {
        double vt = 0.0, vw = 0.0;
        for (const auto& r : samples) {
            vt += (static_cast<double>(r.t) - s.mean_t) * (static_cast<double>(r.t) - s.mean_t);
            vw += (r.w - s.mean_w) * (r.w - s.mean_w);
        }
        s.stderr_t = std::sqrt(vt / (n - 1.0)) / std::sqrt(n);
        s.stderr_w = std::sqrt(vw / (n - 1.0)) / std::sqrt(n);
    }
    return s;
}

inline BatchSummary run_batch(const ChainParams& params, const Protocol& protocol, std::size_t n_samples,
                              std::uint64_t seed, unsigned workers = worker_count()) {
    return summarize(sample_batch(params, protocol, n_samples, seed, workers), seed);
}

/// Histogram in the distribution CSV layout, plus seed and n_samples columns.
inline void write_csv(std::ostream& os, const BatchSummary& s) {
    os << "t,pmf,cdf,mean_w,mean_F,seed,n_samples\n";
    double cdf = 0.0;
    const double n = static_cast<double>(s.n_samples);
    for (const auto& [t, count] : s.histogram) {
        const double p = static_cast<double>(count) / n;
        cdf += p;
        const double w = s.w_sum.at(t) / static_cast<double>(count);
        os << t << ',' << format_number(p) << ',' << format_number(cdf) << ',' << format_number(w) << ','
           << format_number(fidelity_of(w)) << ',' << s.seed << ',' << s.n_samples << '\n';
    }
}

inline nlohmann::ordered_json summary_json(const BatchSummary& s) {
    nlohmann::ordered_json j;
    j["mean"] = s.mean_t;
    j["stddev"] = s.stddev_t();
    j["stderr"] = s.stderr_t ? nlohmann::ordered_json(*s.stderr_t) : nlohmann::ordered_json(nullptr);
    j["mean_w"] = s.mean_w;
    j["stderr_w"] = s.stderr_w ? nlohmann::ordered_json(*s.stderr_w) : nlohmann::ordered_json(nullptr);
    j["seed"] = s.seed;
    j["n_samples"] = s.n_samples;
    return j;
}

}  // namespace qnet
