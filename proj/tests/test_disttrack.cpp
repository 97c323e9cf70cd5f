#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "qnet/chainformulas.hpp"
#include "qnet/disttrack.hpp"

using namespace qnet;

namespace {

ChainParams params(int n, double p_g, double p_s = 1.0) {
    ChainParams p;
    p.n = n;
    p.p_g = p_g;
    p.p_s = p_s;
    return p;
}

TrackOptions trunc_at(std::size_t T) {
    TrackOptions o;
    o.t_trunc = T;
    return o;
}

TruncatedDistribution point_mass(std::size_t T) {
    TruncatedDistribution d;
    d.pmf.assign(T + 1, 0.0);
    d.omega.assign(T + 1, 0.0);
    d.pmf[1] = 1.0;
    d.omega[1] = 1.0;
    return d;
}

// Swap-only chain with 2^n segments stepped tick by tick: every empty segment
// attempts generation, then finished pairs are swapped bottom-up within the
// same tick. A state stores one bit per node of the binary protocol tree.
std::vector<double> tick_oracle(int n, double p_g, double p_s, std::size_t T) {
    const int leaves = 1 << n;
    // node ids: level l, position i -> (1 << (n - l)) + i style heap layout
    auto node = [&](int level, int pos) { return (leaves >> level) + pos; };
    std::map<unsigned, double> dist{{0u, 1.0}};
    std::vector<double> pmf(T + 1, 0.0);
    for (std::size_t t = 1; t <= T; ++t) {
        std::map<unsigned, double> next;
        for (const auto& [state, prob] : dist) {
            // A leaf is idle when neither it nor any ancestor holds a link.
            std::vector<int> idle;
            for (int i = 0; i < leaves; ++i) {
                bool covered = false;
                for (int l = 0; l <= n; ++l)
                    if (state >> node(l, i >> l) & 1u) covered = true;
                if (!covered) idle.push_back(i);
            }
            const int k = static_cast<int>(idle.size());
            for (int mask = 0; mask < (1 << k); ++mask) {
                double pr = prob;
                unsigned s = state;
                for (int j = 0; j < k; ++j) {
                    if (mask >> j & 1) {
                        pr *= p_g;
                        s |= 1u << node(0, idle[static_cast<std::size_t>(j)]);
                    } else {
                        pr *= 1.0 - p_g;
                    }
                }
                // resolve swaps level by level, branching on outcomes
                std::vector<std::pair<unsigned, double>> branch{{s, pr}};
                for (int l = 1; l <= n; ++l)
                    for (int i = 0; i < (leaves >> l); ++i) {
                        std::vector<std::pair<unsigned, double>> nb;
                        for (auto [bs, bp] : branch) {
                            const unsigned a = 1u << node(l - 1, 2 * i), b = 1u << node(l - 1, 2 * i + 1);
                            if ((bs & a) && (bs & b)) {
                                const unsigned cleared = bs & ~a & ~b;
                                nb.push_back({cleared | 1u << node(l, i), bp * p_s});
                                if (p_s < 1.0) nb.push_back({cleared, bp * (1.0 - p_s)});
                            } else {
                                nb.push_back({bs, bp});
                            }
                        }
                        branch = std::move(nb);
                    }
                for (auto [bs, bp] : branch) {
                    if (bs >> node(n, 0) & 1u) pmf[t] += bp;
                    else next[bs] += bp;
                }
            }
        }
        dist = std::move(next);
    }
    return pmf;
}

}  // namespace

TEST(GeometricPmf, Examples) {
    const auto one = geometric_pmf(1.0, 5);
    EXPECT_DOUBLE_EQ(one.prob(1), 1.0);
    for (std::size_t t = 2; t <= 5; ++t) EXPECT_DOUBLE_EQ(one.prob(t), 0.0);
    const auto g = geometric_pmf(0.5, 3);
    EXPECT_DOUBLE_EQ(g.prob(1), 0.5);
    EXPECT_DOUBLE_EQ(g.prob(2), 0.25);
    EXPECT_DOUBLE_EQ(g.prob(3), 0.125);
    EXPECT_DOUBLE_EQ(g.captured_mass(), 0.875);
    EXPECT_GE(geometric_pmf(0.5, 60).captured_mass(), 1.0 - 1e-18);
    EXPECT_DOUBLE_EQ(geometric_pmf(0.5, 10, 0.8).mean_w(4), 0.8);
    EXPECT_THROW(geometric_pmf(0.0, 10), DomainError);
    EXPECT_THROW(geometric_pmf(0.5, 0), DomainError);
}

TEST(MaxCombine, PointMasses) {
    const auto d = point_mass(10);
    const auto m = max_combine(d, d, {5.0, std::nullopt});
    EXPECT_DOUBLE_EQ(m.prob(1), 1.0);
    EXPECT_DOUBLE_EQ(m.mean_w(1), 1.0);
}

TEST(MaxCombine, MeanOfTwoGeometrics) {
    const auto g = geometric_pmf(0.5, 200);
    const auto m = max_combine(g, g);
    EXPECT_NEAR(m.mean(), 8.0 / 3.0, 1e-12);
    EXPECT_NEAR(m.captured_mass(), 1.0, 1e-12);
    // CDF product
    for (std::size_t t = 1; t < 30; ++t) {
        const double F = 1.0 - std::pow(0.5, static_cast<double>(t));
        const double Fp = 1.0 - std::pow(0.5, static_cast<double>(t - 1));
        EXPECT_NEAR(m.prob(t), F * F - Fp * Fp, 1e-15);
    }
}

TEST(MaxCombine, DecayFactorFiveNinths) {
    const auto g = geometric_pmf(0.5, 200, 1.0);
    CombineOptions c;
    c.t_coh = 1.0 / std::log(2.0);
    const auto m = max_combine(g, g, c);
    EXPECT_NEAR(m.overall_mean_w(), 5.0 / 9.0, 1e-12);
    EXPECT_NEAR(m.overall_mean_w(), formulas::gamma_decay(0.5, c.t_coh), 1e-12);
}

TEST(MaxCombine, UnequalInputs) {
    const auto a = geometric_pmf(0.5, 300), b = geometric_pmf(0.2, 300);
    const auto m = max_combine(a, b);
    // E[max] = E[A] + E[B] - E[min], min ~ Geometric(1 - 0.5*0.8)
    EXPECT_NEAR(m.mean(), 2.0 + 5.0 - 1.0 / 0.6, 1e-10);
    EXPECT_THROW(max_combine(a, geometric_pmf(0.2, 100)), DomainError);
}

TEST(MaxCombine, HorizonFloor) {
    const auto g = geometric_pmf(0.1, 20);
    CombineOptions c;
    c.mass_floor = 1.0 - 1e-6;
    EXPECT_THROW(max_combine(g, g, c), HorizonError);
}

TEST(CompoundGeometric, Examples) {
    const auto g = geometric_pmf(0.3, 100);
    const auto same = compound_geometric(g, 1.0);
    EXPECT_EQ(same.pmf, g.pmf);
    const auto pm = compound_geometric(point_mass(40), 0.5);
    for (std::size_t t = 1; t <= 40; ++t) EXPECT_NEAR(pm.prob(t), std::pow(0.5, static_cast<double>(t)), 1e-15);
    // Geometric(0.5) rounds with Geometric(0.5) repetitions: Geometric(0.25) in total.
    const auto gg = compound_geometric(geometric_pmf(0.5, 300), 0.5);
    for (std::size_t t = 1; t <= 50; ++t)
        EXPECT_NEAR(gg.prob(t), 0.25 * std::pow(0.75, static_cast<double>(t - 1)), 1e-15);
    EXPECT_NEAR(gg.mean(), 4.0, 1e-9);
    // With max-of-two rounds the single-repeater waiting time appears.
    const auto g5 = geometric_pmf(0.5, 400);
    EXPECT_NEAR(compound_geometric(max_combine(g5, g5), 0.5).mean(), 16.0 / 3.0, 1e-9);
    EXPECT_THROW(compound_geometric(g, 0.0), DomainError);
}

TEST(ChainDistribution, LevelZeroIsGeometric) {
    const auto d = chain_distribution(params(0, 0.3), trunc_at(200));
    const auto g = geometric_pmf(0.3, 200);
    for (std::size_t t = 0; t <= 200; ++t) EXPECT_DOUBLE_EQ(d.prob(t), g.prob(t));
}

TEST(ChainDistribution, SingleRepeaterMean) {
    const auto d = chain_distribution(params(1, 0.5, 0.5), trunc_at(400));
    EXPECT_NEAR(d.mean(), 16.0 / 3.0, 1e-6);
    EXPECT_GE(d.captured_mass(), 1.0 - 1e-9);
}

TEST(ChainDistribution, MatchesTickOracle) {
    for (int n : {1, 2}) {
        for (double ps : {0.5, 1.0}) {
            const std::size_t T = 60;
            TrackOptions o = trunc_at(T);
            o.mass_floor = 0.0;
            const auto d = chain_distribution(params(n, 0.5, ps), o);
            const auto ref = tick_oracle(n, 0.5, ps, T);
            for (std::size_t t = 1; t <= T; ++t) EXPECT_NEAR(d.prob(t), ref[t], 1e-13) << n << " " << ps << " " << t;
        }
    }
    TrackOptions o = trunc_at(25);
    o.mass_floor = 0.0;
    const auto d3 = chain_distribution(params(3, 0.6, 0.7), o);
    const auto ref3 = tick_oracle(3, 0.6, 0.7, 25);
    for (std::size_t t = 1; t <= 25; ++t) EXPECT_NEAR(d3.prob(t), ref3[t], 1e-13);
}

TEST(ChainDistribution, WernerPowerRule) {
    for (int n : {1, 2, 3}) {
        auto p = params(n, 0.6, 0.8);
        p.w0 = 0.9;
        const auto d = chain_distribution(p, trunc_at(1500));
        const double expect = std::pow(0.9, std::pow(2.0, n));
        for (std::size_t t = 1; t <= 100; ++t)
            if (d.prob(t) > 1e-200) {
                EXPECT_NEAR(d.mean_w(t), expect, 1e-12);
            }
    }
}

TEST(ChainDistribution, ShortTimesDeviateMostFromGeometric) {
    const auto d = chain_distribution(params(2, 0.5, 0.5), trunc_at(2000));
    const double mean = d.mean();
    const double p = 1.0 / mean;
    std::size_t worst = 0;
    double dev = -1.0;
    for (std::size_t t = 1; t <= d.t_trunc(); ++t) {
        const double g = p * std::pow(1.0 - p, static_cast<double>(t - 1));
        if (std::abs(d.prob(t) - g) > dev) {
            dev = std::abs(d.prob(t) - g);
            worst = t;
        }
    }
    EXPECT_LT(static_cast<double>(worst), mean);
}

TEST(ChainDistribution, HorizonError) {
    EXPECT_THROW(chain_distribution(params(2, 0.1, 0.5), trunc_at(50)), HorizonError);
    TrackOptions o = trunc_at(50);
    o.mass_floor = 0.0;
    EXPECT_NO_THROW(chain_distribution(params(2, 0.1, 0.5), o));
}

TEST(ChainDistribution, DefaultHorizonCapturesMass) {
    const auto d = chain_distribution(params(3, 0.3, 0.6));
    EXPECT_GE(d.captured_mass(), 1.0 - 1e-6);
}

TEST(ChainDistribution, FftMatchesDirect) {
    const auto p = params(2, 0.2, 0.4);
    TrackOptions direct = trunc_at(3000), fft = trunc_at(3000);
    fft.conv.direct_limit = 16;
    const auto a = chain_distribution(p, direct), b = chain_distribution(p, fft);
    for (std::size_t t = 1; t <= 3000; ++t) {
        EXPECT_NEAR(a.prob(t), b.prob(t), 1e-14);
        EXPECT_NEAR(a.omega[t], b.omega[t], 1e-14);
    }
}

TEST(ChainDistribution, ExactMeanAgrees) {
    const auto d = chain_distribution(params(2, 0.5, 0.5), trunc_at(2000));
    const auto e = exact_mean(params(2, 0.5, 0.5));
    EXPECT_NEAR(e.mean, d.mean(), 1e-9);
    EXPECT_NEAR(exact_mean(params(1, 0.5, 0.5)).mean, 16.0 / 3.0, 1e-12);
    for (double ps : {0.1, 0.5, 0.9}) {
        auto p = params(1, 0.1, ps);
        EXPECT_NEAR(exact_mean(p).mean, formulas::geometric_level_mean(p),
                    1e-11 * formulas::geometric_level_mean(p));
    }
    EXPECT_DOUBLE_EQ(exact_mean(params(0, 0.25)).mean, 4.0);
}

TEST(ChainDistribution, DetSwapIsLowerBound) {
    for (int n = 1; n <= 3; ++n)
        for (double ps : {0.3, 0.9}) {
            const auto p = params(n, 0.4, ps);
            EXPECT_LE(formulas::det_swap_mean(1L << n, 0.4), exact_mean(p).mean);
        }
    // equality when swaps never fail
    EXPECT_NEAR(exact_mean(params(2, 0.4, 1.0)).mean, formulas::det_swap_mean(4, 0.4), 1e-10);
}

TEST(Cutoff, MatchesTwoLinkClosedForm) {
    for (double p : {0.3, 0.5})
        for (long tau : {1L, 2L, 5L}) {
            const auto g = geometric_pmf(p, 400);
            CombineOptions c;
            c.tau = tau;
            const auto m = max_combine(g, g, c);
            EXPECT_NEAR(m.mean(), formulas::det_swap_mean_cutoff(2, p, tau), 1e-9) << p << " " << tau;
        }
}

TEST(Cutoff, LargeTauEqualsNoCutoff) {
    const auto g = geometric_pmf(0.4, 120);
    CombineOptions c;
    c.tau = 119;
    c.t_coh = 7.0;
    CombineOptions none;
    none.t_coh = 7.0;
    const auto a = max_combine(g, g, c), b = max_combine(g, g, none);
    c.tau = 60;
    const auto mid = max_combine(g, g, c);
    for (std::size_t t = 1; t <= 120; ++t) {
        EXPECT_NEAR(a.prob(t), b.prob(t), 1e-15);
        EXPECT_NEAR(a.omega[t], b.omega[t], 1e-15);
    }
    // 60 exceeds every gap with non-negligible mass
    EXPECT_NEAR(mid.mean(), b.mean(), 1e-12);
}

TEST(Cutoff, AsymmetricPathMatchesSymmetric) {
    const auto g = geometric_pmf(0.35, 150, 0.9);
    auto h = g;
    for (auto& w : h.omega) w *= 1.0 - 1e-9;  // forces the two-sided path
    CombineOptions c;
    c.tau = 3;
    c.t_coh = 10.0;
    const auto a = max_combine(g, g, c), b = max_combine(g, h, c);
    for (std::size_t t = 1; t <= 150; ++t) {
        EXPECT_NEAR(a.prob(t), b.prob(t), 1e-15);
        EXPECT_NEAR(a.omega[t], b.omega[t], 1e-8 * a.prob(t) + 1e-300);
    }
}

TEST(Cutoff, RaisesQualityAndWaitingTime) {
    for (long tau : {1L, 3L, 8L}) {
        auto p = params(2, 0.4, 0.7);
        p.t_coh = 5.0;
        const auto base = chain_distribution(p, trunc_at(600));
        p.tau = tau;
        const auto cut = chain_distribution(p, trunc_at(600));
        EXPECT_GE(cut.mean(), base.mean() - 1e-12);
        EXPECT_GE(cut.overall_mean_w(), base.overall_mean_w() - 1e-12);
    }
}

TEST(Cutoff, SizeLimit) {
    auto p = params(1, 0.5, 0.5);
    p.tau = 2;
    TrackOptions o = trunc_at(400);
    o.cutoff_trunc_limit = 300;
    EXPECT_THROW(chain_distribution(p, o), SizeLimitError);
}

TEST(Distillation, SingleRoundWithoutDecay) {
    auto p = params(0, 0.5);
    p.w0 = 0.8;
    const auto d = chain_distribution(p, Protocol::parse("D"), trunc_at(300));
    const auto o = distill_step(0.8, 0.8);
    const auto g = geometric_pmf(0.5, 300, 0.8);
    const auto ref = compound_geometric(max_combine(g, g), o.success_prob);
    for (std::size_t t = 1; t <= 300; ++t) {
        EXPECT_NEAR(d.prob(t), ref.prob(t), 1e-15);
        if (d.prob(t) > 1e-200) {
            EXPECT_NEAR(d.mean_w(t), o.w, 1e-12);
        }
    }
}

TEST(Distillation, ExactMeanMatchesDistribution) {
    auto p = params(1, 0.5, 0.6);
    p.w0 = 0.85;
    p.t_coh = 20.0;
    const auto pr = Protocol::with_distillation(1, 1);
    const auto d = chain_distribution(p, pr, trunc_at(3000));
    const auto e = exact_mean(p, pr);
    EXPECT_NEAR(e.mean, d.mean(), 1e-8);
    EXPECT_NEAR(e.mean_w, d.overall_mean_w(), 1e-8);
}

TEST(Export, CsvAndJson) {
    const auto g = geometric_pmf(0.5, 3, 1.0);
    std::ostringstream os;
    write_csv(os, g);
    EXPECT_EQ(os.str(),
              "t,pmf,cdf,mean_w,mean_F\n"
              "1,0.5,0.5,1,1\n"
              "2,0.25,0.75,1,1\n"
              "3,0.125,0.875,1,1\n");
    const auto j = summary_json(g);
    EXPECT_DOUBLE_EQ(j["captured_mass"].get<double>(), 0.875);
    EXPECT_TRUE(j.contains("mean"));
    EXPECT_TRUE(j.contains("stddev"));
}
