// Library usage: capacity bounds of a network file, then the waiting time of
// a two-level repeater chain from three engines.
//
//   bounds_demo samples/two_lossy_chain.json A B

#include <fstream>
#include <iostream>
#include <sstream>

#include "qnet/capbounds.hpp"
#include "qnet/chainformulas.hpp"
#include "qnet/disttrack.hpp"
#include "qnet/montecarlo.hpp"

int main(int argc, char** argv) {
    if (argc != 4) {
        std::cerr << "usage: bounds_demo NETWORK.json A B\n";
        return 64;
    }
    std::ifstream f(argv[1]);
    std::stringstream text;
    text << f.rdbuf();
    try {
        const auto net = qnet::parse_network(text.str());
        for (auto unit : {qnet::Unit::PerNetworkUse, qnet::Unit::PerChannelUse}) {
            qnet::BoundOptions opt;
            opt.unit = unit;
            const auto r = qnet::bipartite_bounds(net, argv[2], argv[3], opt);
            std::cout << qnet::to_string(unit) << ": " << r.lower << " <= C <= " << r.upper << '\n';
        }

        qnet::ChainParams p;
        p.n = 2;
        p.p_g = 0.5;
        p.p_s = 0.5;
        p.t_coh = 50.0;
        std::cout << "geometric-level mean " << qnet::formulas::geometric_level_mean(p) << '\n';
        const auto e = qnet::exact_mean(p);
        std::cout << "exact mean " << e.mean << ", mean fidelity " << qnet::fidelity_of(e.mean_w) << '\n';
        const auto s = qnet::run_batch(p, qnet::Protocol::swap_only(2), 20000, 1);
        std::cout << "sampled mean " << s.mean_t << " +- " << *s.stderr_t << '\n';
    } catch (const qnet::Error& err) {
        std::cerr << err.what() << '\n';
        return 2;
    }
    return 0;
}
