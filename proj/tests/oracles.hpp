#pragma once

// Brute-force references shared by the unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnet/netmodel.hpp"

namespace oracle {

using namespace qnet;

using Mat4 = Eigen::Matrix4d;
using Mat16 = Eigen::Matrix<double, 16, 16>;

Mat4 werner_matrix(double F) {
    Eigen::Vector4d phi = Eigen::Vector4d::Zero();
    phi(0) = phi(3) = 1.0 / std::sqrt(2.0);
    const Mat4 P = phi * phi.transpose();
    return F * P + (1.0 - F) / 3.0 * (Mat4::Identity() - P);
}

// Qubit order in the 16-dim space: A1 B1 A2 B2 (A1 most significant).
Mat16 cnot(int control, int target) {
    Mat16 U = Mat16::Zero();
    for (int i = 0; i < 16; ++i) {
        const int cbit = 3 - control, tbit = 3 - target;
        int j = i;
        if ((i >> cbit) & 1) j ^= 1 << tbit;
        U(j, i) = 1.0;
    }
    return U;
}

struct Brute {
    double p;
    double F;
};

// Bilateral CNOT from pair 1 onto pair 2, then keep runs where the target
// pair's Z outcomes agree.
Brute bbpssw_brute(double F1, double F2) {
    Mat16 rho;
    const Mat4 r1 = werner_matrix(F1), r2 = werner_matrix(F2);
    // kron(r1, r2) has order A1 B1 A2 B2 directly.
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l) rho(4 * i + k, 4 * j + l) = r1(i, j) * r2(k, l);
    const Mat16 U = cnot(1, 3) * cnot(0, 2);
    rho = U * rho * U.transpose();
    Mat4 out = Mat4::Zero();
    double p = 0.0;
    for (int a2 = 0; a2 < 2; ++a2) {
        const int keep = (a2 << 1) | a2;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) out(i, j) += rho(4 * i + keep, 4 * j + keep);
    }
    p = out.trace();
    Eigen::Vector4d phi = Eigen::Vector4d::Zero();
    phi(0) = phi(3) = 1.0 / std::sqrt(2.0);
    return {p, phi.dot(out * phi) / p};
}

WeightedUGraph random_graph(std::mt19937_64& rng, std::size_t n, double density, int max_w) {
    WeightedUGraph g(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (u(rng) < density) g.add_weight(i, j, static_cast<double>(1 + rng() % max_w));
    return g;
}

NetworkSpec random_mixed(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NetworkSpec net;
    for (std::size_t i = 0; i < n; ++i) net.nodes.push_back("n" + std::to_string(i));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || u(rng) > 0.35) continue;
            ChannelModel ch = u(rng) < 0.5 ? ChannelModel::lossy(0.9 * u(rng))
                                           : ChannelModel::explicit_values(0.0, 0.0);
            if (ch.kind == ChannelModel::Kind::Explicit) {
                ch.E_upper = 3 * u(rng);
                ch.Q_lower = ch.E_upper * u(rng);
            }
            net.edges.push_back({net.nodes[i], net.nodes[j], ch, u(rng)});
        }
    return net;
}

/// E[max of N iid Geometric(p)] by summing t * Pr(max = t).
inline double max_geometric_mean(int N, double p, long t_max = 100000) {
    double mean = 0.0, prev = 0.0;
    for (long t = 1; t <= t_max; ++t) {
        const double cdf = std::pow(1.0 - std::pow(1.0 - p, static_cast<double>(t)), N);
        mean += static_cast<double>(t) * (cdf - prev);
        prev = cdf;
        if (1.0 - cdf < 1e-18) break;
    }
    return mean;
}

}  // namespace oracle
