#pragma once

// Randomized networks and batches shared by the unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pkan/network.hpp"
#include "pkan/objective.hpp"

namespace fixture {

inline std::vector<std::vector<double>> random_inputs(std::size_t count, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    std::vector<std::vector<double>> xs(count, std::vector<double>(dim));
    for (auto& x : xs)
        for (double& v : x) v = u(rng);
    return xs;
}

// Coefficients of order one, random biases, and hidden normalizers fitted to
// the activation range of `probe` so no evaluation is clamped. With
// `with_fixed`, every third edge becomes a fixed series in a rotating space.
inline pkan::Network random_network(const std::vector<std::size_t>& widths, std::uint64_t seed, bool with_fixed,
                                    const std::vector<std::vector<double>>& probe) {
    using namespace pkan;
    EdgeConfig ec;
    Network net(Architecture{widths}, ec, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& e : net.edges())
        for (double& c : e.parameters()) c = u(rng);
    for (auto& layer : net.biases())
        for (double& b : layer) b = 0.5 * u(rng);
    if (with_fixed) {
        const SpaceKind kinds[] = {SpaceKind::Fourier, SpaceKind::Chebyshev, SpaceKind::Bessel};
        std::size_t e = 0;
        std::vector<EdgeId> ids;
        for (const auto& edge : net.edges()) ids.push_back(edge.id);
        for (const auto& id : ids) {
            if (e % 3 == 1) {
                const FunctionalSpace s(kinds[(e / 3) % 3], ec.transform_size, ec.lo, ec.hi);
                net.fix_edge(id, FixedParametric(s, {0, 1, 2, 5}, {u(rng), u(rng), 0.5 * u(rng), 0.3 * u(rng)}), 0.9);
            }
            ++e;
        }
    }
    // inputs already lie in [-1, 1]; hidden layers get a 25% margin
    for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
        std::vector<double> lo(widths[l], 1e300), hi(widths[l], -1e300);
        for (const auto& x : probe) {
            const auto acts = net.activations(x);
            for (std::size_t i = 0; i < widths[l]; ++i) {
                lo[i] = std::min(lo[i], acts[l][i]);
                hi[i] = std::max(hi[i], acts[l][i]);
            }
        }
        for (std::size_t i = 0; i < widths[l]; ++i) net.calibrate(l, i, lo[i], hi[i], 0.25);
    }
    return net;
}

inline std::vector<pkan::Example> random_batch(const pkan::Network& net, std::size_t count, std::uint64_t seed) {
    const auto xs = random_inputs(count, net.architecture().inputs(), seed);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> n01;
    std::vector<pkan::Example> batch;
    for (const auto& x : xs) {
        std::vector<double> y(net.architecture().outputs());
        for (double& v : y) v = n01(rng);
        batch.push_back({x, y});
    }
    return batch;
}

// Every parameter's central difference of f against the analytic gradient.
// Returns the worst relative error under the absolute floor convention.
template <class F>
double worst_gradient_error(pkan::Network& net, std::span<const double> analytic, F&& f, double step = 1e-5,
                            double floor = 1e-7) {
    const auto theta = net.parameters();
    double worst = 0.0;
    auto t = theta;
    for (std::size_t p = 0; p < theta.size(); ++p) {
        t[p] = theta[p] + step;
        net.set_parameters(t);
        const double fp = f(net);
        t[p] = theta[p] - step;
        net.set_parameters(t);
        const double fm = f(net);
        t[p] = theta[p];
        const double fd = (fp - fm) / (2.0 * step);
        worst = std::max(worst, oracle::rel_err(analytic[p], fd, floor));
    }
    net.set_parameters(theta);
    return worst;
}

// Architectures of the gradient sweep.
inline const std::vector<std::vector<std::size_t>>& gradient_architectures() {
    static const std::vector<std::vector<std::size_t>> a{{1, 1}, {1, 2, 1}, {2, 4, 1}, {2, 8, 1}};
    return a;
}

}  // namespace fixture
