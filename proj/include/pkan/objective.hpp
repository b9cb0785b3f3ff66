#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pkan/funcspace.hpp"
#include "pkan/network.hpp"

namespace pkan {

struct Example {
    std::vector<double> x;
    std::vector<double> y;
};

// Weights of the unified cost and the knobs of the fix/revert rounds.
struct CostWeights {
    double alpha = 1.0;
    double beta = 0.05;
    double gamma = 0.02;
    int norm_order = 1;
    LambdaSchedule schedule{};
    double r2_min = 0.6;
    double tau_regret = 0.5;
    int rounds = 5;

    void validate() const;
};

struct EdgeEntropy {
    EdgeId id;
    std::vector<double> per_space;  // same order as the objective's spaces
    double softmin = 0.0;
    SpaceKind winner = SpaceKind::Fourier;
    bool degenerate = false;
};

struct CostBreakdown {
    double total = 0.0;
    double reconstruction = 0.0;
    double entropy = 0.0;
    double regularization = 0.0;
    double lambda = 0.0;
    std::vector<EdgeEntropy> edges;  // trainable spline edges only
};

// Q = alpha * MSE + beta * mean softmin entropy + gamma * mean edge magnitude.
//
// Spline edges are sampled through cached basis matrices, so entropy and
// regularization gradients reach the spline coefficients linearly.
class Objective {
public:
    Objective(const EdgeConfig& config, std::vector<FunctionalSpace> spaces);

    const std::vector<FunctionalSpace>& spaces() const { return spaces_; }
    const EdgeConfig& edge_config() const { return config_; }

    // Mean squared error over every (example, output) pair. Adds its gradient
    // into grad when grad is nonempty.
    double reconstruction_loss(Network& net, std::span<const Example> batch, std::span<double> grad = {}) const;

    // Mean over trainable spline edges of the softmin of per-space entropies.
    double entropy_term(const Network& net, double lambda, std::span<double> grad = {},
                        std::vector<EdgeEntropy>* report = nullptr) const;

    // Mean over all edges of mean |s(x)|^m on the uniform transform grid.
    double regularization_term(const Network& net, int norm_order, std::span<double> grad = {}) const;

    // Per-space entropies of one spline edge (no gradient).
    std::vector<double> edge_entropies(const SplineEdge& spline) const;

    CostBreakdown total_cost(Network& net, std::span<const Example> batch, const CostWeights& weights, int round,
                             std::span<double> grad = {}) const;

private:
    EdgeConfig config_;
    std::vector<FunctionalSpace> spaces_;
    std::vector<Eigen::MatrixXd> native_sampling_;  // per space: native samples x spline coefficients
    Eigen::MatrixXd uniform_sampling_;              // uniform grid x spline coefficients
    std::vector<double> uniform_abscissae_;
};

// Default candidate spaces (Fourier, Chebyshev, Bessel) on the edge domain.
std::vector<FunctionalSpace> default_spaces(const EdgeConfig& config);

}  // namespace pkan
