#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pkan/funcspace.hpp"
#include "pkan/network.hpp"

namespace pkan {

// 1 - SS_res / SS_tot. Throws DegenerateInputError for constant targets.
double r2_score(std::span<const double> predictions, std::span<const double> targets);

struct SpectralReport {
    int round = 0;
    double jac_std = 0.0;                  // standard deviation of all Jacobian entries
    std::vector<double> singular_values;   // descending
    std::size_t parameter_count = 0;
    bool empty = false;                    // network had no parameters
};

SpectralReport spectral_spread(Network& net, std::span<const std::vector<double>> inputs, int round = 0);
// The same statistics for an already assembled Jacobian (rows = outputs x inputs).
SpectralReport spectral_report(const Eigen::MatrixXd& jacobian, int round = 0);

// Halton points (bases 2, 3, 5, ...) with a seeded Cranley-Patterson shift,
// mapped into the per-dimension domain.
std::vector<std::vector<double>> quasi_random_inputs(std::size_t count,
                                                     std::span<const std::pair<double, double>> domain,
                                                     std::uint64_t seed);

struct SymbolicEdge {
    EdgeId id;
    std::optional<SpaceKind> space;  // empty for spline edges
    std::string expression;          // in the normalized variable u
    std::string variable;            // how u is obtained from the edge input x
};

// Coefficients are printed with 6 significant digits. Fourier terms use
// u = (x - lo)/(hi - lo) in [0, 1); Chebyshev uses u in [-1, 1]; Bessel uses
// u in [0, 1] with phiq the orthonormalized J0 family of FunctionalSpace.
std::string render_fixed(const FixedParametric& fp);
std::string variable_for(const FunctionalSpace& space);
std::vector<SymbolicEdge> render_symbolic(const Network& net);

// Evaluates an expression produced by render_fixed at normalized input u.
// `space` resolves phiq(...) terms and may be null for Fourier/Chebyshev.
double evaluate_symbolic(std::string_view expression, double u, const FunctionalSpace* space = nullptr);

// Maps an edge-domain input x onto the normalized variable u of a space.
double to_normalized(const FunctionalSpace& space, double x);

}  // namespace pkan
