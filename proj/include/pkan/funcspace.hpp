#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace pkan {

// Candidate families an edge can be projected into. The declaration order is
// also the tie-break priority when two spaces fit equally well.
enum class SpaceKind { Fourier = 0, Chebyshev = 1, Bessel = 2 };

inline constexpr std::size_t kDefaultTransformSize = 64;
inline constexpr std::size_t kDefaultKeep = 4;

std::string_view to_string(SpaceKind kind);
SpaceKind parse_space_kind(std::string_view name);  // throws ConfigError

// A discrete orthonormal family sampled on its native grid.
//
//  * Fourier: uniform grid on [lo, hi); real trigonometric basis
//      index 0 -> 1, 2q-1 -> cos(2 pi q u), 2q -> sin(2 pi q u), n-1 -> cos(pi n u),
//    with u = (x - lo) / (hi - lo).
//  * Chebyshev: Chebyshev nodes of the first kind; index q -> T_q(u),
//    u = 2 (x - lo) / (hi - lo) - 1. Coefficients are an orthonormal DCT-II.
//  * Bessel: uniform grid on [lo, hi); J0(z_r u) for r = 0..n-1 (z_0 = 0,
//    z_r the r-th zero of J0) orthonormalized by Gram-Schmidt in that order.
//
// Handles are cheap to copy; the sampled matrices are cached per
// (kind, size, domain) and shared between threads.
class FunctionalSpace {
public:
    FunctionalSpace(SpaceKind kind, std::size_t grid_size = kDefaultTransformSize, double lo = -1.0, double hi = 1.0);

    SpaceKind kind() const;
    std::size_t grid_size() const;
    std::size_t basis_count() const;
    double lo() const;
    double hi() const;

    // Abscissae the analysis matrix expects values on.
    std::span<const double> native_abscissae() const;

    // Orthonormal analysis matrix; row q holds basis vector q on the native grid.
    const Eigen::MatrixXd& basis_matrix() const;

    // alpha_q = natural_scale(q) * c_q, where c_q multiplies the continuous
    // basis function psi_q in eval_fixed and alpha_q is the orthonormal coefficient.
    double natural_scale(std::size_t q) const;

    // Continuous psi_q at x for each requested index, with d psi_q / dx.
    void eval_terms(std::span<const std::size_t> indices, double x, std::span<double> values,
                    std::span<double> slopes) const;

    // Maps values on the uniform grid of grid_size() points into the native
    // grid (identity except for Chebyshev, which uses local cubic interpolation).
    std::vector<double> resample_from_uniform(std::span<const double> uniform_values) const;

    // Entropy of the projection of native-grid values and its gradient with
    // respect to those values (zero contribution from exactly-zero coefficients).
    struct EntropyGradient {
        double entropy = 0.0;
        bool degenerate = false;
        std::vector<double> d_values;
    };
    EntropyGradient entropy_with_gradient(std::span<const double> native_values) const;

    bool operator==(const FunctionalSpace& other) const;

    struct Impl;

private:
    std::shared_ptr<const Impl> impl_;
};

struct ProjectionReport {
    SpaceKind space = SpaceKind::Fourier;
    // Orthonormal real coefficients (trigonometric basis for Fourier).
    std::vector<double> coefficients;
    // Fourier only: unitary DFT bins of the native values.
    std::vector<std::complex<double>> spectrum;
    // Amplitudes entering the entropy. Fourier uses the two-sided DFT moduli.
    std::vector<double> magnitudes;
    std::vector<double> normalized;
    double entropy = 0.0;
    bool degenerate = false;
    std::size_t n_keep = kDefaultKeep;
    double truncation_r2 = 0.0;
};

// `values` must be sampled on space.native_abscissae(). `label` names the edge
// in error messages.
ProjectionReport project(std::span<const double> values, const FunctionalSpace& space,
                         std::size_t n_keep = kDefaultKeep, std::string_view label = {});

// Inverse of the orthonormal analysis: native-grid values from coefficients.
std::vector<double> reconstruct(std::span<const double> coefficients, const FunctionalSpace& space);

// Radix-2 unitary DFT (size must be a power of two).
std::vector<std::complex<double>> unitary_fft(std::span<const double> values);

struct EntropyValue {
    double value = 0.0;
    bool degenerate = false;  // every coefficient was zero
};

// Shannon entropy of |c| / sum |c|, with 0 ln 0 = 0.
EntropyValue coeff_entropy(std::span<const double> coefficients);
// d entropy / d c_q; zero wherever c_q == 0 and for degenerate input.
std::vector<double> coeff_entropy_gradient(std::span<const double> coefficients);

// Softmin-weighted mean sum E_g exp(-lambda E_g) / sum exp(-lambda E_k).
double softmin_entropy(std::span<const double> entropies, double lambda);

struct SoftminGradient {
    double value = 0.0;
    std::vector<double> d_entropies;
    double d_lambda = 0.0;
};
SoftminGradient softmin_entropy_gradient(std::span<const double> entropies, double lambda);

// Linear ramp from lambda_min at round 0 to lambda_max at round `rounds`.
struct LambdaSchedule {
    double lambda_min = 0.1;
    double lambda_max = 10.0;
    int rounds = 5;

    void validate() const;
    double at(int round) const;
};

// Truncated series in one space. Coefficients multiply the continuous basis
// functions described on FunctionalSpace.
struct FixedParametric {
    FunctionalSpace space;
    std::vector<std::size_t> indices;  // strictly increasing, < basis_count
    std::vector<double> coefficients;

    FixedParametric(FunctionalSpace s, std::vector<std::size_t> idx, std::vector<double> coeffs);

    std::size_t parameter_count() const { return coefficients.size(); }
    bool operator==(const FixedParametric&) const = default;
};

// Clamps x into the domain with the same tolerance as splines.
double eval_fixed(const FixedParametric& fp, double x);
// Value, d/dx, and per-coefficient gradient (the basis values).
struct FixedEvaluation {
    double value = 0.0;
    double slope = 0.0;
    std::vector<double> d_coefficients;
};
FixedEvaluation eval_fixed_with_gradient(const FixedParametric& fp, double x);
// Allocation-free variant: basis values go to d_coefficients, returns {value, slope}.
std::pair<double, double> eval_fixed_into(const FixedParametric& fp, double x, std::span<double> d_coefficients);

// Keeps the n_keep largest orthonormal coefficients of native-grid values.
FixedParametric truncate(std::span<const double> native_values, const FunctionalSpace& space, std::size_t n_keep);

struct BestFit {
    FixedParametric fixed;
    double r2 = 0.0;
    std::vector<double> r2_per_space;  // same order as the `spaces` argument
};

// R^2 of a reconstruction; constant targets score 1 if reproduced exactly, 0 otherwise.
double fit_r2(std::span<const double> target, std::span<const double> approx);

// Values are on the uniform grid of the spaces (all spaces must share size
// and domain). R^2 is measured on that uniform grid for every space.
BestFit best_fit(std::span<const double> uniform_values, std::span<const FunctionalSpace> spaces,
                 std::size_t n_keep = kDefaultKeep);

// Same, sampling `f` directly on each native grid instead of resampling.
BestFit best_fit(const std::function<double(double)>& f, std::span<const FunctionalSpace> spaces,
                 std::size_t n_keep = kDefaultKeep);

// Fits the n_keep-term truncation in one particular space.
BestFit fit_in_space(const std::function<double(double)>& f, const FunctionalSpace& space,
                     std::size_t n_keep = kDefaultKeep);

// Zeros of J0, ascending; count entries.
std::vector<double> bessel_j0_zeros(std::size_t count);

}  // namespace pkan
