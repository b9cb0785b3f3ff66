#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace pkan {

inline constexpr int kMaxSplineDegree = 7;
inline constexpr double kDomainClampTolerance = 1e-12;

// Clamped (open uniform) knot vector on [lo, hi].
//
// `intervals` is the number of knot spans between lo and hi. The basis has
// intervals + degree functions, so a cubic grid with 20 spans carries 23
// coefficients per edge.
class KnotGrid {
public:
    KnotGrid(int degree, int intervals, double lo, double hi);

    // Arbitrary nondecreasing knots; the first and last must each repeat
    // exactly degree + 1 times.
    static KnotGrid from_knots(int degree, std::vector<double> knots);

    int degree() const { return degree_; }
    int intervals() const { return intervals_; }
    double lo() const { return knots_.front(); }
    double hi() const { return knots_.back(); }
    std::span<const double> knots() const { return knots_; }
    std::size_t basis_count() const { return knots_.size() - static_cast<std::size_t>(degree_) - 1; }

    // Snaps x onto [lo, hi] when it is within kDomainClampTolerance outside,
    // throws DomainError otherwise. `who` names the caller in the message.
    double clamp_to_domain(double x, std::string_view who = {}) const;

    // Index s with knots[s] <= x < knots[s+1]; x == hi maps to the last
    // nonempty span. x must already be inside the domain.
    std::size_t find_span(double x) const;

    bool operator==(const KnotGrid&) const = default;

private:
    KnotGrid() = default;
    void validate() const;

    int degree_ = 0;
    int intervals_ = 0;
    std::vector<double> knots_;
};

// The degree+1 basis functions that are nonzero at one abscissa.
struct LocalBasis {
    std::size_t first = 0;  // index of values[0] in the full basis
    std::size_t count = 0;  // degree + 1
    std::array<double, kMaxSplineDegree + 1> values{};
    std::array<double, kMaxSplineDegree + 1> derivatives{};
};

// Cox-de Boor evaluation of the nonzero basis functions and their first
// derivatives at x (clamped per KnotGrid::clamp_to_domain).
LocalBasis local_basis(const KnotGrid& grid, double x, std::string_view who = {});

// Dense basis vector of length basis_count(). Entries are nonnegative and sum to one.
std::vector<double> basis_eval(const KnotGrid& grid, double x, std::string_view who = {});

// n uniformly spaced abscissae over [lo, hi): includes lo, excludes hi.
std::vector<double> uniform_abscissae(double lo, double hi, std::size_t n);

// Throws ConfigError unless n >= 8 and n is a power of two.
void require_transform_size(std::size_t n);

struct SplineEdge {
    KnotGrid grid;
    std::vector<double> coefficients;
    bool trainable = true;

    SplineEdge(KnotGrid g, std::vector<double> coeffs, bool is_trainable = true);

    double eval(double x, std::string_view who = {}) const;
    // (value, d value / dx)
    std::pair<double, double> eval_with_slope(double x, std::string_view who = {}) const;
    // Values on uniform_abscissae(lo, hi, n).
    std::vector<double> eval_grid(std::size_t n) const;

    bool operator==(const SplineEdge&) const = default;
};

struct Sample {
    double x = 0.0;
    double y = 0.0;
};

// Least-squares spline minimizing sum (y - s(x))^2 + ridge * |c|^2.
// Throws SingularityError for a rank-deficient problem with ridge == 0.
SplineEdge fit_spline(std::span<const Sample> samples, const KnotGrid& grid, double ridge = 0.0);

}  // namespace pkan
