#include "pkan/spline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pkan/errors.hpp"

namespace pkan {

KnotGrid::KnotGrid(int degree, int intervals, double lo, double hi) {
    if (degree < 1 || degree > kMaxSplineDegree) {
        throw ConfigError(fmt::format("spline degree must be in [1, {}], got {}", kMaxSplineDegree, degree));
    }
    if (intervals < 1) {
        throw ConfigError(fmt::format("spline grid needs at least one interval, got {}", intervals));
    }
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw ConfigError(fmt::format("spline domain [{}, {}] is not a proper interval", lo, hi));
    }
    degree_ = degree;
    intervals_ = intervals;
    knots_.reserve(static_cast<std::size_t>(intervals + 2 * degree + 1));
    for (int i = 0; i < degree; ++i) knots_.push_back(lo);
    const double h = (hi - lo) / intervals;
    for (int i = 0; i <= intervals; ++i) {
        knots_.push_back(i == intervals ? hi : lo + h * i);
    }
    for (int i = 0; i < degree; ++i) knots_.push_back(hi);
}

KnotGrid KnotGrid::from_knots(int degree, std::vector<double> knots) {
    KnotGrid g;
    g.degree_ = degree;
    g.knots_ = std::move(knots);
    g.validate();
    std::size_t distinct = 0;
    for (std::size_t i = 1; i < g.knots_.size(); ++i) {
        if (g.knots_[i] > g.knots_[i - 1]) ++distinct;
    }
    g.intervals_ = static_cast<int>(distinct);
    return g;
}

void KnotGrid::validate() const {
    if (degree_ < 1 || degree_ > kMaxSplineDegree) {
        throw ConfigError(fmt::format("spline degree must be in [1, {}], got {}", kMaxSplineDegree, degree_));
    }
    const auto k1 = static_cast<std::size_t>(degree_ + 1);
    if (knots_.size() < 2 * k1) {
        throw ConfigError(fmt::format("degree {} needs at least {} knots, got {}", degree_, 2 * k1, knots_.size()));
    }
    if (!std::is_sorted(knots_.begin(), knots_.end())) {
        throw ConfigError("knot vector must be nondecreasing");
    }
    const double lo = knots_.front();
    const double hi = knots_.back();
    if (!(lo < hi)) throw ConfigError("knot vector spans an empty domain");
    const auto lo_mult = static_cast<std::size_t>(std::count(knots_.begin(), knots_.end(), lo));
    const auto hi_mult = static_cast<std::size_t>(std::count(knots_.begin(), knots_.end(), hi));
    if (lo_mult != k1 || hi_mult != k1) {
        throw ConfigError(fmt::format("end knots must repeat exactly {} times (got {} and {})", k1, lo_mult, hi_mult));
    }
}

double KnotGrid::clamp_to_domain(double x, std::string_view who) const {
    const double a = lo();
    const double b = hi();
    if (x >= a && x <= b) return x;
    if (std::isfinite(x) && x >= a - kDomainClampTolerance && x <= b + kDomainClampTolerance) {
        return std::clamp(x, a, b);
    }
    throw DomainError(fmt::format("{}{}value {} outside spline domain [{}, {}]", who, who.empty() ? "" : ": ", x, a,
                                  b));
}

std::size_t KnotGrid::find_span(double x) const {
    const auto k = static_cast<std::size_t>(degree_);
    const std::size_t n = basis_count();
    if (x >= knots_[n]) return n - 1;
    // First knot strictly greater than x, then step back one.
    auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(k), knots_.begin() + static_cast<std::ptrdiff_t>(n) + 1, x);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

LocalBasis local_basis(const KnotGrid& grid, double x, std::string_view who) {
    x = grid.clamp_to_domain(x, who);
    const auto k = static_cast<std::size_t>(grid.degree());
    const auto t = grid.knots();
    const std::size_t s = grid.find_span(x);

    std::array<double, kMaxSplineDegree + 1> left{};
    std::array<double, kMaxSplineDegree + 1> right{};
    std::array<double, kMaxSplineDegree + 1> n{};
    std::array<double, kMaxSplineDegree + 1> lower{};  // degree k-1 values

    n[0] = 1.0;
    for (std::size_t j = 1; j <= k; ++j) {
        if (j == k) lower = n;
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }

    LocalBasis out;
    out.first = s - k;
    out.count = k + 1;
    out.values = n;
    // N'_{i,k} = k (N_{i,k-1} / (t_{i+k} - t_i) - N_{i+1,k-1} / (t_{i+k+1} - t_{i+1}))
    const double kd = static_cast<double>(k);
    for (std::size_t r = 0; r <= k; ++r) {
        const std::size_t i = s - k + r;
        double d = 0.0;
        if (r >= 1) {
            const double den = t[i + k] - t[i];
            if (den > 0.0) d += lower[r - 1] / den;
        }
        if (r < k) {
            const double den = t[i + k + 1] - t[i + 1];
            if (den > 0.0) d -= lower[r] / den;
        }
        out.derivatives[r] = kd * d;
    }
    return out;
}

std::vector<double> basis_eval(const KnotGrid& grid, double x, std::string_view who) {
    const LocalBasis lb = local_basis(grid, x, who);
    std::vector<double> out(grid.basis_count(), 0.0);
    for (std::size_t r = 0; r < lb.count; ++r) out[lb.first + r] = lb.values[r];
    return out;
}

std::vector<double> uniform_abscissae(double lo, double hi, std::size_t n) {
    std::vector<double> xs(n);
    const double h = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = lo + h * static_cast<double>(i);
    return xs;
}

void require_transform_size(std::size_t n) {
    if (n < 8 || !std::has_single_bit(n)) {
        throw ConfigError(fmt::format("transform grid size must be a power of two >= 8, got {}", n));
    }
}

SplineEdge::SplineEdge(KnotGrid g, std::vector<double> coeffs, bool is_trainable)
    : grid(std::move(g)), coefficients(std::move(coeffs)), trainable(is_trainable) {
    if (coefficients.size() != grid.basis_count()) {
        throw ConfigError(fmt::format("spline needs {} coefficients, got {}", grid.basis_count(), coefficients.size()));
    }
}

double SplineEdge::eval(double x, std::string_view who) const {
    const LocalBasis lb = local_basis(grid, x, who);
    double acc = 0.0;
    for (std::size_t r = 0; r < lb.count; ++r) acc += coefficients[lb.first + r] * lb.values[r];
    return acc;
}

std::pair<double, double> SplineEdge::eval_with_slope(double x, std::string_view who) const {
    const LocalBasis lb = local_basis(grid, x, who);
    double v = 0.0;
    double d = 0.0;
    for (std::size_t r = 0; r < lb.count; ++r) {
        v += coefficients[lb.first + r] * lb.values[r];
        d += coefficients[lb.first + r] * lb.derivatives[r];
    }
    return {v, d};
}

std::vector<double> SplineEdge::eval_grid(std::size_t n) const {
    require_transform_size(n);
    std::vector<double> out;
    out.reserve(n);
    for (double x : uniform_abscissae(grid.lo(), grid.hi(), n)) out.push_back(eval(x));
    return out;
}

SplineEdge fit_spline(std::span<const Sample> samples, const KnotGrid& grid, double ridge) {
    const std::size_t nb = grid.basis_count();
    if (samples.size() < nb) {
        throw ConfigError(fmt::format("spline fit needs at least {} samples, got {}", nb, samples.size()));
    }
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw ConfigError(fmt::format("ridge must be a finite nonnegative value, got {}", ridge));
    }
    const std::size_t rows = samples.size() + (ridge > 0.0 ? nb : 0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(nb));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const LocalBasis lb = local_basis(grid, samples[r].x, "fit_spline");
        for (std::size_t c = 0; c < lb.count; ++c) {
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(lb.first + c)) = lb.values[c];
        }
        rhs(static_cast<Eigen::Index>(r)) = samples[r].y;
    }
    if (ridge > 0.0) {
        const double w = std::sqrt(ridge);
        for (std::size_t c = 0; c < nb; ++c) {
            a(static_cast<Eigen::Index>(samples.size() + c), static_cast<Eigen::Index>(c)) = w;
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-12);
    if (qr.rank() < static_cast<Eigen::Index>(nb)) {
        throw SingularityError(fmt::format(
            "spline fit is rank deficient (rank {} of {}); some basis functions have no samples in their support, "
            "use ridge > 0",
            qr.rank(), nb));
    }
    const Eigen::VectorXd c = qr.solve(rhs);
    return SplineEdge(grid, std::vector<double>(c.data(), c.data() + c.size()));
}

}  // namespace pkan
