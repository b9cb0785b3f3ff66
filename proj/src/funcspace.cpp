#include "pkan/funcspace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <tuple>
#include <utility>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "pkan/errors.hpp"
#include "pkan/spline.hpp"

namespace pkan {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp_into(double x, double lo, double hi, std::string_view who) {
    if (x >= lo && x <= hi) return x;
    if (std::isfinite(x) && x >= lo - kDomainClampTolerance && x <= hi + kDomainClampTolerance) {
        return std::clamp(x, lo, hi);
    }
    throw DomainError(fmt::format("{}: value {} outside domain [{}, {}]", who, x, lo, hi));
}

// J0 and J1 tabulated on t in [0, kBesselTableMax] and read back by cubic
// Hermite interpolation (error ~1e-11); evaluating the series with
// std::cyl_bessel_j per term dominated training time.
constexpr double kBesselTableStep = 1.0 / 80.0;
constexpr double kBesselTableMax = 1024.0;

struct BesselTable {
    std::vector<double> j0;
    std::vector<double> j1;
};

const BesselTable& bessel_table() {
    static const BesselTable table = [] {
        BesselTable t;
        const auto count = static_cast<std::size_t>(kBesselTableMax / kBesselTableStep) + 2;
        t.j0.resize(count);
        t.j1.resize(count);
        for (std::size_t k = 0; k < count; ++k) {
            const double x = static_cast<double>(k) * kBesselTableStep;
            t.j0[k] = std::cyl_bessel_j(0.0, x);
            t.j1[k] = std::cyl_bessel_j(1.0, x);
        }
        return t;
    }();
    return table;
}

// {J0(t), J1(t)} for t >= 0.
std::pair<double, double> bessel_j01(double t) {
    if (t >= kBesselTableMax) return {std::cyl_bessel_j(0.0, t), std::cyl_bessel_j(1.0, t)};
    const BesselTable& tab = bessel_table();
    const double pos = t / kBesselTableStep;
    const auto k = static_cast<std::size_t>(pos);
    const double s = pos - static_cast<double>(k);
    const double h = kBesselTableStep;
    const double x0 = static_cast<double>(k) * h;
    const double x1 = x0 + h;
    const double a0 = tab.j0[k], a1 = tab.j0[k + 1];
    const double b0 = tab.j1[k], b1 = tab.j1[k + 1];
    // J0' = -J1, J1' = J0 - J1 / t (1/2 at t = 0)
    const double da0 = -b0, da1 = -b1;
    const double db0 = x0 == 0.0 ? 0.5 : a0 - b0 / x0;
    const double db1 = a1 - b1 / x1;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return {h00 * a0 + h10 * h * da0 + h01 * a1 + h11 * h * da1,
            h00 * b0 + h10 * h * db0 + h01 * b1 + h11 * h * db1};
}

}  // namespace

std::string_view to_string(SpaceKind kind) {
    switch (kind) {
        case SpaceKind::Fourier: return "Fourier";
        case SpaceKind::Chebyshev: return "Chebyshev";
        case SpaceKind::Bessel: return "Bessel";
    }
    return "?";
}

SpaceKind parse_space_kind(std::string_view name) {
    if (name == "Fourier" || name == "fourier") return SpaceKind::Fourier;
    if (name == "Chebyshev" || name == "chebyshev") return SpaceKind::Chebyshev;
    if (name == "Bessel" || name == "bessel") return SpaceKind::Bessel;
    throw ConfigError(fmt::format("unknown functional space '{}'", name));
}

std::vector<double> bessel_j0_zeros(std::size_t count) {
    std::vector<double> zeros;
    zeros.reserve(count);
    for (std::size_t r = 1; r <= count; ++r) {
        // McMahon's expansion, polished by Newton on J0 with J0' = -J1.
        const double beta = (static_cast<double>(r) - 0.25) * kPi;
        double z = beta + 1.0 / (8.0 * beta) - 124.0 / (3.0 * std::pow(8.0 * beta, 3));
        for (int it = 0; it < 20; ++it) {
            const double step = std::cyl_bessel_j(0.0, z) / std::cyl_bessel_j(1.0, z);
            z += step;
            if (std::abs(step) < 1e-15 * z) break;
        }
        zeros.push_back(z);
    }
    return zeros;
}

struct FunctionalSpace::Impl {
    SpaceKind kind;
    std::size_t n;
    double lo;
    double hi;
    std::vector<double> abscissae;
    Eigen::MatrixXd basis;       // n x n, rows orthonormal
    std::vector<double> scales;  // natural_scale per index
    // Bessel only
    std::vector<double> zeros;   // z_0 = 0, then zeros of J0
    Eigen::MatrixXd r_inverse;   // Q = A * r_inverse, upper triangular
};

namespace {

std::shared_ptr<const FunctionalSpace::Impl> build_space(SpaceKind kind, std::size_t n, double lo, double hi) {
    require_transform_size(n);
    if (!(lo < hi)) throw ConfigError(fmt::format("functional space domain [{}, {}] is empty", lo, hi));

    auto impl = std::make_shared<FunctionalSpace::Impl>();
    impl->kind = kind;
    impl->n = n;
    impl->lo = lo;
    impl->hi = hi;
    const auto ni = static_cast<Eigen::Index>(n);
    const double nd = static_cast<double>(n);
    impl->basis.resize(ni, ni);
    impl->scales.assign(n, std::sqrt(nd / 2.0));

    switch (kind) {
        case SpaceKind::Fourier: {
            impl->abscissae = uniform_abscissae(lo, hi, n);
            const double c0 = 1.0 / std::sqrt(nd);
            const double c1 = std::sqrt(2.0 / nd);
            for (Eigen::Index j = 0; j < ni; ++j) {
                const double u = static_cast<double>(j) / nd;
                impl->basis(0, j) = c0;
                for (std::size_t q = 1; q < n / 2; ++q) {
                    const double arg = 2.0 * kPi * static_cast<double>(q) * u;
                    impl->basis(static_cast<Eigen::Index>(2 * q - 1), j) = c1 * std::cos(arg);
                    impl->basis(static_cast<Eigen::Index>(2 * q), j) = c1 * std::sin(arg);
                }
                impl->basis(ni - 1, j) = (j % 2 == 0) ? c0 : -c0;
            }
            impl->scales.front() = std::sqrt(nd);
            impl->scales.back() = std::sqrt(nd);
            break;
        }
        case SpaceKind::Chebyshev: {
            impl->abscissae.resize(n);
            const double mid = 0.5 * (lo + hi);
            const double half = 0.5 * (hi - lo);
            const double c0 = 1.0 / std::sqrt(nd);
            const double c1 = std::sqrt(2.0 / nd);
            for (Eigen::Index j = 0; j < ni; ++j) {
                const double theta = kPi * (static_cast<double>(j) + 0.5) / nd;
                impl->abscissae[static_cast<std::size_t>(j)] = mid + half * std::cos(theta);
                for (Eigen::Index q = 0; q < ni; ++q) {
                    impl->basis(q, j) = (q == 0 ? c0 : c1) * std::cos(static_cast<double>(q) * theta);
                }
            }
            impl->scales.front() = std::sqrt(nd);
            break;
        }
        case SpaceKind::Bessel: {
            impl->abscissae = uniform_abscissae(lo, hi, n);
            impl->zeros.push_back(0.0);
            for (double z : bessel_j0_zeros(n - 1)) impl->zeros.push_back(z);
            Eigen::MatrixXd a(ni, ni);
            for (Eigen::Index j = 0; j < ni; ++j) {
                const double u = static_cast<double>(j) / nd;
                for (Eigen::Index r = 0; r < ni; ++r) {
                    a(j, r) = std::cyl_bessel_j(0.0, impl->zeros[static_cast<std::size_t>(r)] * u);
                }
            }
            // Modified Gram-Schmidt with one reorthogonalization pass.
            Eigen::MatrixXd q = a;
            Eigen::MatrixXd r = Eigen::MatrixXd::Zero(ni, ni);
            for (Eigen::Index c = 0; c < ni; ++c) {
                for (int pass = 0; pass < 2; ++pass) {
                    for (Eigen::Index p = 0; p < c; ++p) {
                        const double proj = q.col(p).dot(q.col(c));
                        q.col(c) -= proj * q.col(p);
                        r(p, c) += proj;
                    }
                }
                const double norm = q.col(c).norm();
                if (norm < 1e-10) throw NumericError("Bessel family is numerically dependent on this grid");
                q.col(c) /= norm;
                r(c, c) = norm;
            }
            impl->basis = q.transpose();
            impl->r_inverse = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(ni, ni));
            impl->scales.assign(n, std::sqrt(nd));
            break;
        }
    }
    return impl;
}

std::shared_ptr<const FunctionalSpace::Impl> cached_space(SpaceKind kind, std::size_t n, double lo, double hi) {
    using Key = std::tuple<int, std::size_t, double, double>;
    static std::mutex mutex;
    static std::map<Key, std::shared_ptr<const FunctionalSpace::Impl>> cache;
    const Key key{static_cast<int>(kind), n, lo, hi};
    std::lock_guard lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto impl = build_space(kind, n, lo, hi);
    cache.emplace(key, impl);
    return impl;
}

}  // namespace

FunctionalSpace::FunctionalSpace(SpaceKind kind, std::size_t grid_size, double lo, double hi)
    : impl_(cached_space(kind, grid_size, lo, hi)) {}

SpaceKind FunctionalSpace::kind() const { return impl_->kind; }
std::size_t FunctionalSpace::grid_size() const { return impl_->n; }
std::size_t FunctionalSpace::basis_count() const { return impl_->n; }
double FunctionalSpace::lo() const { return impl_->lo; }
double FunctionalSpace::hi() const { return impl_->hi; }
std::span<const double> FunctionalSpace::native_abscissae() const { return impl_->abscissae; }
const Eigen::MatrixXd& FunctionalSpace::basis_matrix() const { return impl_->basis; }
double FunctionalSpace::natural_scale(std::size_t q) const { return impl_->scales.at(q); }

bool FunctionalSpace::operator==(const FunctionalSpace& other) const {
    return impl_ == other.impl_ ||
           (impl_->kind == other.impl_->kind && impl_->n == other.impl_->n && impl_->lo == other.impl_->lo &&
            impl_->hi == other.impl_->hi);
}

void FunctionalSpace::eval_terms(std::span<const std::size_t> indices, double x, std::span<double> values,
                                 std::span<double> slopes) const {
    const Impl& s = *impl_;
    x = clamp_into(x, s.lo, s.hi, to_string(s.kind));
    const double width = s.hi - s.lo;
    std::size_t max_index = 0;
    for (std::size_t q : indices) max_index = std::max(max_index, q);
    if (max_index >= s.n) throw ConfigError(fmt::format("basis index {} out of range {}", max_index, s.n));

    switch (s.kind) {
        case SpaceKind::Fourier: {
            const double u = (x - s.lo) / width;
            const double du = 1.0 / width;
            // Harmonics by complex powering of exp(2 pi i u): one sincos per call.
            const std::complex<double> base = std::polar(1.0, 2.0 * kPi * u);
            auto harmonic = [&](std::size_t k) {
                std::complex<double> acc(1.0, 0.0);
                std::complex<double> b = base;
                for (; k > 0; k >>= 1) {
                    if ((k & 1U) != 0) acc *= b;
                    b *= b;
                }
                return acc;
            };
            for (std::size_t t = 0; t < indices.size(); ++t) {
                const std::size_t q = indices[t];
                if (q == 0) {
                    values[t] = 1.0;
                    slopes[t] = 0.0;
                    continue;
                }
                const std::size_t k = q == s.n - 1 ? s.n / 2 : (q + 1) / 2;
                const double w = 2.0 * kPi * static_cast<double>(k);
                const std::complex<double> h = harmonic(k);
                if (q == s.n - 1 || q % 2 == 1) {
                    values[t] = h.real();
                    slopes[t] = -w * h.imag() * du;
                } else {
                    values[t] = h.imag();
                    slopes[t] = w * h.real() * du;
                }
            }
            break;
        }
        case SpaceKind::Chebyshev: {
            const double u = std::clamp(2.0 * (x - s.lo) / width - 1.0, -1.0, 1.0);
            const double du = 2.0 / width;
            // T_q by recurrence, T_q' = q U_{q-1}.
            thread_local std::vector<double> t;
            thread_local std::vector<double> uu;
            t.resize(max_index + 1);
            uu.resize(max_index + 1);
            t[0] = 1.0;
            uu[0] = 1.0;
            if (max_index >= 1) {
                t[1] = u;
                uu[1] = 2.0 * u;
            }
            for (std::size_t q = 2; q <= max_index; ++q) {
                t[q] = 2.0 * u * t[q - 1] - t[q - 2];
                uu[q] = 2.0 * u * uu[q - 1] - uu[q - 2];
            }
            for (std::size_t k = 0; k < indices.size(); ++k) {
                const std::size_t q = indices[k];
                values[k] = t[q];
                slopes[k] = q == 0 ? 0.0 : static_cast<double>(q) * uu[q - 1] * du;
            }
            break;
        }
        case SpaceKind::Bessel: {
            const double u = (x - s.lo) / width;
            const double du = 1.0 / width;
            thread_local std::vector<double> j0;
            thread_local std::vector<double> dj0;
            j0.resize(max_index + 1);
            dj0.resize(max_index + 1);
            for (std::size_t r = 0; r <= max_index; ++r) {
                const double z = s.zeros[r];
                const auto [b0, b1] = bessel_j01(z * u);
                j0[r] = b0;
                dj0[r] = r == 0 ? 0.0 : -z * b1 * du;
            }
            const double root_n = std::sqrt(static_cast<double>(s.n));
            for (std::size_t k = 0; k < indices.size(); ++k) {
                const auto q = static_cast<Eigen::Index>(indices[k]);
                double v = 0.0;
                double d = 0.0;
                for (Eigen::Index r = 0; r <= q; ++r) {
                    v += s.r_inverse(r, q) * j0[static_cast<std::size_t>(r)];
                    d += s.r_inverse(r, q) * dj0[static_cast<std::size_t>(r)];
                }
                values[k] = root_n * v;
                slopes[k] = root_n * d;
            }
            break;
        }
    }
}

std::vector<double> FunctionalSpace::resample_from_uniform(std::span<const double> uniform_values) const {
    const Impl& s = *impl_;
    if (uniform_values.size() != s.n) {
        throw ConfigError(fmt::format("expected {} uniform samples, got {}", s.n, uniform_values.size()));
    }
    if (s.kind != SpaceKind::Chebyshev) return {uniform_values.begin(), uniform_values.end()};
    const double h = (s.hi - s.lo) / static_cast<double>(s.n);
    std::vector<double> out(s.n);
    for (std::size_t j = 0; j < s.n; ++j) {
        const double pos = (s.abscissae[j] - s.lo) / h;
        const auto base = static_cast<std::ptrdiff_t>(std::floor(pos)) - 1;
        const std::size_t i0 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(base, 0, static_cast<std::ptrdiff_t>(s.n) - 4));
        double acc = 0.0;
        for (std::size_t a = 0; a < 4; ++a) {
            double w = 1.0;
            for (std::size_t b = 0; b < 4; ++b) {
                if (a == b) continue;
                w *= (pos - static_cast<double>(i0 + b)) / (static_cast<double>(a) - static_cast<double>(b));
            }
            acc += w * uniform_values[i0 + a];
        }
        out[j] = acc;
    }
    return out;
}

namespace {

// Fourier two-sided moduli from real trigonometric coefficients.
std::vector<double> fourier_moduli(const Eigen::VectorXd& alpha) {
    const auto n = static_cast<std::size_t>(alpha.size());
    std::vector<double> m(n, 0.0);
    m[0] = std::abs(alpha(0));
    for (std::size_t q = 1; q < n / 2; ++q) {
        const double a = alpha(static_cast<Eigen::Index>(2 * q - 1));
        const double b = alpha(static_cast<Eigen::Index>(2 * q));
        const double rho = std::hypot(a, b) / std::numbers::sqrt2;
        m[q] = rho;
        m[n - q] = rho;
    }
    m[n / 2] = std::abs(alpha(static_cast<Eigen::Index>(n - 1)));
    return m;
}

}  // namespace

FunctionalSpace::EntropyGradient FunctionalSpace::entropy_with_gradient(std::span<const double> native_values) const {
    const Impl& s = *impl_;
    if (native_values.size() != s.n) {
        throw ConfigError(fmt::format("expected {} native samples, got {}", s.n, native_values.size()));
    }
    const Eigen::Map<const Eigen::VectorXd> v(native_values.data(), static_cast<Eigen::Index>(s.n));
    const Eigen::VectorXd alpha = s.basis * v;

    EntropyGradient out;
    Eigen::VectorXd d_alpha = Eigen::VectorXd::Zero(alpha.size());
    if (s.kind == SpaceKind::Fourier) {
        const std::vector<double> m = fourier_moduli(alpha);
        const EntropyValue e = coeff_entropy(m);
        out.entropy = e.value;
        out.degenerate = e.degenerate;
        const std::vector<double> dm = coeff_entropy_gradient(m);
        const std::size_t n = s.n;
        d_alpha(0) = alpha(0) > 0 ? dm[0] : (alpha(0) < 0 ? -dm[0] : 0.0);
        const double an = alpha(static_cast<Eigen::Index>(n - 1));
        d_alpha(static_cast<Eigen::Index>(n - 1)) = an > 0 ? dm[n / 2] : (an < 0 ? -dm[n / 2] : 0.0);
        for (std::size_t q = 1; q < n / 2; ++q) {
            const auto ia = static_cast<Eigen::Index>(2 * q - 1);
            const auto ib = static_cast<Eigen::Index>(2 * q);
            const double r = std::hypot(alpha(ia), alpha(ib));
            if (r == 0.0) continue;
            const double g = (dm[q] + dm[n - q]) / (std::numbers::sqrt2 * r);
            d_alpha(ia) = g * alpha(ia);
            d_alpha(ib) = g * alpha(ib);
        }
    } else {
        const std::span<const double> a(alpha.data(), static_cast<std::size_t>(alpha.size()));
        const EntropyValue e = coeff_entropy(a);
        out.entropy = e.value;
        out.degenerate = e.degenerate;
        const std::vector<double> g = coeff_entropy_gradient(a);
        d_alpha = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
    }
    const Eigen::VectorXd dv = s.basis.transpose() * d_alpha;
    out.d_values.assign(dv.data(), dv.data() + dv.size());
    return out;
}

std::vector<std::complex<double>> unitary_fft(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0 || !std::has_single_bit(n)) throw ConfigError(fmt::format("FFT size {} is not a power of two", n));
    std::vector<std::complex<double>> a(values.begin(), values.end());
    // Bit-reversal permutation, then iterative Cooley-Tukey butterflies.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto t = w * a[i + k + len / 2];
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
                w *= wl;
            }
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& c : a) c *= scale;
    return a;
}

namespace {

std::vector<std::size_t> top_indices(std::span<const double> alpha, std::size_t n_keep) {
    std::vector<std::size_t> order(alpha.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(alpha[a]) > std::abs(alpha[b]); });
    order.resize(std::min(n_keep, order.size()));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

ProjectionReport project(std::span<const double> values, const FunctionalSpace& space, std::size_t n_keep,
                         std::string_view label) {
    const std::size_t n = space.grid_size();
    if (values.size() != n) {
        throw ConfigError(fmt::format("{} projection expects {} samples, got {}", to_string(space.kind()), n,
                                      values.size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(fmt::format("{}{}non-finite sample {} at index {}", label, label.empty() ? "" : ": ",
                                           values[i], i));
        }
    }
    if (n_keep < 1) throw ConfigError("n_keep must be at least 1");

    ProjectionReport rep;
    rep.space = space.kind();
    rep.n_keep = n_keep;
    const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd alpha = space.basis_matrix() * v;
    rep.coefficients.assign(alpha.data(), alpha.data() + alpha.size());

    if (space.kind() == SpaceKind::Fourier) {
        rep.spectrum = unitary_fft(values);
        rep.magnitudes.reserve(n);
        for (const auto& c : rep.spectrum) rep.magnitudes.push_back(std::abs(c));
    } else {
        rep.magnitudes.reserve(n);
        for (double a : rep.coefficients) rep.magnitudes.push_back(std::abs(a));
    }
    const EntropyValue e = coeff_entropy(rep.magnitudes);
    rep.entropy = e.value;
    rep.degenerate = e.degenerate;
    const double total = std::accumulate(rep.magnitudes.begin(), rep.magnitudes.end(), 0.0);
    rep.normalized.assign(n, 0.0);
    if (total > 0.0) {
        for (std::size_t q = 0; q < n; ++q) rep.normalized[q] = rep.magnitudes[q] / total;
    }

    std::vector<double> kept(n, 0.0);
    for (std::size_t q : top_indices(rep.coefficients, n_keep)) kept[q] = rep.coefficients[q];
    rep.truncation_r2 = fit_r2(values, reconstruct(kept, space));
    return rep;
}

std::vector<double> reconstruct(std::span<const double> coefficients, const FunctionalSpace& space) {
    if (coefficients.size() != space.basis_count()) {
        throw ConfigError(fmt::format("expected {} coefficients, got {}", space.basis_count(), coefficients.size()));
    }
    const Eigen::Map<const Eigen::VectorXd> a(coefficients.data(), static_cast<Eigen::Index>(coefficients.size()));
    const Eigen::VectorXd v = space.basis_matrix().transpose() * a;
    return {v.data(), v.data() + v.size()};
}

EntropyValue coeff_entropy(std::span<const double> coefficients) {
    if (coefficients.empty()) throw ConfigError("entropy of an empty coefficient vector");
    double total = 0.0;
    for (double c : coefficients) {
        if (!std::isfinite(c)) throw NumericError(fmt::format("non-finite coefficient {}", c));
        total += std::abs(c);
    }
    if (total == 0.0) return {0.0, true};
    double h = 0.0;
    for (double c : coefficients) {
        const double p = std::abs(c) / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return {std::max(h, 0.0), false};
}

std::vector<double> coeff_entropy_gradient(std::span<const double> coefficients) {
    std::vector<double> g(coefficients.size(), 0.0);
    double total = 0.0;
    for (double c : coefficients) total += std::abs(c);
    if (total == 0.0) return g;
    const double h = coeff_entropy(coefficients).value;
    for (std::size_t q = 0; q < coefficients.size(); ++q) {
        const double c = coefficients[q];
        if (c == 0.0) continue;
        const double p = std::abs(c) / total;
        g[q] = (c > 0 ? 1.0 : -1.0) * (-std::log(p) - h) / total;
    }
    return g;
}

SoftminGradient softmin_entropy_gradient(std::span<const double> entropies, double lambda) {
    if (entropies.empty()) throw ConfigError("softmin over an empty entropy vector");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError(fmt::format("lambda must be >= 0, got {}", lambda));
    const double lowest = *std::min_element(entropies.begin(), entropies.end());
    std::vector<double> w(entropies.size());
    double wsum = 0.0;
    for (std::size_t g = 0; g < entropies.size(); ++g) {
        if (!std::isfinite(entropies[g])) throw NumericError("non-finite entropy in softmin");
        w[g] = std::exp(-lambda * (entropies[g] - lowest));
        wsum += w[g];
    }
    SoftminGradient out;
    double second = 0.0;
    for (std::size_t g = 0; g < entropies.size(); ++g) {
        w[g] /= wsum;
        out.value += w[g] * entropies[g];
        second += w[g] * entropies[g] * entropies[g];
    }
    out.d_entropies.resize(entropies.size());
    for (std::size_t g = 0; g < entropies.size(); ++g) {
        out.d_entropies[g] = w[g] * (1.0 - lambda * (entropies[g] - out.value));
    }
    out.d_lambda = -(second - out.value * out.value);
    return out;
}

double softmin_entropy(std::span<const double> entropies, double lambda) {
    return softmin_entropy_gradient(entropies, lambda).value;
}

void LambdaSchedule::validate() const {
    if (!std::isfinite(lambda_min) || !std::isfinite(lambda_max) || lambda_min < 0.0) {
        throw ConfigError("lambda schedule bounds must be finite and nonnegative");
    }
    if (lambda_min > lambda_max) {
        throw ConfigError(fmt::format("lambda_min {} exceeds lambda_max {}", lambda_min, lambda_max));
    }
    if (rounds < 1) throw ConfigError(fmt::format("lambda schedule needs rounds >= 1, got {}", rounds));
}

double LambdaSchedule::at(int round) const {
    validate();
    if (round < 0) throw ConfigError(fmt::format("round must be >= 0, got {}", round));
    const double t = std::min(1.0, static_cast<double>(round) / static_cast<double>(rounds));
    return lambda_min + (lambda_max - lambda_min) * t;
}

FixedParametric::FixedParametric(FunctionalSpace s, std::vector<std::size_t> idx, std::vector<double> coeffs)
    : space(std::move(s)), indices(std::move(idx)), coefficients(std::move(coeffs)) {
    if (indices.empty()) throw ConfigError("a fixed edge needs at least one retained term");
    if (indices.size() != coefficients.size()) throw ConfigError("retained indices and coefficients differ in length");
    for (std::size_t t = 0; t < indices.size(); ++t) {
        if (indices[t] >= space.basis_count() || (t > 0 && indices[t] <= indices[t - 1])) {
            throw ConfigError("retained indices must be strictly increasing and within the basis");
        }
    }
}

FixedEvaluation eval_fixed_with_gradient(const FixedParametric& fp, double x) {
    FixedEvaluation out;
    out.d_coefficients.resize(fp.indices.size());
    const auto [value, slope] = eval_fixed_into(fp, x, out.d_coefficients);
    out.value = value;
    out.slope = slope;
    return out;
}

std::pair<double, double> eval_fixed_into(const FixedParametric& fp, double x, std::span<double> d_coefficients) {
    if (d_coefficients.size() != fp.indices.size()) throw ConfigError("coefficient gradient buffer has the wrong size");
    thread_local std::vector<double> slopes;
    slopes.resize(fp.indices.size());
    fp.space.eval_terms(fp.indices, x, d_coefficients, slopes);
    double value = 0.0;
    double slope = 0.0;
    for (std::size_t t = 0; t < fp.indices.size(); ++t) {
        value += fp.coefficients[t] * d_coefficients[t];
        slope += fp.coefficients[t] * slopes[t];
    }
    return {value, slope};
}

double eval_fixed(const FixedParametric& fp, double x) { return eval_fixed_with_gradient(fp, x).value; }

FixedParametric truncate(std::span<const double> native_values, const FunctionalSpace& space, std::size_t n_keep) {
    if (n_keep < 1) throw ConfigError("n_keep must be at least 1");
    if (native_values.size() != space.grid_size()) {
        throw ConfigError(fmt::format("expected {} native samples, got {}", space.grid_size(), native_values.size()));
    }
    const Eigen::Map<const Eigen::VectorXd> v(native_values.data(), static_cast<Eigen::Index>(native_values.size()));
    const Eigen::VectorXd alpha = space.basis_matrix() * v;
    const std::span<const double> a(alpha.data(), static_cast<std::size_t>(alpha.size()));
    std::vector<std::size_t> idx = top_indices(a, n_keep);
    std::vector<double> coeffs;
    coeffs.reserve(idx.size());
    for (std::size_t q : idx) coeffs.push_back(a[q] / space.natural_scale(q));
    return FixedParametric(space, std::move(idx), std::move(coeffs));
}

double fit_r2(std::span<const double> target, std::span<const double> approx) {
    if (target.size() != approx.size() || target.empty()) throw ConfigError("R^2 inputs differ in length");
    const double n = static_cast<double>(target.size());
    const double mean = std::accumulate(target.begin(), target.end(), 0.0) / n;
    double tss = 0.0;
    double rss = 0.0;
    double power = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        tss += (target[i] - mean) * (target[i] - mean);
        rss += (target[i] - approx[i]) * (target[i] - approx[i]);
        power += target[i] * target[i];
    }
    const double floor = 1e-24 * std::max(power, n);
    if (tss <= floor) return rss <= 1e-20 * std::max(power, n) ? 1.0 : 0.0;
    return 1.0 - rss / tss;
}

namespace {

void check_compatible(std::span<const FunctionalSpace> spaces) {
    if (spaces.empty()) throw ConfigError("best fit needs at least one functional space");
    for (const auto& s : spaces) {
        if (s.grid_size() != spaces[0].grid_size() || s.lo() != spaces[0].lo() || s.hi() != spaces[0].hi()) {
            throw ConfigError("functional spaces must share grid size and domain");
        }
    }
}

template <typename NativeFn>
BestFit best_fit_impl(std::span<const double> uniform_values, std::span<const FunctionalSpace> spaces, std::size_t n_keep,
                      NativeFn&& native_of) {
    const auto xs = uniform_abscissae(spaces[0].lo(), spaces[0].hi(), spaces[0].grid_size());
    std::optional<BestFit> best;
    std::vector<double> per_space;
    for (const auto& space : spaces) {
        const std::vector<double> native = native_of(space);
        FixedParametric fp = truncate(native, space, n_keep);
        std::vector<double> recon(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) recon[i] = eval_fixed(fp, xs[i]);
        const double r2 = fit_r2(uniform_values, recon);
        per_space.push_back(r2);
        // Strict improvement keeps the earlier space on ties.
        if (!best || r2 > best->r2 + 1e-12) best = BestFit{std::move(fp), r2, {}};
    }
    best->r2_per_space = std::move(per_space);
    return std::move(*best);
}

}  // namespace

BestFit best_fit(std::span<const double> uniform_values, std::span<const FunctionalSpace> spaces, std::size_t n_keep) {
    check_compatible(spaces);
    if (uniform_values.size() != spaces[0].grid_size()) {
        throw ConfigError(fmt::format("expected {} uniform samples, got {}", spaces[0].grid_size(), uniform_values.size()));
    }
    return best_fit_impl(uniform_values, spaces, n_keep,
                         [&](const FunctionalSpace& s) { return s.resample_from_uniform(uniform_values); });
}

BestFit best_fit(const std::function<double(double)>& f, std::span<const FunctionalSpace> spaces, std::size_t n_keep) {
    check_compatible(spaces);
    std::vector<double> uniform;
    for (double x : uniform_abscissae(spaces[0].lo(), spaces[0].hi(), spaces[0].grid_size())) uniform.push_back(f(x));
    return best_fit_impl(uniform, spaces, n_keep, [&](const FunctionalSpace& s) {
        std::vector<double> native;
        native.reserve(s.grid_size());
        for (double x : s.native_abscissae()) native.push_back(f(x));
        return native;
    });
}

BestFit fit_in_space(const std::function<double(double)>& f, const FunctionalSpace& space, std::size_t n_keep) {
    return best_fit(f, std::span<const FunctionalSpace>(&space, 1), n_keep);
}

}  // namespace pkan
