#include "pkan/diagnostics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "pkan/errors.hpp"

namespace pkan {

double r2_score(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw ConfigError("r2_score: predictions and targets differ in length");
    if (targets.size() < 2) throw ConfigError("r2_score needs at least two points");
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    double tss = 0.0;
    double rss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        tss += (targets[i] - mean) * (targets[i] - mean);
        rss += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    }
    if (tss == 0.0) throw DegenerateInputError("r2_score: targets have zero variance");
    return 1.0 - rss / tss;
}

SpectralReport spectral_report(const Eigen::MatrixXd& j, int round) {
    SpectralReport rep;
    rep.round = round;
    rep.parameter_count = static_cast<std::size_t>(j.cols());
    if (j.size() == 0) {
        rep.empty = true;
        return rep;
    }
    const double n = static_cast<double>(j.size());
    const double mean = j.mean();
    rep.jac_std = std::sqrt((j.array() - mean).square().sum() / n);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(j);
    const auto& sv = svd.singularValues();
    rep.singular_values.assign(sv.data(), sv.data() + sv.size());
    std::sort(rep.singular_values.begin(), rep.singular_values.end(), std::greater<>());
    return rep;
}

SpectralReport spectral_spread(Network& net, std::span<const std::vector<double>> inputs, int round) {
    if (inputs.empty()) throw ConfigError("spectral_spread needs at least one input");
    if (net.parameter_count() == 0) {
        SpectralReport rep;
        rep.round = round;
        rep.empty = true;
        return rep;
    }
    return spectral_report(jacobian(net, inputs), round);
}

std::vector<std::vector<double>> quasi_random_inputs(std::size_t count, std::span<const std::pair<double, double>> domain,
                                                     std::uint64_t seed) {
    static constexpr std::array<unsigned, 10> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    if (domain.size() > kPrimes.size()) throw ConfigError("quasi-random inputs support at most 10 dimensions");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> shift(domain.size());
    for (double& s : shift) s = unit(rng);
    std::vector<std::vector<double>> pts(count, std::vector<double>(domain.size()));
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t d = 0; d < domain.size(); ++d) {
            double f = 1.0;
            double h = 0.0;
            for (std::size_t k = i + 1; k > 0; k /= kPrimes[d]) {
                f /= kPrimes[d];
                h += f * static_cast<double>(k % kPrimes[d]);
            }
            const double v = std::fmod(h + shift[d], 1.0);
            pts[i][d] = domain[d].first + v * (domain[d].second - domain[d].first);
        }
    }
    return pts;
}

namespace {

std::string format_coefficient(double c) {
    std::string s = fmt::format("{:.6g}", c);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string term_function(SpaceKind kind, std::size_t q, std::size_t n) {
    switch (kind) {
        case SpaceKind::Fourier: {
            if (q == 0) return {};
            if (q == n - 1) return fmt::format("cos(2*pi*{}*u)", n / 2);
            const std::size_t freq = (q + 1) / 2;
            return fmt::format("{}(2*pi*{}*u)", q % 2 == 1 ? "cos" : "sin", freq);
        }
        case SpaceKind::Chebyshev: return q == 0 ? std::string{} : fmt::format("T{}(u)", q);
        case SpaceKind::Bessel: return fmt::format("phi{}(u)", q);
    }
    return {};
}

}  // namespace

std::string variable_for(const FunctionalSpace& space) {
    const double lo = space.lo();
    const double w = space.hi() - space.lo();
    if (space.kind() == SpaceKind::Chebyshev) return fmt::format("u = 2*(x - ({:.17g}))/{:.17g} - 1", lo, w);
    return fmt::format("u = (x - ({:.17g}))/{:.17g}", lo, w);
}

std::string render_fixed(const FixedParametric& fp) {
    std::string out;
    for (std::size_t t = 0; t < fp.indices.size(); ++t) {
        const double c = fp.coefficients[t];
        const std::string fn = term_function(fp.space.kind(), fp.indices[t], fp.space.grid_size());
        std::string term = fn.empty() ? format_coefficient(std::abs(c)) : format_coefficient(std::abs(c)) + "*" + fn;
        if (out.empty()) {
            out = (c < 0 ? "-" : "") + term;
        } else {
            out += (c < 0 ? " - " : " + ") + term;
        }
    }
    return out;
}

std::vector<SymbolicEdge> render_symbolic(const Network& net) {
    std::vector<SymbolicEdge> out;
    for (const auto& e : net.edges()) {
        SymbolicEdge s;
        s.id = e.id;
        if (const auto* fe = std::get_if<FixedEdge>(&e.state)) {
            s.space = fe->fixed.space.kind();
            s.expression = render_fixed(fe->fixed);
            s.variable = variable_for(fe->fixed.space);
        } else {
            const auto& sp = std::get<TrainableSpline>(e.state).spline;
            s.expression = fmt::format("spline({}, {})", sp.grid.degree(), sp.grid.intervals());
            s.variable = "u = x";
        }
        out.push_back(std::move(s));
    }
    return out;
}

double to_normalized(const FunctionalSpace& space, double x) {
    const double t = (x - space.lo()) / (space.hi() - space.lo());
    return space.kind() == SpaceKind::Chebyshev ? 2.0 * t - 1.0 : t;
}

namespace {

// expr   := term (('+' | '-') term)*
// term   := unary (('*' | '/') unary)*
// unary  := ('+' | '-') unary | primary
// primary:= number | 'u' | 'pi' | name '(' expr ')' | '(' expr ')'
class ExpressionParser {
public:
    ExpressionParser(std::string_view text, double u, const FunctionalSpace* space)
        : text_(text), u_(u), space_(space) {}

    double parse() {
        const double v = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(std::string_view what) const {
        throw FormatError(fmt::format("cannot parse expression at offset {}: {}", pos_, what));
    }
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    double expr() {
        double v = term();
        for (;;) {
            if (accept('+')) v += term();
            else if (accept('-')) v -= term();
            else return v;
        }
    }
    double term() {
        double v = unary();
        for (;;) {
            if (accept('*')) v *= unary();
            else if (accept('/')) v /= unary();
            else return v;
        }
    }
    double unary() {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return primary();
    }
    double primary() {
        skip_ws();
        if (accept('(')) {
            const double v = expr();
            if (!accept(')')) fail("expected ')'");
            return v;
        }
        if (pos_ >= text_.size()) fail("unexpected end");
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            const double v = std::stod(std::string(text_.substr(pos_)), &used);
            pos_ += used;
            return v;
        }
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        const std::string name(text_.substr(start, pos_ - start));
        start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        const std::string digits(text_.substr(start, pos_ - start));
        if (name == "u" && digits.empty()) return u_;
        if (name == "pi" && digits.empty()) return std::numbers::pi;
        if (!accept('(')) fail(fmt::format("unknown symbol '{}{}'", name, digits));
        const double arg = expr();
        if (!accept(')')) fail("expected ')'");
        if (name == "cos" && digits.empty()) return std::cos(arg);
        if (name == "sin" && digits.empty()) return std::sin(arg);
        if (name == "T" && !digits.empty()) {
            const auto q = std::stoul(digits);
            const double a = std::clamp(arg, -1.0, 1.0);
            return std::cos(static_cast<double>(q) * std::acos(a));
        }
        if (name == "phi" && !digits.empty()) {
            if (space_ == nullptr || space_->kind() != SpaceKind::Bessel) fail("phi terms need a Bessel space");
            const std::size_t q = std::stoul(digits);
            const double x = space_->lo() + arg * (space_->hi() - space_->lo());
            double value = 0.0;
            double slope = 0.0;
            space_->eval_terms(std::span<const std::size_t>(&q, 1), x, std::span<double>(&value, 1),
                               std::span<double>(&slope, 1));
            return value;
        }
        fail(fmt::format("unknown function '{}{}'", name, digits));
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    double u_;
    const FunctionalSpace* space_;
};

}  // namespace

double evaluate_symbolic(std::string_view expression, double u, const FunctionalSpace* space) {
    return ExpressionParser(expression, u, space).parse();
}

}  // namespace pkan
