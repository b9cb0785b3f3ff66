#include "pkan/objective.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pkan/errors.hpp"

namespace pkan {

void CostWeights::validate() const {
    for (double w : {alpha, beta, gamma}) {
        if (!std::isfinite(w) || w < 0.0) throw ConfigError("cost weights must be finite and nonnegative");
    }
    if (alpha + beta + gamma <= 0.0) throw ConfigError("at least one of alpha, beta, gamma must be positive");
    if (norm_order < 1) throw ConfigError(fmt::format("norm order must be >= 1, got {}", norm_order));
    if (!(r2_min > 0.0)) throw ConfigError(fmt::format("r2_min must be positive, got {}", r2_min));
    if (!(tau_regret > 0.0)) throw ConfigError(fmt::format("tau_regret must be positive, got {}", tau_regret));
    if (rounds < 1) throw ConfigError(fmt::format("rounds must be >= 1, got {}", rounds));
    schedule.validate();
}

std::vector<FunctionalSpace> default_spaces(const EdgeConfig& config) {
    return {FunctionalSpace(SpaceKind::Fourier, config.transform_size, config.lo, config.hi),
            FunctionalSpace(SpaceKind::Chebyshev, config.transform_size, config.lo, config.hi),
            FunctionalSpace(SpaceKind::Bessel, config.transform_size, config.lo, config.hi)};
}

namespace {

Eigen::MatrixXd sampling_matrix(const KnotGrid& grid, std::span<const double> xs) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(xs.size()),
                                              static_cast<Eigen::Index>(grid.basis_count()));
    for (std::size_t r = 0; r < xs.size(); ++r) {
        const LocalBasis lb = local_basis(grid, xs[r]);
        for (std::size_t c = 0; c < lb.count; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(lb.first + c)) = lb.values[c];
        }
    }
    return m;
}

}  // namespace

Objective::Objective(const EdgeConfig& config, std::vector<FunctionalSpace> spaces)
    : config_(config), spaces_(std::move(spaces)) {
    config_.validate();
    if (spaces_.empty()) throw ConfigError("objective needs at least one functional space");
    const KnotGrid grid = config_.grid();
    for (const auto& s : spaces_) {
        if (s.grid_size() != config_.transform_size || s.lo() != config_.lo || s.hi() != config_.hi) {
            throw ConfigError(fmt::format("{} space does not match the edge transform grid", to_string(s.kind())));
        }
        native_sampling_.push_back(sampling_matrix(grid, s.native_abscissae()));
    }
    uniform_abscissae_ = uniform_abscissae(config_.lo, config_.hi, config_.transform_size);
    uniform_sampling_ = sampling_matrix(grid, uniform_abscissae_);
}

double Objective::reconstruction_loss(Network& net, std::span<const Example> batch, std::span<double> grad) const {
    if (batch.empty()) throw ConfigError("reconstruction loss over an empty batch");
    const std::size_t outs = net.architecture().outputs();
    const double denom = static_cast<double>(batch.size() * outs);
    double sse = 0.0;
    std::vector<double> upstream(outs);
    for (const auto& ex : batch) {
        if (ex.y.size() != outs) throw ConfigError(fmt::format("target has {} entries, network has {} outputs", ex.y.size(), outs));
        const std::vector<double> pred = grad.empty() ? net.evaluate(ex.x) : net.forward(ex.x);
        for (std::size_t o = 0; o < outs; ++o) {
            const double r = pred[o] - ex.y[o];
            sse += r * r;
            upstream[o] = 2.0 * r / denom;
        }
        if (!grad.empty()) net.backward(ex.x, upstream, grad);
    }
    return sse / denom;
}

std::vector<double> Objective::edge_entropies(const SplineEdge& spline) const {
    const Eigen::Map<const Eigen::VectorXd> c(spline.coefficients.data(),
                                              static_cast<Eigen::Index>(spline.coefficients.size()));
    std::vector<double> out;
    for (std::size_t s = 0; s < spaces_.size(); ++s) {
        const Eigen::VectorXd v = native_sampling_[s] * c;
        out.push_back(spaces_[s].entropy_with_gradient(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))).entropy);
    }
    return out;
}

double Objective::entropy_term(const Network& net, double lambda, std::span<double> grad,
                               std::vector<EdgeEntropy>* report) const {
    std::size_t count = 0;
    double sum = 0.0;
    struct Pending {
        std::size_t offset;
        Eigen::VectorXd d_coeffs;
    };
    std::vector<Pending> pending;
    const auto edges = net.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto* sp = std::get_if<TrainableSpline>(&edges[e].state);
        if (sp == nullptr) continue;
        ++count;
        const Eigen::Map<const Eigen::VectorXd> c(sp->spline.coefficients.data(),
                                                  static_cast<Eigen::Index>(sp->spline.coefficients.size()));
        EdgeEntropy info;
        info.id = edges[e].id;
        std::vector<std::vector<double>> d_values;
        for (std::size_t s = 0; s < spaces_.size(); ++s) {
            const Eigen::VectorXd v = native_sampling_[s] * c;
            auto eg = spaces_[s].entropy_with_gradient(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
            info.per_space.push_back(eg.entropy);
            info.degenerate = info.degenerate || eg.degenerate;
            d_values.push_back(std::move(eg.d_values));
        }
        const auto winner = std::min_element(info.per_space.begin(), info.per_space.end());
        info.winner = spaces_[static_cast<std::size_t>(winner - info.per_space.begin())].kind();
        if (info.degenerate) {
            info.softmin = 0.0;
        } else {
            const SoftminGradient sg = softmin_entropy_gradient(info.per_space, lambda);
            info.softmin = sg.value;
            sum += sg.value;
            if (!grad.empty()) {
                Eigen::VectorXd dc = Eigen::VectorXd::Zero(c.size());
                for (std::size_t s = 0; s < spaces_.size(); ++s) {
                    const Eigen::Map<const Eigen::VectorXd> dv(d_values[s].data(), static_cast<Eigen::Index>(d_values[s].size()));
                    dc += sg.d_entropies[s] * (native_sampling_[s].transpose() * dv);
                }
                pending.push_back({net.edge_offset(e), std::move(dc)});
            }
        }
        if (report != nullptr) report->push_back(std::move(info));
    }
    if (count == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(count);
    for (const auto& p : pending) {
        for (Eigen::Index k = 0; k < p.d_coeffs.size(); ++k) grad[p.offset + static_cast<std::size_t>(k)] += inv * p.d_coeffs(k);
    }
    return sum * inv;
}

double Objective::regularization_term(const Network& net, int norm_order, std::span<double> grad) const {
    if (norm_order < 1) throw ConfigError("norm order must be >= 1");
    const auto edges = net.edges();
    if (edges.empty()) return 0.0;
    const double n = static_cast<double>(uniform_abscissae_.size());
    const double scale = 1.0 / (n * static_cast<double>(edges.size()));
    const double m = static_cast<double>(norm_order);
    double total = 0.0;
    auto dpow = [&](double s) {
        if (s == 0.0) return 0.0;
        const double sign = s > 0 ? 1.0 : -1.0;
        return norm_order == 1 ? sign : m * std::pow(std::abs(s), m - 1.0) * sign;
    };
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const std::size_t off = grad.empty() ? 0 : net.edge_offset(e);
        if (const auto* sp = std::get_if<TrainableSpline>(&edges[e].state)) {
            const Eigen::Map<const Eigen::VectorXd> c(sp->spline.coefficients.data(),
                                                      static_cast<Eigen::Index>(sp->spline.coefficients.size()));
            const Eigen::VectorXd v = uniform_sampling_ * c;
            Eigen::VectorXd dv(v.size());
            for (Eigen::Index j = 0; j < v.size(); ++j) {
                total += std::pow(std::abs(v(j)), m);
                dv(j) = dpow(v(j));
            }
            if (!grad.empty()) {
                const Eigen::VectorXd dc = uniform_sampling_.transpose() * dv;
                for (Eigen::Index k = 0; k < dc.size(); ++k) grad[off + static_cast<std::size_t>(k)] += scale * dc(k);
            }
        } else {
            const auto& fp = std::get<FixedEdge>(edges[e].state).fixed;
            std::vector<double> basis(fp.indices.size());
            for (double x : uniform_abscissae_) {
                const double value = eval_fixed_into(fp, x, basis).first;
                total += std::pow(std::abs(value), m);
                if (!grad.empty()) {
                    const double d = dpow(value);
                    for (std::size_t t = 0; t < basis.size(); ++t) grad[off + t] += scale * d * basis[t];
                }
            }
        }
    }
    return total * scale;
}

CostBreakdown Objective::total_cost(Network& net, std::span<const Example> batch, const CostWeights& weights, int round,
                                    std::span<double> grad) const {
    weights.validate();
    CostBreakdown out;
    out.lambda = weights.schedule.at(round);
    const std::size_t np = net.parameter_count();
    if (!grad.empty() && grad.size() != np) {
        throw ConfigError(fmt::format("gradient buffer needs {} entries, got {}", np, grad.size()));
    }
    std::vector<double> g(grad.empty() ? 0 : np, 0.0);
    auto accumulate = [&](double w) {
        if (grad.empty()) return;
        for (std::size_t k = 0; k < np; ++k) grad[k] += w * g[k];
        std::fill(g.begin(), g.end(), 0.0);
    };
    out.reconstruction = reconstruction_loss(net, batch, g);
    accumulate(weights.alpha);
    out.entropy = entropy_term(net, out.lambda, g, &out.edges);
    accumulate(weights.beta);
    out.regularization = regularization_term(net, weights.norm_order, g);
    accumulate(weights.gamma);
    out.total = weights.alpha * out.reconstruction + weights.beta * out.entropy + weights.gamma * out.regularization;
    if (!std::isfinite(out.total)) throw NumericError("cost evaluated to a non-finite value");
    return out;
}

}  // namespace pkan
