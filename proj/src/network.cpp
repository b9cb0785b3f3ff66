#include "pkan/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "pkan/errors.hpp"

namespace pkan {

void Architecture::validate() const {
    if (widths.size() < 2) throw ConfigError("architecture needs at least an input and an output layer");
    for (std::size_t w : widths) {
        if (w < 1) throw ConfigError(fmt::format("architecture {} has an empty layer", to_string()));
    }
}

std::size_t Architecture::edge_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1];
    return n;
}

std::string Architecture::to_string() const { return fmt::format("[{}]", fmt::join(widths, ",")); }

void EdgeConfig::validate() const {
    (void)grid();
    if (!(lo < hi)) throw ConfigError("edge domain is empty");
    require_transform_size(transform_size);
}

std::string EdgeId::label() const { return fmt::format("edge({},{},{})", layer, source, target); }

std::size_t Edge::parameter_count() const {
    return std::visit(
        [](const auto& s) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, TrainableSpline>) {
                return s.spline.coefficients.size();
            } else {
                return s.fixed.coefficients.size();
            }
        },
        state);
}

double Edge::eval(double u) const {
    if (const auto* sp = std::get_if<TrainableSpline>(&state)) return sp->spline.eval(u, id.label());
    return eval_fixed(std::get<FixedEdge>(state).fixed, u);
}

std::span<double> Edge::parameters() {
    if (auto* sp = std::get_if<TrainableSpline>(&state)) return sp->spline.coefficients;
    return std::get<FixedEdge>(state).fixed.coefficients;
}

std::span<const double> Edge::parameters() const {
    if (const auto* sp = std::get_if<TrainableSpline>(&state)) return sp->spline.coefficients;
    return std::get<FixedEdge>(state).fixed.coefficients;
}

Network::Network(Architecture arch, EdgeConfig config) : arch_(std::move(arch)), config_(config) {
    arch_.validate();
    config_.validate();
    const KnotGrid grid = config_.grid();
    for (std::size_t l = 0; l < arch_.layer_count(); ++l) {
        for (std::size_t i = 0; i < arch_.widths[l]; ++i) {
            for (std::size_t j = 0; j < arch_.widths[l + 1]; ++j) {
                edges_.push_back(Edge{EdgeId{l, i, j},
                                      TrainableSpline{SplineEdge(grid, std::vector<double>(grid.basis_count(), 0.0))}});
            }
        }
        biases_.emplace_back(arch_.widths[l + 1], 0.0);
        normalizers_.emplace_back(arch_.widths[l], AffineMap{});
    }
    refresh_layout();
}

Network::Network(Architecture arch, EdgeConfig config, std::uint64_t seed) : Network(std::move(arch), config) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> init(-0.1, 0.1);
    for (auto& e : edges_) {
        for (double& c : e.parameters()) c = init(rng);
    }
}

Network Network::make_empty(Architecture arch, EdgeConfig config) { return Network(std::move(arch), config); }

bool Network::operator==(const Network& other) const {
    if (!(arch_ == other.arch_ && config_ == other.config_ && biases_ == other.biases_ &&
          normalizers_ == other.normalizers_ && edges_.size() == other.edges_.size())) {
        return false;
    }
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        if (!(edges_[e].id == other.edges_[e].id && edges_[e].state == other.edges_[e].state)) return false;
    }
    return true;
}

std::size_t Network::edge_index(const EdgeId& id) const {
    if (id.layer >= arch_.layer_count() || id.source >= arch_.widths[id.layer] ||
        id.target >= arch_.widths[id.layer + 1]) {
        throw ConfigError(fmt::format("{} is outside architecture {}", id.label(), arch_.to_string()));
    }
    std::size_t base = 0;
    for (std::size_t l = 0; l < id.layer; ++l) base += arch_.widths[l] * arch_.widths[l + 1];
    return base + id.source * arch_.widths[id.layer + 1] + id.target;
}

Edge& Network::edge(const EdgeId& id) { return edges_[edge_index(id)]; }
const Edge& Network::edge(const EdgeId& id) const { return edges_[edge_index(id)]; }

void Network::refresh_layout() {
    edge_offsets_.resize(edges_.size());
    std::size_t off = 0;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        edge_offsets_[e] = off;
        off += edges_[e].parameter_count();
    }
    bias_start_ = off;
    for (const auto& b : biases_) off += b.size();
    layout_total_ = off;
    ++layout_version_;
    record_.reset();
}

std::size_t Network::bias_offset(std::size_t layer, std::size_t neuron) const {
    std::size_t off = bias_start_;
    for (std::size_t l = 0; l < layer; ++l) off += biases_[l].size();
    return off + neuron;
}

ParameterCount Network::parameter_counts() const {
    ParameterCount pc;
    for (const auto& e : edges_) {
        pc.per_edge.push_back(e.parameter_count());
        pc.total += pc.per_edge.back();
    }
    for (const auto& b : biases_) pc.biases += b.size();
    pc.total += pc.biases;
    return pc;
}

std::vector<double> Network::parameters() const {
    std::vector<double> theta;
    theta.reserve(layout_total_);
    for (const auto& e : edges_) {
        const auto p = e.parameters();
        theta.insert(theta.end(), p.begin(), p.end());
    }
    for (const auto& b : biases_) theta.insert(theta.end(), b.begin(), b.end());
    return theta;
}

void Network::set_parameters(std::span<const double> theta) {
    if (theta.size() != layout_total_) {
        throw ConfigError(fmt::format("expected {} parameters, got {}", layout_total_, theta.size()));
    }
    std::size_t off = 0;
    for (auto& e : edges_) {
        for (double& p : e.parameters()) p = theta[off++];
    }
    for (auto& b : biases_) {
        for (double& v : b) v = theta[off++];
    }
    record_.reset();
}

void Network::calibrate(std::size_t layer, std::size_t neuron, double lo, double hi, double margin) {
    if (!(std::isfinite(lo) && std::isfinite(hi))) {
        throw NumericError(fmt::format("non-finite calibration range for layer {} neuron {}", layer, neuron));
    }
    double width = hi - lo;
    if (width < 1e-9) {
        const double mid = 0.5 * (lo + hi);
        lo = mid - 0.5e-9;
        hi = mid + 0.5e-9;
        width = 1e-9;
    }
    lo -= margin * width;
    hi += margin * width;
    AffineMap& m = normalizers_.at(layer).at(neuron);
    m.scale = (config_.hi - config_.lo) / (hi - lo);
    m.offset = config_.lo - m.scale * lo;
    record_.reset();
}

double Network::normalize(std::size_t layer, std::size_t neuron, double raw, bool& clamped) const {
    if (!std::isfinite(raw)) {
        throw NumericError(fmt::format("non-finite activation {} at layer {} neuron {}", raw, layer, neuron));
    }
    const double u = normalizers_[layer][neuron].apply(raw);
    clamped = u < config_.lo || u > config_.hi;
    return std::clamp(u, config_.lo, config_.hi);
}

std::vector<std::vector<double>> Network::activations(std::span<const double> x) const {
    if (x.size() != arch_.inputs()) {
        throw ConfigError(fmt::format("network expects {} inputs, got {}", arch_.inputs(), x.size()));
    }
    std::vector<std::vector<double>> acts;
    acts.emplace_back(x.begin(), x.end());
    std::size_t e = 0;
    for (std::size_t l = 0; l < arch_.layer_count(); ++l) {
        std::vector<double> next = biases_[l];
        const auto& in = acts.back();
        for (std::size_t i = 0; i < in.size(); ++i) {
            bool clamped = false;
            const double u = normalize(l, i, in[i], clamped);
            for (std::size_t j = 0; j < next.size(); ++j) next[j] += edges_[e++].eval(u);
        }
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (!std::isfinite(next[j])) {
                throw NumericError(fmt::format("non-finite output at layer {} neuron {}", l + 1, j));
            }
        }
        acts.push_back(std::move(next));
    }
    return acts;
}

std::vector<double> Network::evaluate(std::span<const double> x) const { return activations(x).back(); }

std::vector<double> Network::forward(std::span<const double> x) {
    if (x.size() != arch_.inputs()) {
        throw ConfigError(fmt::format("network expects {} inputs, got {}", arch_.inputs(), x.size()));
    }
    // Buffers are reused across calls; a failed pass leaves no record behind.
    Record rec = record_ ? std::move(*record_) : Record{};
    record_.reset();
    const std::size_t layers = arch_.layer_count();
    rec.input.assign(x.begin(), x.end());
    rec.edge_slope.resize(edges_.size());
    rec.spline_basis.resize(edges_.size());
    rec.fixed_grad.resize(edges_.size());
    rec.raw.resize(layers + 1);
    rec.normalized.resize(layers);
    rec.clamped.resize(layers);
    rec.raw[0].assign(x.begin(), x.end());
    std::size_t e = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::vector<double>& cur = rec.raw[l];
        std::vector<double>& next = rec.raw[l + 1];
        next = biases_[l];
        std::vector<double>& norm = rec.normalized[l];
        std::vector<char>& clamp_flags = rec.clamped[l];
        norm.resize(cur.size());
        clamp_flags.resize(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) {
            bool clamped = false;
            norm[i] = normalize(l, i, cur[i], clamped);
            clamp_flags[i] = clamped ? 1 : 0;
            for (std::size_t j = 0; j < next.size(); ++j, ++e) {
                const Edge& edge = edges_[e];
                if (const auto* sp = std::get_if<TrainableSpline>(&edge.state)) {
                    const LocalBasis lb = local_basis(sp->spline.grid, norm[i], "network edge");
                    double v = 0.0;
                    double d = 0.0;
                    for (std::size_t r = 0; r < lb.count; ++r) {
                        v += sp->spline.coefficients[lb.first + r] * lb.values[r];
                        d += sp->spline.coefficients[lb.first + r] * lb.derivatives[r];
                    }
                    next[j] += v;
                    rec.edge_slope[e] = d;
                    rec.spline_basis[e] = lb;
                } else {
                    const FixedParametric& fp = std::get<FixedEdge>(edge.state).fixed;
                    rec.fixed_grad[e].resize(fp.indices.size());
                    const auto [v, d] = eval_fixed_into(fp, norm[i], rec.fixed_grad[e]);
                    next[j] += v;
                    rec.edge_slope[e] = d;
                }
            }
        }
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (!std::isfinite(next[j])) {
                throw NumericError(fmt::format("non-finite output at layer {} neuron {}", l + 1, j));
            }
        }
    }
    std::vector<double> out = rec.raw.back();
    record_ = std::move(rec);
    return out;
}

void Network::backward(std::span<const double> x, std::span<const double> upstream, std::span<double> grad) {
    if (!record_ || !std::equal(x.begin(), x.end(), record_->input.begin(), record_->input.end())) {
        throw ProtocolError("backward called without a matching forward pass");
    }
    if (upstream.size() != arch_.outputs()) {
        throw ConfigError(fmt::format("upstream gradient needs {} entries, got {}", arch_.outputs(), upstream.size()));
    }
    if (grad.size() != layout_total_) {
        throw ConfigError(fmt::format("gradient buffer needs {} entries, got {}", layout_total_, grad.size()));
    }
    const Record& rec = *record_;
    std::vector<double> adj(upstream.begin(), upstream.end());
    std::vector<double> adj_in;
    std::size_t layer_start = edges_.size();

    for (std::size_t l = arch_.layer_count(); l-- > 0;) {
        const std::size_t n_in = arch_.widths[l];
        const std::size_t n_out = arch_.widths[l + 1];
        layer_start -= n_in * n_out;
        for (std::size_t j = 0; j < n_out; ++j) grad[bias_offset(l, j)] += adj[j];
        adj_in.assign(n_in, 0.0);
        for (std::size_t i = 0; i < n_in; ++i) {
            double du = 0.0;
            for (std::size_t j = 0; j < n_out; ++j) {
                const std::size_t e = layer_start + i * n_out + j;
                const double g = adj[j];
                if (g == 0.0) continue;
                const std::size_t off = edge_offsets_[e];
                if (std::holds_alternative<TrainableSpline>(edges_[e].state)) {
                    const LocalBasis& lb = rec.spline_basis[e];
                    for (std::size_t r = 0; r < lb.count; ++r) grad[off + lb.first + r] += g * lb.values[r];
                } else {
                    const auto& fg = rec.fixed_grad[e];
                    for (std::size_t t = 0; t < fg.size(); ++t) grad[off + t] += g * fg[t];
                }
                du += g * rec.edge_slope[e];
            }
            if (!rec.clamped[l][i]) adj_in[i] = du * normalizers_[l][i].scale;
        }
        std::swap(adj, adj_in);
    }
}

void Network::fix_edge(const EdgeId& id, FixedParametric fixed, double r2) {
    Edge& e = edge(id);
    auto* sp = std::get_if<TrainableSpline>(&e.state);
    if (sp == nullptr) throw ConfigError(fmt::format("{} is already fixed", id.label()));
    if (fixed.space.lo() != config_.lo || fixed.space.hi() != config_.hi) {
        throw ConfigError(fmt::format("{}: fixed series domain does not match the edge domain", id.label()));
    }
    SplineEdge snapshot = sp->spline;
    e.state = FixedEdge{std::move(fixed), std::move(snapshot), r2};
    refresh_layout();
}

void Network::revert_edge(const EdgeId& id) {
    Edge& e = edge(id);
    auto* fe = std::get_if<FixedEdge>(&e.state);
    if (fe == nullptr) throw ConfigError(fmt::format("{} is not fixed", id.label()));
    SplineEdge restored = fe->snapshot;
    e.state = TrainableSpline{std::move(restored)};
    refresh_layout();
}

std::size_t Network::fixed_edge_count() const {
    return static_cast<std::size_t>(std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.is_fixed(); }));
}

Eigen::MatrixXd jacobian(Network& net, std::span<const std::vector<double>> inputs) {
    if (inputs.empty()) throw ConfigError("jacobian needs at least one input");
    const std::size_t outs = net.architecture().outputs();
    const std::size_t params = net.parameter_count();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(inputs.size() * outs),
                                              static_cast<Eigen::Index>(params));
    std::vector<double> grad(params);
    std::vector<double> upstream(outs);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        net.forward(inputs[s]);
        for (std::size_t o = 0; o < outs; ++o) {
            std::fill(grad.begin(), grad.end(), 0.0);
            std::fill(upstream.begin(), upstream.end(), 0.0);
            upstream[o] = 1.0;
            net.backward(inputs[s], upstream, grad);
            const auto row = static_cast<Eigen::Index>(s * outs + o);
            for (std::size_t p = 0; p < params; ++p) j(row, static_cast<Eigen::Index>(p)) = grad[p];
        }
    }
    return j;
}

}  // namespace pkan
