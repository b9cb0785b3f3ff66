#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pkan/funcspace.hpp"
#include "pkan/spline.hpp"

namespace pkan {

// Neurons per layer, input first. At least two entries, each >= 1.
struct Architecture {
    std::vector<std::size_t> widths;

    void validate() const;
    std::size_t layer_count() const { return widths.size() - 1; }
    std::size_t inputs() const { return widths.front(); }
    std::size_t outputs() const { return widths.back(); }
    std::size_t edge_count() const;
    std::string to_string() const;  // "[2,4,1]"
    bool operator==(const Architecture&) const = default;
};

// Shared shape of every edge: spline grid plus the transform grid used for
// projections and regularization.
struct EdgeConfig {
    int degree = 3;
    int intervals = 20;
    double lo = -1.0;
    double hi = 1.0;
    std::size_t transform_size = kDefaultTransformSize;

    void validate() const;
    KnotGrid grid() const { return KnotGrid(degree, intervals, lo, hi); }
    std::size_t spline_parameters() const { return static_cast<std::size_t>(intervals + degree); }
    bool operator==(const EdgeConfig&) const = default;
};

struct EdgeId {
    std::size_t layer = 0;
    std::size_t source = 0;
    std::size_t target = 0;

    std::string label() const;  // "edge(l,i,j)"
    auto operator<=>(const EdgeId&) const = default;
};

struct TrainableSpline {
    SplineEdge spline;
    bool operator==(const TrainableSpline&) const = default;
};

// A frozen edge keeps the spline it replaced so it can be reverted exactly.
struct FixedEdge {
    FixedParametric fixed;
    SplineEdge snapshot;
    double fit_r2 = 0.0;
    bool operator==(const FixedEdge&) const = default;
};

using EdgeState = std::variant<TrainableSpline, FixedEdge>;

struct Edge {
    EdgeId id;
    EdgeState state;

    bool is_fixed() const { return std::holds_alternative<FixedEdge>(state); }
    std::size_t parameter_count() const;
    double eval(double u) const;  // u is already in the edge domain
    std::span<double> parameters();
    std::span<const double> parameters() const;
};

// raw activation -> edge domain
struct AffineMap {
    double scale = 1.0;
    double offset = 0.0;
    double apply(double y) const { return scale * y + offset; }
    bool operator==(const AffineMap&) const = default;
};

struct ParameterCount {
    std::size_t total = 0;
    std::vector<std::size_t> per_edge;  // Network::edges() order
    std::size_t biases = 0;
};

// KAN of spline/fixed edges: y_j = sum_i f_ij(norm_i(x_i)) + b_j per layer.
//
// Parameters are laid out edge by edge in edges() order (layer, source,
// target), followed by the biases of layer 1..L. A network is single-writer:
// forward() records activations that backward() consumes.
class Network {
public:
    Network(Architecture arch, EdgeConfig config, std::uint64_t seed);

    const Architecture& architecture() const { return arch_; }
    const EdgeConfig& edge_config() const { return config_; }

    std::span<Edge> edges() { return edges_; }
    std::span<const Edge> edges() const { return edges_; }
    Edge& edge(const EdgeId& id);
    const Edge& edge(const EdgeId& id) const;
    std::size_t edge_index(const EdgeId& id) const;

    std::vector<std::vector<double>>& biases() { return biases_; }
    const std::vector<std::vector<double>>& biases() const { return biases_; }

    // normalizers()[l][i] maps neuron i of layer l into the domain of its outgoing edges.
    std::vector<std::vector<AffineMap>>& normalizers() { return normalizers_; }
    const std::vector<std::vector<AffineMap>>& normalizers() const { return normalizers_; }
    // Maps [lo, hi] (widened by margin * (hi - lo) on each side) onto the edge domain.
    void calibrate(std::size_t layer, std::size_t neuron, double lo, double hi, double margin);

    std::vector<double> evaluate(std::span<const double> x) const;
    // Raw activations of every layer, input first.
    std::vector<std::vector<double>> activations(std::span<const double> x) const;

    std::vector<double> forward(std::span<const double> x);
    // Adds d(upstream . output)/d(theta) into grad (length parameter_count()).
    void backward(std::span<const double> x, std::span<const double> upstream, std::span<double> grad);

    std::size_t parameter_count() const { return layout_total_; }
    ParameterCount parameter_counts() const;
    std::size_t edge_offset(std::size_t edge_index) const { return edge_offsets_[edge_index]; }
    std::size_t bias_offset(std::size_t layer, std::size_t neuron) const;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> theta);

    // Replace a trainable spline with a fixed series; stores the snapshot.
    void fix_edge(const EdgeId& id, FixedParametric fixed, double r2);
    // Restore the stored spline of a fixed edge.
    void revert_edge(const EdgeId& id);
    std::size_t fixed_edge_count() const;

    // Bumped whenever the parameter layout changes (fix or revert).
    std::uint64_t layout_version() const { return layout_version_; }

    bool operator==(const Network& other) const;

    // Builds an empty shell for deserialization.
    static Network make_empty(Architecture arch, EdgeConfig config);

private:
    struct Record {
        std::vector<double> input;
        std::vector<std::vector<double>> raw;          // per layer, activations entering the layer
        std::vector<std::vector<double>> normalized;   // clamped edge-domain inputs
        std::vector<std::vector<char>> clamped;
        std::vector<double> edge_slope;                // d edge / d u per edge
        std::vector<LocalBasis> spline_basis;          // per edge (spline edges)
        std::vector<std::vector<double>> fixed_grad;   // per edge (fixed edges)
    };

    Network(Architecture arch, EdgeConfig config);
    void refresh_layout();
    double normalize(std::size_t layer, std::size_t neuron, double raw, bool& clamped) const;

    Architecture arch_;
    EdgeConfig config_;
    std::vector<Edge> edges_;
    std::vector<std::vector<double>> biases_;
    std::vector<std::vector<AffineMap>> normalizers_;
    std::vector<std::size_t> edge_offsets_;
    std::size_t bias_start_ = 0;
    std::size_t layout_total_ = 0;
    std::uint64_t layout_version_ = 0;
    std::optional<Record> record_;
};

// One row per (input, output component), one column per parameter.
Eigen::MatrixXd jacobian(Network& net, std::span<const std::vector<double>> inputs);

}  // namespace pkan
