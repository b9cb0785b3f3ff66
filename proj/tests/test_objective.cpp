#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pkan/errors.hpp"
#include "pkan/objective.hpp"

using namespace pkan;

namespace {

// Greville abscissae make a cubic spline reproduce the identity.
std::vector<double> identity_coefficients(const KnotGrid& g) {
    std::vector<double> c(g.basis_count());
    const auto t = g.knots();
    const auto k = static_cast<std::size_t>(g.degree());
    for (std::size_t i = 0; i < c.size(); ++i) {
        double s = 0.0;
        for (std::size_t r = 1; r <= k; ++r) s += t[i + r];
        c[i] = s / double(k);
    }
    return c;
}

std::vector<double>& coefficients(Network& net, const EdgeId& id) {
    return std::get<TrainableSpline>(net.edge(id).state).spline.coefficients;
}

Objective make_objective(const EdgeConfig& ec) { return Objective(ec, default_spaces(ec)); }

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("weights validation") {
    CostWeights w;
    CHECK_NOTHROW(w.validate());
    w.alpha = w.beta = w.gamma = 0.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    CostWeights neg;
    neg.beta = -1.0;
    CHECK_THROWS_AS(neg.validate(), ConfigError);
    CostWeights r2;
    r2.r2_min = 0.0;
    CHECK_THROWS_AS(r2.validate(), ConfigError);
    // above one the gate simply never opens
    r2.r2_min = 1.01;
    CHECK_NOTHROW(r2.validate());
    CostWeights tau;
    tau.tau_regret = 0.0;
    CHECK_THROWS_AS(tau.validate(), ConfigError);
}

TEST_CASE("reconstruction loss") {
    const EdgeConfig ec;
    const Objective obj = make_objective(ec);
    SUBCASE("exact predictions") {
        Network net(Architecture{{2, 3, 1}}, ec, 4);
        auto batch = fixture::random_batch(net, 20, 4);
        for (auto& ex : batch) ex.y = net.evaluate(ex.x);
        CHECK(obj.reconstruction_loss(net, batch) == 0.0);
    }
    SUBCASE("zero net against constant targets") {
        Network net = Network::make_empty(Architecture{{1, 1}}, ec);
        std::vector<Example> batch;
        for (int i = 0; i < 10; ++i) batch.push_back({{-0.5 + 0.1 * i}, {2.0}});
        CHECK(obj.reconstruction_loss(net, batch) == doctest::Approx(4.0).epsilon(1e-15));
    }
    SUBCASE("random net against the direct formula") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto xs = fixture::random_inputs(30, 2, seed);
            Network net = fixture::random_network({2, 4, 2}, seed, seed % 2 == 0, xs);
            const auto batch = fixture::random_batch(net, 30, seed);
            double sum = 0.0;
            std::size_t count = 0;
            for (const auto& ex : batch) {
                const auto p = net.evaluate(ex.x);
                for (std::size_t o = 0; o < p.size(); ++o, ++count) sum += (p[o] - ex.y[o]) * (p[o] - ex.y[o]);
            }
            CHECK(std::abs(obj.reconstruction_loss(net, batch) - sum / double(count)) < 1e-12);
        }
    }
}

TEST_CASE("entropy term") {
    const EdgeConfig ec;
    const Objective obj = make_objective(ec);
    Network net = Network::make_empty(Architecture{{1, 1}}, ec);
    // least-squares spline of one sine period on the edge domain
    std::vector<Sample> s;
    for (int i = 0; i < 400; ++i) {
        const double x = -1.0 + 2.0 * i / 399.0;
        s.push_back({x, std::sin(std::numbers::pi * (x + 1.0))});
    }
    coefficients(net, EdgeId{0, 0, 0}) = fit_spline(s, ec.grid()).coefficients;
    const SplineEdge& spline = std::get<TrainableSpline>(net.edge(EdgeId{0, 0, 0}).state).spline;

    // per-space entropies straight from the projections of native samples
    std::vector<double> e;
    for (const auto& space : obj.spaces()) {
        std::vector<double> v;
        for (double x : space.native_abscissae()) v.push_back(spline.eval(x));
        e.push_back(project(v, space).entropy);
    }
    const auto reported = obj.edge_entropies(spline);
    for (std::size_t g = 0; g < e.size(); ++g) CHECK(std::abs(reported[g] - e[g]) < 1e-10);
    CHECK(std::abs(e[0] - std::log(2.0)) < 0.05);
    CHECK(e[0] < e[1]);
    CHECK(e[0] < e[2]);

    for (double lam : {0.5, 3.0, 10.0}) {
        const double term = obj.entropy_term(net, lam);
        CHECK(std::abs(term - softmin_entropy(e, lam)) < 1e-12);
        CHECK(term < (e[0] + e[1] + e[2]) / 3.0);
    }
    CHECK(std::abs(obj.entropy_term(net, 0.0) - (e[0] + e[1] + e[2]) / 3.0) < 1e-12);

    std::vector<EdgeEntropy> report;
    obj.entropy_term(net, 1.0, {}, &report);
    REQUIRE(report.size() == 1);
    CHECK(report[0].winner == SpaceKind::Fourier);

    // mean over several edges at lambda = 0
    Network wide(Architecture{{2, 2}}, ec, 7);
    double mean = 0.0;
    for (const auto& edge : wide.edges()) {
        const auto ee = obj.edge_entropies(std::get<TrainableSpline>(edge.state).spline);
        mean += (ee[0] + ee[1] + ee[2]) / 3.0 / 4.0;
    }
    CHECK(std::abs(obj.entropy_term(wide, 0.0) - mean) < 1e-12);

    // fixed edges contribute nothing
    const FunctionalSpace f(SpaceKind::Fourier, ec.transform_size, ec.lo, ec.hi);
    net.fix_edge(EdgeId{0, 0, 0}, FixedParametric(f, {0, 1, 2, 3}, {0.0, 0.0, 1.0, 0.0}), 1.0);
    CHECK(obj.entropy_term(net, 1.0) == 0.0);
}

TEST_CASE("regularization term") {
    SUBCASE("zero net") {
        const EdgeConfig ec;
        const Objective obj = make_objective(ec);
        const Network net = Network::make_empty(Architecture{{2, 3, 1}}, ec);
        CHECK(obj.regularization_term(net, 1) == 0.0);
        CHECK(obj.regularization_term(net, 2) == 0.0);
    }
    SUBCASE("constant edge") {
        const EdgeConfig ec;
        const Objective obj = make_objective(ec);
        Network net = Network::make_empty(Architecture{{1, 1}}, ec);
        for (double& c : coefficients(net, EdgeId{0, 0, 0})) c = -0.35;
        CHECK(obj.regularization_term(net, 1) == doctest::Approx(0.35).epsilon(1e-14));
    }
    SUBCASE("squared identity on the unit grid") {
        EdgeConfig ec;
        ec.lo = 0.0;
        ec.hi = 1.0;
        const Objective obj = make_objective(ec);
        Network net = Network::make_empty(Architecture{{1, 1}}, ec);
        coefficients(net, EdgeId{0, 0, 0}) = identity_coefficients(ec.grid());
        // sum_{k<64} (k/64)^2 / 64 = (63 * 64 * 127 / 6) / 64^3
        const double expected = (63.0 * 64.0 * 127.0 / 6.0) / (64.0 * 64.0 * 64.0);
        CHECK(std::abs(obj.regularization_term(net, 2) - expected) < 1e-12);
        CHECK(expected == doctest::Approx(0.3255615234375));
    }
    SUBCASE("mean over edges, fixed edges included") {
        const EdgeConfig ec;
        const Objective obj = make_objective(ec);
        Network net = Network::make_empty(Architecture{{1, 2}}, ec);
        for (double& c : coefficients(net, EdgeId{0, 0, 0})) c = 1.0;
        const FunctionalSpace f(SpaceKind::Fourier, ec.transform_size, ec.lo, ec.hi);
        net.fix_edge(EdgeId{0, 0, 1}, FixedParametric(f, {0}, {-3.0}), 1.0);
        CHECK(obj.regularization_term(net, 1) == doctest::Approx(2.0).epsilon(1e-14));
    }
}

TEST_CASE("term separation under coefficient scaling") {
    const EdgeConfig ec;
    const Objective obj = make_objective(ec);
    Network net(Architecture{{1, 1}}, ec, 17);
    const double e0 = obj.entropy_term(net, 2.0);
    const double r1 = obj.regularization_term(net, 1);
    const double r2 = obj.regularization_term(net, 2);
    for (double c : {-3.0, 0.25, 8.0}) {
        Network scaled = net;
        for (double& v : coefficients(scaled, EdgeId{0, 0, 0})) v *= c;
        CHECK(std::abs(obj.entropy_term(scaled, 2.0) - e0) < 1e-12);
        CHECK(obj.regularization_term(scaled, 1) == doctest::Approx(std::abs(c) * r1).epsilon(1e-12));
        CHECK(obj.regularization_term(scaled, 2) == doctest::Approx(c * c * r2).epsilon(1e-12));
    }
}

TEST_CASE("total cost") {
    const EdgeConfig ec;
    const Objective obj = make_objective(ec);
    const auto xs = fixture::random_inputs(16, 2, 3);
    Network net = fixture::random_network({2, 3, 1}, 3, true, xs);
    const auto batch = fixture::random_batch(net, 16, 3);

    CostWeights only_mse;
    only_mse.alpha = 1.7;
    only_mse.beta = 0.0;
    only_mse.gamma = 0.0;
    const auto a = obj.total_cost(net, batch, only_mse, 0);
    CHECK(a.total == doctest::Approx(1.7 * obj.reconstruction_loss(net, batch)).epsilon(1e-14));

    CostWeights w;
    w.alpha = 0.8;
    w.beta = 0.6;
    w.gamma = 1.3;
    w.norm_order = 2;
    for (int round = 0; round <= w.rounds; ++round) {
        const auto b = obj.total_cost(net, batch, w, round);
        CHECK(b.lambda == doctest::Approx(w.schedule.at(round)));
        CHECK(std::abs(b.total - (w.alpha * b.reconstruction + w.beta * b.entropy + w.gamma * b.regularization)) < 1e-10);
        CHECK(b.entropy == doctest::Approx(obj.entropy_term(net, b.lambda)).epsilon(1e-14));
    }

    Network fixed = Network::make_empty(Architecture{{1, 1}}, ec);
    const FunctionalSpace f(SpaceKind::Chebyshev, ec.transform_size, ec.lo, ec.hi);
    fixed.fix_edge(EdgeId{0, 0, 0}, FixedParametric(f, {1}, {1.0}), 1.0);
    CostWeights ent_only;
    ent_only.alpha = 0.0;
    ent_only.beta = 1.0;
    ent_only.gamma = 0.0;
    const std::vector<Example> one{{{0.2}, {1.0}}};
    CHECK(obj.total_cost(fixed, one, ent_only, 2).total == 0.0);
}

TEST_CASE("gradient of Q matches finite differences") {
    const EdgeConfig ec;
    const Objective obj = make_objective(ec);
    CostWeights w;
    w.alpha = 1.0;
    w.beta = 0.5;
    w.gamma = 0.3;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto& arch = fixture::gradient_architectures()[seed % 4];
        for (int m : {1, 2}) {
            w.norm_order = m;
            const auto xs = fixture::random_inputs(8, arch.front(), seed);
            Network net = fixture::random_network(arch, seed, seed % 3 == 0, xs);
            const auto batch = fixture::random_batch(net, 8, seed);
            std::vector<double> g(net.parameter_count());
            obj.total_cost(net, batch, w, 2, g);
            const double worst = fixture::worst_gradient_error(
                net, g, [&](Network& n) { return obj.total_cost(n, batch, w, 2).total; });
            CHECK(worst < 1e-4);
        }
    }
}

TEST_CASE("small steps do not increase Q") {
    const EdgeConfig ec;
    const Objective obj = make_objective(ec);
    CostWeights w;
    w.alpha = 1.0;
    w.beta = 0.5;
    w.gamma = 0.3;
    int failures = 0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        const auto& arch = fixture::gradient_architectures()[trial % 4];
        const auto xs = fixture::random_inputs(8, arch.front(), 1000 + trial);
        Network net = fixture::random_network(arch, 1000 + trial, trial % 2 == 0, xs);
        const auto batch = fixture::random_batch(net, 8, 1000 + trial);
        std::vector<double> g(net.parameter_count());
        const double q0 = obj.total_cost(net, batch, w, 1, g).total;
        double norm2 = 0.0;
        for (double v : g) norm2 += v * v;
        auto theta = net.parameters();
        const double eta = 1e-6 / std::max(1.0, std::sqrt(norm2));
        for (std::size_t p = 0; p < theta.size(); ++p) theta[p] -= eta * g[p];
        net.set_parameters(theta);
        if (obj.total_cost(net, batch, w, 1).total > q0) ++failures;
    }
    CHECK(failures <= 2);
}

}
