// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "pkan/benchgen.hpp"
#include "pkan/diagnostics.hpp"
#include "pkan/experiment.hpp"
#include "pkan/serialize.hpp"
#include "pkan/trainer.hpp"

using namespace pkan;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

// 1. Q gradient against central differences on 20 random networks. Q is
// piecewise smooth (|s| in the l1 term, |c| in the entropies), so a stencil
// that straddles a kink is retried with smaller steps before it counts.
Outcome gradient_oracle() {
    const EdgeConfig ec;
    const Objective obj(ec, default_spaces(ec));
    CostWeights w;
    w.alpha = 1.0;
    w.beta = 0.7;
    w.gamma = 0.4;
    double worst = 0.0;
    std::size_t params = 0, refined = 0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const auto& arch = fixture::gradient_architectures()[k % 4];
        const std::uint64_t seed = 500 + k;
        const auto xs = fixture::random_inputs(8, arch.front(), seed);
        Network net = fixture::random_network(arch, seed, k % 2 == 1, xs);
        const auto batch = fixture::random_batch(net, 8, seed);
        const int round = static_cast<int>(k % 3);
        std::vector<double> g(net.parameter_count());
        obj.total_cost(net, batch, w, round, g);
        const std::vector<double> theta = net.parameters();
        auto t = theta;
        for (std::size_t p = 0; p < theta.size(); ++p) {
            double err = 0.0;
            for (double h : {1e-5, 1e-6, 1e-7}) {
                t[p] = theta[p] + h;
                net.set_parameters(t);
                const double fp = obj.total_cost(net, batch, w, round).total;
                t[p] = theta[p] - h;
                net.set_parameters(t);
                const double fm = obj.total_cost(net, batch, w, round).total;
                t[p] = theta[p];
                err = oracle::rel_err(g[p], (fp - fm) / (2.0 * h), 1e-7);
                if (err < 1e-4) break;
                ++refined;
            }
            net.set_parameters(theta);
            worst = std::max(worst, err);
        }
        params += theta.size();
    }
    return {worst < 1e-4, fmt::format("20 networks, {} parameters, worst relative error {:.2e} ({} stencils retried "
                                      "with a smaller step near a kink)",
                                      params, worst, refined)};
}

// 2. Entropy and softmin properties.
Outcome entropy_suite() {
    std::vector<std::string> failures;
    std::vector<double> one_hot(16, 0.0);
    one_hot[5] = -3.0;
    if (coeff_entropy(one_hot).value != 0.0) failures.push_back("one-hot");
    for (std::size_t n : {2u, 7u, 64u}) {
        const std::vector<double> flat(n, 0.3);
        if (std::abs(coeff_entropy(flat).value - std::log(static_cast<double>(n))) > 1e-12) failures.push_back("uniform");
    }
    std::mt19937_64 rng(77);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> ent(0.0, 4.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> c(32), s(32);
        for (double& v : c) v = n01(rng);
        for (double scale : {-4.0, 0.5, 8.0}) {
            for (std::size_t q = 0; q < c.size(); ++q) s[q] = scale * c[q];
            // power-of-two scales are exact in floating point
            if (coeff_entropy(s).value != coeff_entropy(c).value) {
                failures.push_back("scale invariance");
                break;
            }
        }
        std::vector<double> e(3);
        for (double& v : e) v = ent(rng);
        const double mean = (e[0] + e[1] + e[2]) / 3.0;
        if (std::abs(softmin_entropy(e, 0.0) - mean) > 1e-8) failures.push_back("lambda=0 mean");
        const double lo = *std::min_element(e.begin(), e.end());
        if (std::abs(softmin_entropy(e, 1e9) - lo) > 1e-8) failures.push_back("lambda->inf min");
        double prev = softmin_entropy(e, 0.0);
        for (double lambda = 0.25; lambda <= 64.0; lambda *= 2.0) {
            const double v = softmin_entropy(e, lambda);
            if (v > prev + 1e-15) {
                failures.push_back("monotone in lambda");
                break;
            }
            prev = v;
        }
    }
    return {failures.empty(), failures.empty() ? "one-hot, uniform, scale, limits and monotonicity on 100 vectors"
                                               : "failed: " + failures.front()};
}

RunConfig sine_config(std::uint64_t seed) {
    RunConfig c;
    c.dataset.function = FunctionKind::SimpleSinusoid;
    c.seed = seed;
    return c;
}

// 3. Space discovery on sin(2 pi x) with default settings.
Outcome space_discovery(std::vector<RunOutcome>& runs) {
    int good = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        runs.push_back(run_experiment(sine_config(seed)));
        const RunOutcome& o = runs.back();
        std::map<SpaceKind, int> counts;
        for (const auto& e : o.result.net.edges())
            if (const auto* f = std::get_if<FixedEdge>(&e.state)) ++counts[f->fixed.space.kind()];
        SpaceKind modal = SpaceKind::Fourier;
        int best = -1;
        for (const auto& [k, n] : counts)
            if (n > best) modal = k, best = n;
        const bool ok = !counts.empty() && modal == SpaceKind::Fourier && o.train_r2 >= 0.85;
        good += ok ? 1 : 0;
        per_seed += fmt::format(" [seed {}: {} fixed, modal {}, R2 {:.4f}]", seed, o.result.net.fixed_edge_count(),
                                counts.empty() ? "-" : std::string(to_string(modal)), o.train_r2);
    }
    return {good >= 4, fmt::format("{}/5 runs fix a Fourier-modal edge set with R2 >= 0.85;{}", good, per_seed)};
}

// 4. Per-edge parameter reduction.
Outcome parameter_reduction(const std::vector<RunOutcome>& runs) {
    const EdgeConfig ec;
    Network net(Architecture{{1, 2, 1}}, ec, 0);
    const std::size_t spline = net.parameter_counts().per_edge[0];
    net.fix_edge(EdgeId{0, 0, 0},
                 FixedParametric(FunctionalSpace(SpaceKind::Fourier, 64, ec.lo, ec.hi), {0, 1, 2, 3}, {1, 1, 1, 1}), 1.0);
    const std::size_t fixed = net.parameter_counts().per_edge[0];
    bool trained_ok = true;
    for (const auto& o : runs) {
        const auto pc = o.result.net.parameter_counts();
        for (std::size_t e = 0; e < o.result.net.edges().size(); ++e)
            trained_ok = trained_ok && pc.per_edge[e] == (o.result.net.edges()[e].is_fixed() ? 4u : 23u);
    }
    const double reduction = 1.0 - static_cast<double>(fixed) / static_cast<double>(spline);
    return {spline == 23 && fixed == 4 && reduction >= 0.8 && trained_ok,
            fmt::format("{} -> {} dof per edge, reduction {:.1f}%, trained networks consistent: {}", spline, fixed,
                        100.0 * reduction, trained_ok ? "yes" : "no")};
}

// 5. Jacobian spread grows from spline space to the fixed network.
Outcome spectral_trend() {
    int up = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RunConfig c;
        c.architecture = Architecture{{1, 4, 1}};
        c.dataset.function = FunctionKind::Gaussian;
        c.trainer.weights.rounds = 5;
        c.seed = seed;
        const RunOutcome o = run_experiment(c);
        const double first = o.result.spectra.front().jac_std;
        const double last = o.result.spectra.back().jac_std;
        up += last > first ? 1 : 0;
        per_seed += fmt::format(" [seed {}: {:.3f} -> {:.3f}]", seed, first, last);
    }
    return {up >= 4, fmt::format("final > round-0 jac_std in {}/5;{}", up, per_seed)};
}

// 6. Noise robustness ordering on the wave benchmark.
Outcome noise_ordering() {
    NoiseSweepConfig c;
    c.base.architecture = Architecture{{1, 2, 1}};
    c.base.dataset.function = FunctionKind::Wave1D;
    c.kinds = {NoiseKind::Gaussian};
    c.snr_db = {10.0};
    c.architectures = {c.base.architecture};
    c.repeats = 5;
    const auto cells = run_noise_sweep(c);
    double pkan = NAN, base = NAN;
    std::size_t ok = 0;
    for (const auto& r : cells) {
        ok += r.succeeded;
        (r.model == "pkan" ? pkan : base) = r.median_clean_validation_loss;
    }
    return {ok == 10 && pkan <= base,
            fmt::format("median clean-validation MSE: pkan {:.4e}, baseline {:.4e} ({} of 10 runs succeeded)", pkan,
                        base, ok)};
}

// 7. A wrong-space fix on Fourier data is reverted within one round.
Outcome regret_reversion() {
    int reverted = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TrainerConfig tc;
        tc.weights.tau_regret = 0.05;
        const EdgeConfig ec;
        Trainer t(tc, Objective(ec, default_spaces(ec)));
        const TestFunction f = make_function(FunctionKind::SimpleSinusoid);
        const Dataset d = sample_dataset(f, 256, NoiseSpec{}, 0.2, seed);
        const auto train = d.train_examples();
        const auto val = d.validation_examples();
        Network net(Architecture{{1, 1}}, ec, seed);
        t.calibrate(net, f.domain(), train);
        t.pretrain(net, train, tc.pretrain_epochs);
        const EdgeId id{0, 0, 0};
        t.force_fix(net, id, SpaceKind::Bessel, t.validation_loss(net, val), 1);
        const RoundLog log = t.run_round(net, train, val, 1);
        const bool ok = log.reverted.size() == 1 && log.reverted[0].id == id &&
                        log.reverted[0].space == SpaceKind::Bessel && !net.edge(id).is_fixed();
        reverted += ok ? 1 : 0;
        per_seed += fmt::format(" [seed {}: regret {:.3g}]", seed, log.reverted.empty() ? 0.0 : log.reverted[0].regret);
    }
    return {reverted == 5, fmt::format("{}/5 reverted in the first round;{}", reverted, per_seed)};
}

// 8. Weak entropy weight leaves more edges unfixed than the defaults.
Outcome unfixed_direction() {
    AblationConfig c;
    c.functions = five_function_suite();
    c.space_subsets = {c.base.spaces};
    const double weak_beta = 0.25 * c.base.trainer.weights.gamma;  // beta < gamma / 2
    c.weight_grid = {nlohmann::json::object(), nlohmann::json{{"beta", weak_beta}}};
    for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
    const auto cells = run_ablation(c);
    double sum[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (const auto& cell : cells) {
        const int k = cell.cell.weights.empty() ? 0 : 1;
        for (const auto& s : cell.seeds) {
            if (!s.ok) continue;
            sum[k] += s.unfixed_fraction;
            ++n[k];
        }
    }
    const double def = sum[0] / static_cast<double>(n[0]);
    const double weak = sum[1] / static_cast<double>(n[1]);
    return {weak > def && n[0] == 50 && n[1] == 50,
            fmt::format("mean unfixed fraction: beta={} -> {:.4f} vs defaults (beta={}, gamma={}) -> {:.4f} over {}+{} runs",
                        weak_beta, weak, c.base.trainer.weights.beta, c.base.trainer.weights.gamma, def, n[1], n[0])};
}

// 9. Determinism and checkpoint round trip.
Outcome determinism(const std::vector<RunOutcome>& runs) {
    RunConfig c = sine_config(3);
    c.dataset.noise = NoiseKind::SaltAndPepper;
    c.dataset.snr_db = 15.0;
    const std::string a = diagnostics_csv(run_experiment(c));
    const std::string b = diagnostics_csv(run_experiment(c));
    double worst = 0.0;
    bool equal = true;
    for (const auto& o : runs) {
        const Checkpoint cp = checkpoint_from_string(checkpoint_to_string(o.result.net, &o.optimizer));
        equal = equal && cp.net == o.result.net && cp.optimizer && *cp.optimizer == o.optimizer;
        Network x = o.result.net, y = cp.net;
        for (const auto& p : quasi_random_inputs(200, o.config.function().domain(), 1)) {
            worst = std::max(worst, std::abs(x.evaluate(p)[0] - y.evaluate(p)[0]));
        }
    }
    return {a == b && equal && worst <= 1e-12,
            fmt::format("diagnostics CSV byte-identical: {}; checkpoint forward difference {:.1e}; state equal: {}",
                        a == b ? "yes" : "no", worst, equal ? "yes" : "no")};
}

}  // namespace

int main() {
    std::vector<RunOutcome> sine_runs;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 gradient oracle", gradient_oracle},
        {"2 entropy/softmin suite", entropy_suite},
        {"3 space discovery", [&] { return space_discovery(sine_runs); }},
        {"4 parameter reduction", [&] { return parameter_reduction(sine_runs); }},
        {"5 spectral trend", spectral_trend},
        {"6 noise robustness ordering", noise_ordering},
        {"7 regret reversion", regret_reversion},
        {"8 unfixed-edge direction", unfixed_direction},
        {"9 determinism and serialization", [&] { return determinism(sine_runs); }},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << fmt::format("{} {} ({:.1f} s): {}\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail) << std::flush;
        failed += o.pass ? 0 : 1;
    }
    std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
