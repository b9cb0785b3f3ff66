#include "pkan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace pkan {

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(learning_rate > 0.0)) throw ConfigError(fmt::format("learning rate must be positive, got {}", learning_rate));
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("moment decays must lie in [0, 1)");
    }
}

void AdamOptimizer::reset(const Network& net) {
    m_.assign(net.parameter_count(), 0.0);
    v_.assign(net.parameter_count(), 0.0);
    steps_ = 0;
    ++resets_;
    layout_ = net.layout_version();
}

void AdamOptimizer::restore(const Network& net, std::vector<double> m, std::vector<double> v, std::uint64_t steps) {
    if (m.size() != net.parameter_count() || v.size() != net.parameter_count()) {
        throw FormatError("optimizer state does not match the network parameter count");
    }
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = steps;
    layout_ = net.layout_version();
}

void AdamOptimizer::step(Network& net, std::span<const double> grad) {
    if (!layout_ || *layout_ != net.layout_version()) {
        throw ProtocolError("optimizer state does not match the current parameter set; reset it first");
    }
    if (grad.size() != m_.size()) throw ConfigError("gradient length does not match optimizer state");
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    std::vector<double> theta = net.parameters();
    for (std::size_t k = 0; k < theta.size(); ++k) {
        m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
        v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
        theta[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
    net.set_parameters(theta);
}

void TrainerConfig::validate() const {
    weights.validate();
    if (pretrain_epochs < 1) throw ConfigError(fmt::format("pretrain epochs must be >= 1, got {}", pretrain_epochs));
    if (finetune_epochs < 1) throw ConfigError(fmt::format("fine-tune epochs must be >= 1, got {}", finetune_epochs));
    if (n_keep < 1) throw ConfigError("n_keep must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(regret_window_fraction > 0.0 && regret_window_fraction <= 1.0)) {
        throw ConfigError("regret window fraction must lie in (0, 1]");
    }
    if (!(hidden_margin >= 0.0)) throw ConfigError("hidden margin must be nonnegative");
    if (!(r2_relaxation > 0.0 && r2_relaxation <= 1.0)) throw ConfigError("r2 relaxation must lie in (0, 1]");
    if (jacobian_points < 1) throw ConfigError("need at least one Jacobian point");
}

double regret_value(const RegretEntry& entry) {
    if (entry.window.empty()) return 0.0;
    double mean = 0.0;
    for (double w : entry.window) mean += w;
    mean /= static_cast<double>(entry.window.size());
    return (mean - entry.loss_before_fix) / std::max(entry.loss_before_fix, 1e-12);
}

std::vector<EdgeId> regret_check(const RegretLedger& ledger, double tau_regret) {
    std::vector<EdgeId> out;
    for (const auto& [id, entry] : ledger) {
        if (entry.window.empty()) continue;
        if (regret_value(entry) > tau_regret) out.push_back(id);
    }
    return out;
}

Trainer::Trainer(TrainerConfig config, Objective objective)
    : config_(std::move(config)), objective_(std::move(objective)), optimizer_(config_.learning_rate) {
    config_.validate();
}

double Trainer::r2_min_for_round(int round) const {
    return config_.weights.r2_min * std::pow(config_.r2_relaxation, std::max(0, round - 1));
}

double Trainer::validation_loss(Network& net, std::span<const Example> validation) const {
    return objective_.reconstruction_loss(net, validation);
}

void Trainer::calibrate(Network& net, std::span<const std::pair<double, double>> input_domain,
                        std::span<const Example> batch) const {
    const auto& widths = net.architecture().widths;
    for (std::size_t i = 0; i < widths[0]; ++i) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        if (!input_domain.empty()) {
            if (input_domain.size() != widths[0]) throw ConfigError("input domain does not match the input width");
            lo = input_domain[i].first;
            hi = input_domain[i].second;
        } else {
            if (batch.empty()) throw ConfigError("calibration needs a domain or a nonempty batch");
            for (const auto& ex : batch) {
                lo = std::min(lo, ex.x[i]);
                hi = std::max(hi, ex.x[i]);
            }
        }
        net.calibrate(0, i, lo, hi, 0.0);
    }
    for (std::size_t l = 1; l < widths.size() - 1; ++l) {
        std::vector<double> lo(widths[l], -1.0);
        std::vector<double> hi(widths[l], 1.0);
        for (const auto& ex : batch) {
            const auto acts = net.activations(ex.x);
            for (std::size_t i = 0; i < widths[l]; ++i) {
                lo[i] = std::min(lo[i], acts[l][i]);
                hi[i] = std::max(hi[i], acts[l][i]);
            }
        }
        for (std::size_t i = 0; i < widths[l]; ++i) net.calibrate(l, i, lo[i], hi[i], config_.hidden_margin);
    }
}

std::size_t Trainer::widen_hidden(Network& net, std::span<const Example> batch) const {
    const auto& widths = net.architecture().widths;
    const EdgeConfig& ec = net.edge_config();
    std::size_t widened = 0;
    for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
        std::vector<double> lo(widths[l], std::numeric_limits<double>::infinity());
        std::vector<double> hi(widths[l], -std::numeric_limits<double>::infinity());
        for (const auto& ex : batch) {
            const auto acts = net.activations(ex.x);
            for (std::size_t i = 0; i < widths[l]; ++i) {
                lo[i] = std::min(lo[i], acts[l][i]);
                hi[i] = std::max(hi[i], acts[l][i]);
            }
        }
        for (std::size_t i = 0; i < widths[l]; ++i) {
            const AffineMap old = net.normalizers()[l][i];
            const double covered_lo = (ec.lo - old.offset) / old.scale;
            const double covered_hi = (ec.hi - old.offset) / old.scale;
            if (lo[i] >= covered_lo && hi[i] <= covered_hi) continue;
            bool feeds_fixed = false;
            for (std::size_t j = 0; j < widths[l + 1]; ++j) feeds_fixed = feeds_fixed || net.edge({l, i, j}).is_fixed();
            if (feeds_fixed) continue;

            const double new_lo = std::min(lo[i], covered_lo);
            const double new_hi = std::max(hi[i], covered_hi);
            net.calibrate(l, i, new_lo, new_hi, config_.hidden_margin);
            const AffineMap fresh = net.normalizers()[l][i];
            for (std::size_t j = 0; j < widths[l + 1]; ++j) {
                auto& spline = std::get<TrainableSpline>(net.edge({l, i, j}).state).spline;
                const std::size_t count = 4 * spline.grid.basis_count();
                std::vector<Sample> samples;
                samples.reserve(count);
                for (std::size_t s = 0; s < count; ++s) {
                    const double u_new = ec.lo + (ec.hi - ec.lo) * static_cast<double>(s) / static_cast<double>(count - 1);
                    const double raw = (u_new - fresh.offset) / fresh.scale;
                    const double u_old = std::clamp(old.apply(raw), ec.lo, ec.hi);
                    samples.push_back({u_new, spline.eval(u_old)});
                }
                spline = fit_spline(samples, spline.grid, 0.0);
            }
            ++widened;
        }
    }
    return widened;
}

EpochSummary Trainer::step_epoch(Network& net, std::span<const Example> train, int round, int epoch) {
    std::vector<double> grad(net.parameter_count(), 0.0);
    const CostBreakdown cb = objective_.total_cost(net, train, config_.weights, round, grad);
    if (!std::isfinite(cb.total) || cb.total > config_.divergence_limit) {
        throw DivergenceError(fmt::format("cost diverged to {} at round {} epoch {}", cb.total, round, epoch), net);
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw DivergenceError(fmt::format("non-finite gradient at round {} epoch {}", round, epoch), net);
        }
    }
    EpochSummary s;
    s.epoch = epoch;
    s.lambda = cb.lambda;
    s.total = cb.total;
    s.reconstruction = cb.reconstruction;
    s.entropy = cb.entropy;
    s.regularization = cb.regularization;
    const std::size_t ns = objective_.spaces().size();
    s.mean_space_entropy.assign(ns, 0.0);
    if (!cb.edges.empty()) {
        for (const auto& e : cb.edges) {
            for (std::size_t k = 0; k < ns; ++k) s.mean_space_entropy[k] += e.per_space[k];
        }
        for (double& v : s.mean_space_entropy) v /= static_cast<double>(cb.edges.size());
    }
    optimizer_.step(net, grad);
    return s;
}

std::vector<EpochSummary> Trainer::pretrain(Network& net, std::span<const Example> train, int epochs) {
    return finetune(net, train, epochs, 0);
}

std::vector<EpochSummary> Trainer::finetune(Network& net, std::span<const Example> train, int epochs, int round,
                                            std::span<const Example> validation,
                                            std::vector<double>* validation_trace) {
    if (epochs < 1) throw ConfigError(fmt::format("epochs must be >= 1, got {}", epochs));
    if (train.empty()) throw ConfigError("training data is empty");
    if (optimizer_.reset_count() == 0 || net.parameter_count() != optimizer_.first_moment().size()) {
        optimizer_.reset(net);
    }
    std::vector<EpochSummary> out;
    out.reserve(static_cast<std::size_t>(epochs));
    for (int ep = 0; ep < epochs; ++ep) {
        out.push_back(step_epoch(net, train, round, ep));
        if (validation_trace != nullptr) {
            validation_trace->push_back(objective_.reconstruction_loss(net, validation.empty() ? train : validation));
        }
    }
    return out;
}

std::vector<FixEvent> Trainer::fix_round(Network& net, std::span<const FunctionalSpace> spaces, double r2_min,
                                         double validation_loss, int round) {
    std::vector<FixEvent> events;
    if (!config_.fixing_enabled) return events;
    for (auto& edge : net.edges()) {
        const auto* sp = std::get_if<TrainableSpline>(&edge.state);
        if (sp == nullptr) continue;
        const SplineEdge& spline = sp->spline;
        BestFit bf = best_fit([&](double u) { return spline.eval(u); }, spaces, config_.n_keep);
        if (!(bf.r2 > r2_min)) continue;
        FixEvent ev{edge.id, bf.fixed.space.kind(), bf.r2, bf.fixed.indices, bf.fixed.coefficients};
        ledger_[edge.id] = RegretEntry{ev.space, round, validation_loss, {}, 0.0};
        net.fix_edge(edge.id, std::move(bf.fixed), bf.r2);
        events.push_back(std::move(ev));
    }
    return events;
}

FixEvent Trainer::force_fix(Network& net, const EdgeId& id, SpaceKind space, double validation_loss, int round) {
    const auto* sp = std::get_if<TrainableSpline>(&net.edge(id).state);
    if (sp == nullptr) throw ConfigError(fmt::format("{} is already fixed", id.label()));
    const SplineEdge& spline = sp->spline;
    const EdgeConfig& ec = net.edge_config();
    BestFit bf = fit_in_space([&](double u) { return spline.eval(u); },
                              FunctionalSpace(space, ec.transform_size, ec.lo, ec.hi), config_.n_keep);
    FixEvent ev{id, space, bf.r2, bf.fixed.indices, bf.fixed.coefficients};
    ledger_[id] = RegretEntry{space, round, validation_loss, {}, 0.0};
    net.fix_edge(id, std::move(bf.fixed), bf.r2);
    optimizer_.reset(net);
    return ev;
}

std::vector<RevertEvent> Trainer::revert(Network& net, std::span<const EdgeId> ids) {
    // validate everything first so a bad id leaves the network untouched
    for (const auto& id : ids)
        if (!net.edge(id).is_fixed()) throw ConfigError(fmt::format("{} is not fixed; nothing to revert", id.label()));
    std::vector<RevertEvent> events;
    for (const auto& id : ids) {
        const auto it = ledger_.find(id);
        RevertEvent ev;
        ev.id = id;
        if (it != ledger_.end()) {
            ev.space = it->second.space;
            ev.regret = it->second.regret;
            ledger_.erase(it);
        } else {
            ev.space = std::get<FixedEdge>(net.edge(id).state).fixed.space.kind();
        }
        net.revert_edge(id);
        events.push_back(ev);
    }
    if (!events.empty()) optimizer_.reset(net);
    return events;
}

RoundLog Trainer::run_round(Network& net, std::span<const Example> train, std::span<const Example> validation,
                            int round) {
    RoundLog log;
    log.round = round;
    log.lambda = config_.weights.schedule.at(round);
    log.r2_min = r2_min_for_round(round);
    log.total_edges = net.edges().size();

    widen_hidden(net, train);
    if (!jacobian_inputs_.empty()) log.spectrum_before = spectral_spread(net, jacobian_inputs_, round - 1);

    const std::span<const Example> val = validation.empty() ? train : validation;
    const double before = validation_loss(net, val);
    std::vector<FixEvent> fixes = fix_round(net, objective_.spaces(), log.r2_min, before, round);
    if (!fixes.empty()) optimizer_.reset(net);

    std::vector<double> trace;
    log.trajectory = finetune(net, train, config_.finetune_epochs, round, val, &trace);
    const auto window = static_cast<std::size_t>(
        std::max(1.0, std::ceil(config_.regret_window_fraction * static_cast<double>(trace.size()))));
    const std::vector<double> tail(trace.end() - static_cast<std::ptrdiff_t>(window), trace.end());
    for (auto& [id, entry] : ledger_) {
        entry.window = tail;
        entry.regret = regret_value(entry);
    }
    const std::vector<EdgeId> to_revert = regret_check(ledger_, config_.weights.tau_regret);
    std::vector<RevertEvent> reverts = revert(net, to_revert);
    for (auto& r : reverts) {
        const auto it = std::find_if(fixes.begin(), fixes.end(), [&](const FixEvent& f) { return f.id == r.id; });
        if (it != fixes.end()) {
            r.fixed_this_round = true;
            fixes.erase(it);
        }
    }
    log.fixed = std::move(fixes);
    log.reverted = std::move(reverts);
    log.unchanged = log.total_edges - log.fixed.size() - log.reverted.size();
    log.validation_loss = validation_loss(net, val);
    if (!jacobian_inputs_.empty()) log.spectrum_after = spectral_spread(net, jacobian_inputs_, round);
    return log;
}

TrainingResult Trainer::run(Network net, std::span<const Example> train, std::span<const Example> validation,
                            std::span<const std::pair<double, double>> input_domain) {
    TrainingResult result{std::move(net), {}, {}, {}, {}, false, {}};
    Network& model = result.net;
    ledger_.clear();
    calibrate(model, input_domain, train);

    std::vector<std::pair<double, double>> bounds(input_domain.begin(), input_domain.end());
    if (bounds.empty()) {
        for (std::size_t i = 0; i < model.architecture().inputs(); ++i) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const auto& ex : train) {
                lo = std::min(lo, ex.x[i]);
                hi = std::max(hi, ex.x[i]);
            }
            bounds.emplace_back(lo, hi);
        }
    }
    jacobian_inputs_ = quasi_random_inputs(config_.jacobian_points, bounds, config_.jacobian_seed);
    optimizer_.reset(model);

    try {
        result.pretrain.reserve(static_cast<std::size_t>(config_.pretrain_epochs));
        for (int ep = 0; ep < config_.pretrain_epochs; ++ep) result.pretrain.push_back(step_epoch(model, train, 0, ep));
        result.spectra.push_back(spectral_spread(model, jacobian_inputs_, 0));
        if (observer_) observer_(0, model);
        for (int t = 1; t <= config_.weights.rounds; ++t) {
            result.rounds.push_back(run_round(model, train, validation, t));
            result.spectra.push_back(result.rounds.back().spectrum_after);
            if (observer_) observer_(t, model);
        }
    } catch (const DivergenceError& e) {
        result.aborted = true;
        result.abort_reason = e.what();
        model = e.snapshot();
    }
    result.symbolic = render_symbolic(model);
    return result;
}

}  // namespace pkan
