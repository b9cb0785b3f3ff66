#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pkan/diagnostics.hpp"
#include "pkan/errors.hpp"
#include "pkan/network.hpp"
#include "pkan/objective.hpp"

namespace pkan {

// Bias-corrected adaptive-moment descent. The accumulators are tied to one
// network layout; stepping after a layout change without reset() throws.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double learning_rate = 1e-2, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void reset(const Network& net);
    void step(Network& net, std::span<const double> grad);

    double learning_rate() const { return lr_; }
    std::uint64_t step_count() const { return steps_; }
    std::uint64_t reset_count() const { return resets_; }
    std::span<const double> first_moment() const { return m_; }
    std::span<const double> second_moment() const { return v_; }
    // Restores accumulators from a checkpoint.
    void restore(const Network& net, std::vector<double> m, std::vector<double> v, std::uint64_t steps);

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t steps_ = 0;
    std::uint64_t resets_ = 0;
    std::optional<std::uint64_t> layout_;
};

struct TrainerConfig {
    CostWeights weights{};
    int pretrain_epochs = 2000;
    int finetune_epochs = 500;
    std::size_t n_keep = kDefaultKeep;
    double learning_rate = 1e-2;
    double regret_window_fraction = 0.2;
    double hidden_margin = 0.1;
    double r2_relaxation = 0.95;
    bool fixing_enabled = true;
    double divergence_limit = 1e12;
    std::size_t jacobian_points = 32;
    std::uint64_t jacobian_seed = 0;

    void validate() const;
};

struct EpochSummary {
    int epoch = 0;
    double lambda = 0.0;
    double total = 0.0;
    double reconstruction = 0.0;
    double entropy = 0.0;
    double regularization = 0.0;
    std::vector<double> mean_space_entropy;  // over trainable spline edges, per space
};

struct FixEvent {
    EdgeId id;
    SpaceKind space = SpaceKind::Fourier;
    double r2 = 0.0;
    std::vector<std::size_t> indices;
    std::vector<double> coefficients;
};

struct RevertEvent {
    EdgeId id;
    SpaceKind space = SpaceKind::Fourier;
    double regret = 0.0;
    bool fixed_this_round = false;
};

struct RegretEntry {
    SpaceKind space = SpaceKind::Fourier;
    int round_fixed = 0;
    double loss_before_fix = 0.0;
    std::vector<double> window;
    double regret = 0.0;
};

using RegretLedger = std::map<EdgeId, RegretEntry>;

// (mean(window) - before) / max(before, 1e-12)
double regret_value(const RegretEntry& entry);
// Edges whose regret exceeds tau. Entries with empty windows are skipped.
std::vector<EdgeId> regret_check(const RegretLedger& ledger, double tau_regret);

struct RoundLog {
    int round = 0;
    double lambda = 0.0;
    double r2_min = 0.0;
    std::vector<FixEvent> fixed;        // fixed this round and still fixed at its end
    std::vector<RevertEvent> reverted;  // reverted this round
    std::size_t unchanged = 0;
    std::size_t total_edges = 0;
    std::vector<EpochSummary> trajectory;
    SpectralReport spectrum_before;
    SpectralReport spectrum_after;
    double validation_loss = 0.0;
};

struct TrainingResult {
    Network net;
    std::vector<EpochSummary> pretrain;
    std::vector<RoundLog> rounds;
    std::vector<SpectralReport> spectra;  // index 0: after pretraining, then one per round
    std::vector<SymbolicEdge> symbolic;
    bool aborted = false;
    std::string abort_reason;
};

// Thrown when Q leaves the finite range or exceeds the divergence limit.
// Carries the network as it was before the failing step.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, Network snapshot) : NumericError(what), snapshot_(std::move(snapshot)) {}
    const Network& snapshot() const { return snapshot_; }

private:
    Network snapshot_;
};

// Pretraining in spline space, then rounds of fix / fine-tune / regret /
// revert with optimizer resets after every parameter-set change.
class Trainer {
public:
    Trainer(TrainerConfig config, Objective objective);

    const TrainerConfig& config() const { return config_; }
    const Objective& objective() const { return objective_; }
    const AdamOptimizer& optimizer() const { return optimizer_; }
    AdamOptimizer& optimizer() { return optimizer_; }
    const RegretLedger& ledger() const { return ledger_; }

    // Called by run() after pretraining (round 0) and at the end of every round.
    using RoundObserver = std::function<void(int round, Network& net)>;
    void set_round_observer(RoundObserver observer) { observer_ = std::move(observer); }

    // Input normalizers from per-dimension bounds (no margin); hidden layers
    // from the activations on `batch`, widened to at least [-1, 1].
    void calibrate(Network& net, std::span<const std::pair<double, double>> input_domain,
                   std::span<const Example> batch) const;
    // Widens hidden normalizers whose activations left their covered range and
    // refits the downstream spline edges so the network function is preserved.
    // Neurons feeding a fixed edge are left alone. Returns the number widened.
    std::size_t widen_hidden(Network& net, std::span<const Example> batch) const;

    std::vector<EpochSummary> pretrain(Network& net, std::span<const Example> train, int epochs);
    std::vector<EpochSummary> finetune(Network& net, std::span<const Example> train, int epochs, int round,
                                       std::span<const Example> validation = {},
                                       std::vector<double>* validation_trace = nullptr);

    // Projects every trainable spline edge and fixes those whose best R^2
    // exceeds r2_min. validation_loss is recorded as the pre-fix loss.
    std::vector<FixEvent> fix_round(Network& net, std::span<const FunctionalSpace> spaces, double r2_min,
                                    double validation_loss, int round);
    // Fixes one edge in a chosen space regardless of its R^2.
    FixEvent force_fix(Network& net, const EdgeId& id, SpaceKind space, double validation_loss, int round);
    // Reverts the given edges, clears their ledger entries and resets the optimizer.
    std::vector<RevertEvent> revert(Network& net, std::span<const EdgeId> ids);

    // One full round after pretraining (fix, reset, fine-tune, regret, revert, reset).
    RoundLog run_round(Network& net, std::span<const Example> train, std::span<const Example> validation, int round);

    TrainingResult run(Network net, std::span<const Example> train, std::span<const Example> validation,
                       std::span<const std::pair<double, double>> input_domain);

    double validation_loss(Network& net, std::span<const Example> validation) const;
    double r2_min_for_round(int round) const;

private:
    EpochSummary step_epoch(Network& net, std::span<const Example> train, int round, int epoch);

    TrainerConfig config_;
    Objective objective_;
    AdamOptimizer optimizer_;
    RegretLedger ledger_;
    std::vector<std::vector<double>> jacobian_inputs_;
    RoundObserver observer_;
};

}  // namespace pkan
