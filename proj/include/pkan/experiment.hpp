#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pkan/benchgen.hpp"
#include "pkan/funcspace.hpp"
#include "pkan/network.hpp"
#include "pkan/serialize.hpp"
#include "pkan/trainer.hpp"

namespace pkan {

struct DatasetSpec {
    FunctionKind function = FunctionKind::SimpleSinusoid;
    std::size_t samples = 256;
    NoiseKind noise = NoiseKind::None;
    double snr_db = std::numeric_limits<double>::infinity();
    double validation_fraction = 0.2;
    std::optional<double> time;  // slice time of the PDE benchmarks
};

// Everything one training run needs. `seed` drives network initialization,
// sampling, noise and the Jacobian probe points.
struct RunConfig {
    Architecture architecture{{1, 2, 1}};
    EdgeConfig edges{};
    std::vector<SpaceKind> spaces{SpaceKind::Fourier, SpaceKind::Chebyshev, SpaceKind::Bessel};
    TrainerConfig trainer{};
    DatasetSpec dataset{};
    std::uint64_t seed = 0;
    std::string output;

    // Cross-field validation; throws ConfigError listing every failing field.
    void validate() const;
    TestFunction function() const;
    NoiseSpec noise() const;
};

// Applies the keys present in `j` on top of `base`. Unknown keys and wrong
// types raise ConfigError naming the field path.
RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base = {});
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json load_json_file(const std::filesystem::path& path);

struct RoundMetrics {
    int round = 0;
    std::size_t parameter_count = 0;
    std::size_t fixed_edges = 0;
    double train_r2 = 0.0;
    double validation_r2 = 0.0;
    std::vector<double> mean_space_entropy;  // over remaining spline edges; NaN when none remain
};

struct RunOutcome {
    RunConfig config;
    Dataset data;
    TrainingResult result;
    OptimizerSnapshot optimizer;        // optimizer state at the end of training
    std::vector<RoundMetrics> metrics;  // round 0 (after pretraining), then one per completed round
    double train_mse = 0.0;             // against the (possibly noisy) training targets
    double validation_mse = 0.0;        // noisy validation targets
    double clean_validation_mse = 0.0;  // clean validation targets
    double train_r2 = 0.0;
    double validation_r2 = 0.0;
    double unfixed_fraction = 0.0;
    std::size_t reverted_total = 0;
    double seconds = 0.0;
};

RunOutcome run_experiment(const RunConfig& config);

// R^2 that reports NaN instead of throwing on constant targets.
double safe_r2(const Network& net, std::span<const Example> examples);

inline constexpr const char* kDiagnosticsSchema = "pkan-diagnostics/1";
inline constexpr const char* kAblationSchema = "pkan-ablation/1";
inline constexpr const char* kTrajectorySchema = "pkan-trajectory/1";
inline constexpr const char* kNoiseSchema = "pkan-noise-sweep/1";

std::string diagnostics_csv(const RunOutcome& outcome);
std::string symbolic_text(const RunOutcome& outcome);
std::string round_log_text(const RunOutcome& outcome);

// ---- suites ---------------------------------------------------------------

struct AblationCell {
    FunctionKind function = FunctionKind::SimpleSinusoid;
    std::vector<SpaceKind> spaces;
    nlohmann::json weights;  // overrides applied to the base weights
    std::string weights_label;
};

struct AblationConfig {
    RunConfig base;
    std::vector<FunctionKind> functions;
    std::vector<std::vector<SpaceKind>> space_subsets;
    std::vector<nlohmann::json> weight_grid;
    std::vector<std::uint64_t> seeds;
    std::size_t parallelism = 1;

    std::vector<AblationCell> cells() const;
};

AblationConfig ablation_config_from_json(const nlohmann::json& j);

struct SeedResult {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double train_r2 = 0.0;
    double validation_r2 = 0.0;
    double unfixed_fraction = 0.0;
    std::size_t fixed_edges = 0;
    std::size_t reverted_total = 0;
    double jac_std_initial = 0.0;
    double jac_std_final = 0.0;
    std::vector<double> log_loss;  // log10 of Q per epoch, pretraining then rounds
};

struct CellResult {
    AblationCell cell;
    std::vector<SeedResult> seeds;

    std::size_t succeeded() const;
    double mean_unfixed() const;  // over successful seeds; NaN when none succeeded
};

std::vector<CellResult> run_ablation(const AblationConfig& config);
std::string ablation_summary_csv(const std::vector<CellResult>& cells);
std::string ablation_trajectory_csv(const std::vector<CellResult>& cells);

struct NoiseSweepConfig {
    RunConfig base;
    std::vector<NoiseKind> kinds;
    std::vector<double> snr_db;
    std::vector<Architecture> architectures;
    std::size_t repeats = 5;
    std::size_t parallelism = 1;
};

NoiseSweepConfig noise_sweep_config_from_json(const nlohmann::json& j);

struct NoiseCellResult {
    NoiseKind kind = NoiseKind::Gaussian;
    double snr_db = 0.0;
    Architecture architecture;
    std::string model;  // "pkan" or "baseline"
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::string first_error;
    double median_train_loss = 0.0;
    double median_validation_loss = 0.0;
    double median_clean_validation_loss = 0.0;
    double median_seconds = 0.0;
};

// The spline-only baseline of a P-KAN config: beta = 0 and fixing disabled.
RunConfig baseline_of(const RunConfig& config);
std::vector<NoiseCellResult> run_noise_sweep(const NoiseSweepConfig& config);
std::string noise_sweep_csv(const std::vector<NoiseCellResult>& cells);

// Runs job(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job);

double median(std::vector<double> values);

}  // namespace pkan
