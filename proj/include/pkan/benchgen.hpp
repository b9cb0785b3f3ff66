#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pkan/errors.hpp"
#include "pkan/objective.hpp"

namespace pkan {

enum class FunctionKind { SimpleSinusoid, Gaussian, Discontinuous, Oscillatory, Polynomial, Wave1D, Heat2D };

std::string_view to_string(FunctionKind kind);
FunctionKind parse_function_kind(std::string_view name);
// The five single-variable functions of the space-discovery suite.
std::vector<FunctionKind> five_function_suite();

// Closed-form target. `time` is the slice used by the PDE benchmarks and is
// ignored by the others.
struct TestFunction {
    FunctionKind kind = FunctionKind::SimpleSinusoid;
    double time = 0.0;

    std::size_t dimension() const;
    std::vector<std::pair<double, double>> domain() const;
    double operator()(std::span<const double> x) const;
};

inline constexpr double kWaveSliceTime = 0.25;
inline constexpr double kHeatSliceTime = 1.0;

TestFunction make_function(FunctionKind kind);
TestFunction make_function(FunctionKind kind, double time);

enum class NoiseKind { None, Gaussian, Uniform, SaltAndPepper };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;

    void validate() const;
};

// Mean of squares.
double signal_power(std::span<const double> values);
// 10 log10(P_clean / P_(noisy - clean)).
double empirical_snr_db(std::span<const double> clean, std::span<const double> noisy);

std::vector<double> apply_noise(std::span<const double> values, const NoiseSpec& spec);

struct Dataset {
    std::size_t dimension = 1;
    std::vector<std::vector<double>> inputs;
    std::vector<double> clean;
    std::vector<double> noisy;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;

    std::size_t size() const { return inputs.size(); }
    // Training pairs use the noisy targets unless `clean_targets` is set.
    std::vector<Example> train_examples(bool clean_targets = false) const;
    std::vector<Example> validation_examples(bool clean_targets = false) const;
};

// Inputs uniform on the function's domain; the last floor(n * validation_fraction)
// samples form the validation split.
Dataset sample_dataset(const TestFunction& f, std::size_t n, const NoiseSpec& noise, double validation_fraction,
                       std::uint64_t seed);

void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);

}  // namespace pkan
