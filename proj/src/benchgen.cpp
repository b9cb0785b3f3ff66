#include "pkan/benchgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace pkan {

namespace {

constexpr std::array kFunctionNames{
    std::pair{FunctionKind::SimpleSinusoid, "sinusoid"},   std::pair{FunctionKind::Gaussian, "gaussian"},
    std::pair{FunctionKind::Discontinuous, "discontinuous"}, std::pair{FunctionKind::Oscillatory, "oscillatory"},
    std::pair{FunctionKind::Polynomial, "polynomial"},     std::pair{FunctionKind::Wave1D, "wave1d"},
    std::pair{FunctionKind::Heat2D, "heat2d"},
};

constexpr std::array kNoiseNames{
    std::pair{NoiseKind::None, "none"},
    std::pair{NoiseKind::Gaussian, "gaussian"},
    std::pair{NoiseKind::Uniform, "uniform"},
    std::pair{NoiseKind::SaltAndPepper, "salt-and-pepper"},
};

double salt_and_pepper_power(std::span<const double> values, std::span<const double> draws,
                             std::span<const std::uint8_t> sides, double lo, double hi, double fraction) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (draws[i] < fraction) {
            const double d = (sides[i] != 0 ? hi : lo) - values[i];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(values.size());
}

std::vector<double> noise_with(std::span<const double> values, const NoiseSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    std::vector<double> out(values.begin(), values.end());
    if (spec.kind == NoiseKind::None || std::isinf(spec.snr_db)) return out;
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError("cannot add noise to non-finite values");
    }
    const double power = signal_power(values);
    if (!(power > 0.0)) throw DegenerateInputError("signal power is zero; SNR is undefined");
    const double noise_power = power / std::pow(10.0, spec.snr_db / 10.0);

    switch (spec.kind) {
        case NoiseKind::Gaussian: {
            std::normal_distribution<double> dist(0.0, std::sqrt(noise_power));
            for (double& v : out) v += dist(rng);
            break;
        }
        case NoiseKind::Uniform: {
            const double half = std::sqrt(3.0 * noise_power);
            std::uniform_real_distribution<double> dist(-half, half);
            for (double& v : out) v += dist(rng);
            break;
        }
        case NoiseKind::SaltAndPepper: {
            const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
            const double lo = *lo_it;
            const double hi = *hi_it;
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::vector<double> draws(values.size());
            std::vector<std::uint8_t> sides(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) {
                draws[i] = unit(rng);
                sides[i] = unit(rng) < 0.5 ? 0 : 1;
            }
            double a = 0.0;
            double b = 1.0;
            if (salt_and_pepper_power(values, draws, sides, lo, hi, b) <= noise_power) {
                a = b;
            } else {
                for (int it = 0; it < 60; ++it) {
                    const double mid = 0.5 * (a + b);
                    if (salt_and_pepper_power(values, draws, sides, lo, hi, mid) < noise_power) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                // Pick whichever bracket end lands closer to the target power.
                const double pa = salt_and_pepper_power(values, draws, sides, lo, hi, a);
                const double pb = salt_and_pepper_power(values, draws, sides, lo, hi, b);
                if (std::abs(pb - noise_power) < std::abs(pa - noise_power)) a = b;
            }
            for (std::size_t i = 0; i < values.size(); ++i) {
                if (draws[i] < a) out[i] = sides[i] != 0 ? hi : lo;
            }
            break;
        }
        case NoiseKind::None:
            break;
    }
    return out;
}

std::vector<Example> examples_for(const Dataset& d, std::span<const std::size_t> idx, bool clean) {
    std::vector<Example> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back({d.inputs[i], {clean ? d.clean[i] : d.noisy[i]}});
    return out;
}

}  // namespace

std::string_view to_string(FunctionKind kind) {
    for (const auto& [k, name] : kFunctionNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

FunctionKind parse_function_kind(std::string_view name) {
    for (const auto& [k, n] : kFunctionNames) {
        if (n == name) return k;
    }
    throw ConfigError(fmt::format("unknown function kind '{}'", name));
}

std::vector<FunctionKind> five_function_suite() {
    return {FunctionKind::SimpleSinusoid, FunctionKind::Gaussian, FunctionKind::Discontinuous,
            FunctionKind::Oscillatory, FunctionKind::Polynomial};
}

std::size_t TestFunction::dimension() const { return kind == FunctionKind::Heat2D ? 2 : 1; }

std::vector<std::pair<double, double>> TestFunction::domain() const {
    return std::vector<std::pair<double, double>>(dimension(), {0.0, 1.0});
}

double TestFunction::operator()(std::span<const double> x) const {
    if (x.size() != dimension()) {
        throw ConfigError(fmt::format("{} takes {} inputs, got {}", to_string(kind), dimension(), x.size()));
    }
    using std::numbers::pi;
    const double v = x[0];
    switch (kind) {
        case FunctionKind::SimpleSinusoid:
            return std::sin(2.0 * pi * v);
        case FunctionKind::Gaussian:
            return std::exp(-8.0 * (v - 0.5) * (v - 0.5));
        case FunctionKind::Discontinuous:
            return (v >= 0.5 ? 1.0 : -1.0) + 0.3 * v;
        case FunctionKind::Oscillatory:
            return std::sin(4.0 * pi * v) + 0.5 * std::cos(10.0 * pi * v);
        case FunctionKind::Polynomial:
            return 4.0 * v * v * v - 3.0 * v;
        case FunctionKind::Wave1D:
            return std::sin(pi * v) * std::cos(pi * time);
        case FunctionKind::Heat2D:
            return std::exp(-2.0 * pi * pi * 0.05 * time) * std::sin(pi * v) * std::sin(pi * x[1]);
    }
    throw ConfigError("unknown function kind");
}

TestFunction make_function(FunctionKind kind) {
    double t = 0.0;
    if (kind == FunctionKind::Wave1D) t = kWaveSliceTime;
    if (kind == FunctionKind::Heat2D) t = kHeatSliceTime;
    return make_function(kind, t);
}

TestFunction make_function(FunctionKind kind, double time) {
    if (!std::isfinite(time)) throw ConfigError("slice time must be finite");
    return TestFunction{kind, time};
}

std::string_view to_string(NoiseKind kind) {
    for (const auto& [k, name] : kNoiseNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
    for (const auto& [k, n] : kNoiseNames) {
        if (n == name) return k;
    }
    throw ConfigError(fmt::format("unknown noise kind '{}'", name));
}

void NoiseSpec::validate() const {
    if (std::isnan(snr_db)) throw ConfigError("snr_db is NaN");
    if (kind == NoiseKind::None && std::isfinite(snr_db)) {
        throw ConfigError("noise kind 'none' requires an infinite SNR");
    }
    if (kind != NoiseKind::None && !std::isfinite(snr_db)) {
        throw ConfigError(fmt::format("noise kind '{}' needs a finite SNR", to_string(kind)));
    }
}

double signal_power(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return acc / static_cast<double>(values.size());
}

double empirical_snr_db(std::span<const double> clean, std::span<const double> noisy) {
    if (clean.size() != noisy.size()) throw ConfigError("clean and noisy lengths differ");
    std::vector<double> diff(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) diff[i] = noisy[i] - clean[i];
    return 10.0 * std::log10(signal_power(clean) / signal_power(diff));
}

std::vector<double> apply_noise(std::span<const double> values, const NoiseSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    return noise_with(values, spec, rng);
}

std::vector<Example> Dataset::train_examples(bool clean_targets) const {
    return examples_for(*this, train, clean_targets);
}

std::vector<Example> Dataset::validation_examples(bool clean_targets) const {
    return examples_for(*this, validation, clean_targets);
}

Dataset sample_dataset(const TestFunction& f, std::size_t n, const NoiseSpec& noise, double validation_fraction,
                       std::uint64_t seed) {
    if (n < 10) throw ConfigError(fmt::format("need at least 10 samples, got {}", n));
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ConfigError(fmt::format("validation fraction must lie in (0, 1), got {}", validation_fraction));
    }
    noise.validate();
    Dataset d;
    d.dimension = f.dimension();
    const auto dom = f.domain();
    std::mt19937_64 rng(seed);
    d.inputs.reserve(n);
    d.clean.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d.dimension);
        for (std::size_t k = 0; k < d.dimension; ++k) {
            x[k] = std::uniform_real_distribution<double>(dom[k].first, dom[k].second)(rng);
        }
        d.clean.push_back(f(x));
        d.inputs.push_back(std::move(x));
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32), 0x6e6fu};
    std::mt19937_64 noise_rng(seq);
    d.noisy = noise_with(d.clean, noise, noise_rng);

    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * validation_fraction));
    if (n_val == 0 || n_val == n) throw ConfigError("validation fraction leaves an empty split");
    for (std::size_t i = 0; i < n - n_val; ++i) d.train.push_back(i);
    for (std::size_t i = n - n_val; i < n; ++i) d.validation.push_back(i);
    return d;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
    for (std::size_t k = 0; k < data.dimension; ++k) out << 'x' << (k + 1) << ',';
    out << "y_clean,y_noisy,split\n";
    std::vector<char> is_val(data.size(), 0);
    for (std::size_t i : data.validation) is_val[i] = 1;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.inputs[i]) out << fmt::format("{},", v);
        out << fmt::format("{},{},{}\n", data.clean[i], data.noisy[i], is_val[i] != 0 ? "validation" : "train");
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset CSV is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 4 || header[header.size() - 3] != "y_clean" || header[header.size() - 2] != "y_noisy" ||
        header.back() != "split") {
        throw FormatError("dataset CSV header must be x1..xd,y_clean,y_noisy,split");
    }
    Dataset d;
    d.dimension = header.size() - 3;
    for (std::size_t k = 0; k < d.dimension; ++k) {
        if (header[k] != fmt::format("x{}", k + 1)) throw FormatError(fmt::format("unexpected column '{}'", header[k]));
    }
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) throw FormatError(fmt::format("row {} has {} cells", row + 1, cells.size()));
        std::vector<double> nums(cells.size() - 1);
        for (std::size_t k = 0; k + 1 < cells.size(); ++k) {
            try {
                std::size_t used = 0;
                nums[k] = std::stod(cells[k], &used);
                if (used != cells[k].size()) throw std::invalid_argument(cells[k]);
            } catch (const std::exception&) {
                throw FormatError(fmt::format("row {}: '{}' is not a number", row + 1, cells[k]));
            }
        }
        d.inputs.emplace_back(nums.begin(), nums.begin() + static_cast<std::ptrdiff_t>(d.dimension));
        d.clean.push_back(nums[d.dimension]);
        d.noisy.push_back(nums[d.dimension + 1]);
        if (cells.back() == "train") {
            d.train.push_back(row);
        } else if (cells.back() == "validation") {
            d.validation.push_back(row);
        } else {
            throw FormatError(fmt::format("row {}: unknown split '{}'", row + 1, cells.back()));
        }
        ++row;
    }
    return d;
}

}  // namespace pkan
