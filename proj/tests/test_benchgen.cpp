#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "pkan/benchgen.hpp"
#include "pkan/errors.hpp"

using namespace pkan;

namespace {

constexpr double kPi = std::numbers::pi;

double at(const TestFunction& f, double x) {
    const double v[1]{x};
    return f(v);
}

std::vector<double> sine_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> out(n);
    for (double& v : out) v = std::sin(2 * kPi * u(rng));
    return out;
}

double variance(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_SUITE("benchgen") {

TEST_CASE("test functions") {
    const TestFunction sine = make_function(FunctionKind::SimpleSinusoid);
    CHECK(at(sine, 0.0) == 0.0);
    CHECK(at(sine, 0.25) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sine.dimension() == 1);

    const TestFunction gauss = make_function(FunctionKind::Gaussian);
    CHECK(at(gauss, 0.5) == 1.0);
    CHECK(at(gauss, 0.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));

    const TestFunction jump = make_function(FunctionKind::Discontinuous);
    // right-limit convention at the jump
    CHECK(at(jump, 0.5) == doctest::Approx(1.15).epsilon(1e-15));
    CHECK(at(jump, std::nextafter(0.5, 0.0)) == doctest::Approx(-0.85).epsilon(1e-12));

    CHECK(at(make_function(FunctionKind::Oscillatory), 0.0) == 0.5);
    CHECK(at(make_function(FunctionKind::Polynomial), 1.0) == 1.0);
    CHECK(at(make_function(FunctionKind::Polynomial), 0.5) == -1.0);

    const TestFunction wave = make_function(FunctionKind::Wave1D);
    CHECK(wave.time == kWaveSliceTime);
    CHECK(at(wave, 0.5) == doctest::Approx(std::cos(kPi * kWaveSliceTime)).epsilon(1e-15));

    SUBCASE("heat at t = 0 is its initial condition") {
        const TestFunction heat0 = make_function(FunctionKind::Heat2D, 0.0);
        CHECK(heat0.dimension() == 2);
        for (double x : {0.1, 0.37, 0.5, 0.9})
            for (double y : {0.2, 0.5, 0.77}) {
                const double p[2]{x, y};
                CHECK(heat0(p) == doctest::Approx(std::sin(kPi * x) * std::sin(kPi * y)).epsilon(1e-15));
            }
        const TestFunction heat = make_function(FunctionKind::Heat2D);
        const double mid[2]{0.5, 0.5};
        CHECK(heat(mid) == doctest::Approx(std::exp(-2 * kPi * kPi * 0.05)).epsilon(1e-14));
    }
    SUBCASE("names") {
        for (FunctionKind k : {FunctionKind::SimpleSinusoid, FunctionKind::Gaussian, FunctionKind::Discontinuous,
                               FunctionKind::Oscillatory, FunctionKind::Polynomial, FunctionKind::Wave1D,
                               FunctionKind::Heat2D})
            CHECK(parse_function_kind(to_string(k)) == k);
        CHECK_THROWS_AS(parse_function_kind("cosine"), ConfigError);
        CHECK(five_function_suite().size() == 5);
        CHECK_THROWS_AS(parse_noise_kind("pink"), ConfigError);
    }
}

TEST_CASE("noise injection") {
    SUBCASE("infinite SNR is the identity") {
        const auto v = sine_values(100, 1);
        CHECK(apply_noise(v, NoiseSpec{}) == v);
    }
    SUBCASE("zero signal has no SNR") {
        const std::vector<double> zeros(50, 0.0);
        CHECK_THROWS_AS(apply_noise(zeros, NoiseSpec{NoiseKind::Gaussian, 10.0, 1}), DegenerateInputError);
    }
    SUBCASE("spec validation") {
        CHECK_THROWS_AS(NoiseSpec({NoiseKind::Gaussian, std::numeric_limits<double>::infinity(), 0}).validate(),
                        ConfigError);
        CHECK_THROWS_AS(NoiseSpec({NoiseKind::None, 10.0, 0}).validate(), ConfigError);
    }
    SUBCASE("empirical SNR") {
        const auto v = sine_values(10000, 2);
        for (NoiseKind kind : {NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::SaltAndPepper})
            for (double snr : {5.0, 10.0, 15.0, 20.0, 30.0}) {
                const auto noisy = apply_noise(v, NoiseSpec{kind, snr, 3});
                CHECK(std::abs(empirical_snr_db(v, noisy) - snr) < 0.5);
            }
    }
    SUBCASE("uniform and gaussian share the noise variance") {
        const auto v = sine_values(100000, 4);
        const auto g = apply_noise(v, NoiseSpec{NoiseKind::Gaussian, 10.0, 5});
        const auto u = apply_noise(v, NoiseSpec{NoiseKind::Uniform, 10.0, 6});
        std::vector<double> dg(v.size()), du(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            dg[i] = g[i] - v[i];
            du[i] = u[i] - v[i];
        }
        const double vg = variance(dg), vu = variance(du);
        CHECK(std::abs(vg - vu) < 0.02 * vg);
        const double target = signal_power(v) / 10.0;
        for (const auto* d : {&dg, &du}) {
            const double mean = std::accumulate(d->begin(), d->end(), 0.0) / static_cast<double>(d->size());
            CHECK(std::abs(mean) < 3.0 * std::sqrt(target / static_cast<double>(d->size())));
        }
    }
    SUBCASE("salt and pepper writes extremes only") {
        const auto v = sine_values(2000, 7);
        const auto noisy = apply_noise(v, NoiseSpec{NoiseKind::SaltAndPepper, 10.0, 8});
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        std::size_t changed = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (noisy[i] == v[i]) continue;
            ++changed;
            CHECK((noisy[i] == *lo || noisy[i] == *hi));
        }
        CHECK(changed > 0);
        CHECK(changed < v.size());
    }
}

TEST_CASE("datasets") {
    const TestFunction f = make_function(FunctionKind::Oscillatory);
    SUBCASE("noiseless targets are bit-exact") {
        const Dataset d = sample_dataset(f, 200, NoiseSpec{}, 0.2, 1);
        CHECK(d.noisy == d.clean);
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.clean[i] == f(d.inputs[i]));
    }
    SUBCASE("gaussian 10 dB on 10000 samples") {
        const Dataset d = sample_dataset(f, 10000, NoiseSpec{NoiseKind::Gaussian, 10.0, 2}, 0.2, 3);
        CHECK(std::abs(empirical_snr_db(d.clean, d.noisy) - 10.0) < 0.5);
    }
    SUBCASE("split follows the floor convention") {
        for (std::size_t n : {10u, 11u, 99u, 256u})
            for (double frac : {0.1, 0.2, 0.35}) {
                const Dataset d = sample_dataset(f, n, NoiseSpec{}, frac, 4);
                const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac));
                CHECK(d.validation.size() == n_val);
                CHECK(d.train.size() + d.validation.size() == n);
                std::vector<int> seen(n, 0);
                for (std::size_t i : d.train) ++seen[i];
                for (std::size_t i : d.validation) ++seen[i];
                for (int s : seen) CHECK(s == 1);
            }
    }
    SUBCASE("inputs stay in the domain, noise never touches them") {
        const TestFunction heat = make_function(FunctionKind::Heat2D);
        const Dataset a = sample_dataset(heat, 300, NoiseSpec{}, 0.2, 5);
        const Dataset b = sample_dataset(heat, 300, NoiseSpec{NoiseKind::Uniform, 5.0, 9}, 0.2, 5);
        CHECK(a.inputs == b.inputs);
        CHECK(a.clean == b.clean);
        for (const auto& x : a.inputs) {
            REQUIRE(x.size() == 2);
            for (double v : x) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
    SUBCASE("determinism") {
        const NoiseSpec noise{NoiseKind::SaltAndPepper, 15.0, 11};
        const Dataset a = sample_dataset(f, 500, noise, 0.2, 12);
        const Dataset b = sample_dataset(f, 500, noise, 0.2, 12);
        const Dataset c = sample_dataset(f, 500, noise, 0.2, 13);
        CHECK(a.inputs == b.inputs);
        CHECK(a.noisy == b.noisy);
        CHECK(a.inputs != c.inputs);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(sample_dataset(f, 9, NoiseSpec{}, 0.2, 1), ConfigError);
        CHECK_THROWS_AS(sample_dataset(f, 100, NoiseSpec{}, 0.0, 1), ConfigError);
        CHECK_THROWS_AS(sample_dataset(f, 100, NoiseSpec{}, 1.0, 1), ConfigError);
    }
    SUBCASE("csv round trip") {
        const Dataset d = sample_dataset(make_function(FunctionKind::Heat2D), 64,
                                         NoiseSpec{NoiseKind::Gaussian, 20.0, 1}, 0.25, 6);
        std::stringstream ss;
        write_dataset_csv(ss, d);
        CHECK(ss.str().rfind("x1,x2,y_clean,y_noisy,split\n", 0) == 0);
        const Dataset r = read_dataset_csv(ss);
        CHECK(r.dimension == 2);
        CHECK(r.inputs == d.inputs);
        CHECK(r.clean == d.clean);
        CHECK(r.noisy == d.noisy);
        CHECK(r.train == d.train);
        CHECK(r.validation == d.validation);

        std::stringstream bad("x1,y_clean,y_noisy,split\n0.5,1,abc,train\n");
        CHECK_THROWS_AS(read_dataset_csv(bad), FormatError);
        std::stringstream header("a,b\n");
        CHECK_THROWS_AS(read_dataset_csv(header), FormatError);
    }
}

}
