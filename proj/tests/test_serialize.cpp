#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "fixtures.hpp"
#include "pkan/errors.hpp"
#include "pkan/serialize.hpp"

using namespace pkan;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("pkan_serialize_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("serialize") {

TEST_CASE("checkpoint round trip") {
    for (const auto& widths : fixture::gradient_architectures()) {
        for (bool fixed : {false, true}) {
            const auto xs = fixture::random_inputs(40, widths.front(), 17);
            Network net = fixture::random_network(widths, 17, fixed, xs);
            const Checkpoint back = checkpoint_from_string(checkpoint_to_string(net));
            CHECK(back.net == net);
            CHECK_FALSE(back.optimizer.has_value());
            Network copy = back.net;
            for (const auto& x : xs) {
                const auto a = net.evaluate(x);
                const auto b = copy.evaluate(x);
                for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-12);
            }
            // stored splines of fixed edges come back too
            for (const auto& e : net.edges()) {
                if (!e.is_fixed()) continue;
                Network a = net, b = back.net;
                a.revert_edge(e.id);
                b.revert_edge(e.id);
                CHECK(a == b);
            }
        }
    }
}

TEST_CASE("optimizer state") {
    const auto xs = fixture::random_inputs(20, 2, 3);
    Network net = fixture::random_network({2, 4, 1}, 3, true, xs);
    AdamOptimizer opt(0.003);
    opt.reset(net);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int s = 0; s < 7; ++s) {
        std::vector<double> g(net.parameter_count());
        for (double& v : g) v = n01(rng);
        opt.step(net, g);
    }
    const OptimizerSnapshot snap = snapshot_of(opt);
    CHECK(snap.steps == 7);
    CHECK(snap.learning_rate == 0.003);
    const Checkpoint back = checkpoint_from_string(checkpoint_to_string(net, &snap));
    REQUIRE(back.optimizer.has_value());
    CHECK(*back.optimizer == snap);

    AdamOptimizer restored(snap.learning_rate);
    restored.restore(back.net, back.optimizer->first_moment, back.optimizer->second_moment, back.optimizer->steps);
    Network a = net, b = back.net;
    std::vector<double> g(net.parameter_count(), 0.25);
    opt.step(a, g);
    restored.step(b, g);
    CHECK(a == b);

    // a moment vector of the wrong length is rejected
    OptimizerSnapshot wrong = snap;
    wrong.first_moment.pop_back();
    wrong.second_moment.pop_back();
    CHECK_THROWS_AS(checkpoint_from_string(checkpoint_to_string(net, &wrong)), FormatError);
}

TEST_CASE("corrupt checkpoints") {
    const auto xs = fixture::random_inputs(10, 1, 9);
    const Network net = fixture::random_network({1, 2, 1}, 9, true, xs);
    const std::string text = checkpoint_to_string(net);
    CHECK_THROWS_AS(checkpoint_from_string(text.substr(0, text.size() / 2)), FormatError);
    CHECK_THROWS_AS(checkpoint_from_string(""), FormatError);
    CHECK_THROWS_AS(checkpoint_from_string("{}"), FormatError);
    CHECK_THROWS_AS(checkpoint_from_string("[1, 2, 3]"), FormatError);

    auto j = nlohmann::json::parse(text);
    auto bump = j;
    bump["version"] = kCheckpointVersion + 1;
    CHECK_THROWS_AS(checkpoint_from_string(bump.dump()), FormatError);
    auto other = j;
    other["format"] = "something-else";
    CHECK_THROWS_AS(checkpoint_from_string(other.dump()), FormatError);
    auto edges = j;
    edges["network"]["edges"].erase(0);
    CHECK_THROWS_AS(checkpoint_from_string(edges.dump()), FormatError);
    auto shape = j;
    shape["network"]["architecture"] = nlohmann::json::array({1});
    CHECK_THROWS_AS(checkpoint_from_string(shape.dump()), FormatError);
}

TEST_CASE("files") {
    const auto dir = scratch_dir("files");
    const auto xs = fixture::random_inputs(10, 2, 4);
    const Network net = fixture::random_network({2, 4, 1}, 4, false, xs);
    const auto path = dir / "model.json";
    save_checkpoint(path, net);
    CHECK(load_checkpoint(path).net == net);
    // nothing but the target is left behind
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir)) ++files;
    CHECK(files == 1);

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), FormatError);
    {
        std::ofstream out(dir / "truncated.json");
        const std::string text = checkpoint_to_string(net);
        out << text.substr(0, text.size() - 10);
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "truncated.json"), FormatError);

    atomic_write(dir / "note.txt", "first");
    atomic_write(dir / "note.txt", "second");
    std::ifstream in(dir / "note.txt");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body == "second");
    std::filesystem::remove_all(dir);
}

}
