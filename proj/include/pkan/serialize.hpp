#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pkan/network.hpp"
#include "pkan/trainer.hpp"

namespace pkan {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json network_to_json(const Network& net);
// Throws FormatError on any structural problem.
Network network_from_json(const nlohmann::json& j);

struct OptimizerSnapshot {
    double learning_rate = 0.0;
    std::uint64_t steps = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    bool operator==(const OptimizerSnapshot&) const = default;
};

OptimizerSnapshot snapshot_of(const AdamOptimizer& opt);

struct Checkpoint {
    Network net;
    std::optional<OptimizerSnapshot> optimizer;
};

std::string checkpoint_to_string(const Network& net, const OptimizerSnapshot* optimizer = nullptr);
Checkpoint checkpoint_from_string(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Network& net, const OptimizerSnapshot* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// One line of the round log stream (no trailing newline).
std::string round_log_line(const RoundLog& log);

// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);

}  // namespace pkan
