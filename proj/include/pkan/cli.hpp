#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pkan {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitDivergence = 3,
    kExitCorrupt = 4,
};

// Environment variable naming the default output root.
inline constexpr const char* kOutputRootVariable = "PKAN_OUT_ROOT";

// Entry point of the pkan command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pkan
