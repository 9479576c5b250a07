#pragma once

#include <CLI11.hpp>

namespace partloc::cli {

/// Registers every subcommand on `app`.
void register_commands(CLI::App& app);

}  // namespace partloc::cli
