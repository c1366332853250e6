#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tsc {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 2;
inline constexpr int runtime_abort = 3;
} // namespace exit_code

// Entry point of the `tsclab` tool. `args` excludes the program name.
// Subcommands: gen-grid, synth-demand, run, train, eval, transfer.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace tsc
