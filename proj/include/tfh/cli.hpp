#pragma once

#include "tfh/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace tfh::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Subcommands: train, evaluate, ablate, gen-synthetic, grad-check, export-report.
// Exit codes: 0 success, 1 validation error (bad flags, config or data), 2 runtime failure.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
int run(int argc, char **argv);

} // namespace tfh::cli
