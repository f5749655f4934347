#pragma once

#include <exception>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "config.hpp"

namespace nnreach::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInternal = 3;

/// Subcommand names in pipeline order.
std::span<const std::string_view> subcommands();

/// Configuration keys a subcommand accepts.
std::span<const std::string_view> known_keys(std::string_view subcommand);

/// Runs one subcommand. Artifacts go under `out` (default "out"); a short key=value summary is
/// written to `log`. Returns kExitPass or kExitFail; errors are thrown.
int run_subcommand(std::string_view subcommand, const Config& cfg, std::ostream& log);

/// Exit code for an exception escaping run_subcommand.
int exit_code_for(const std::exception& e);

}  // namespace nnreach::cli
