#pragma once

#include <iosfwd>

namespace fam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `fam` tool: train, eval, export-traj, export-emb, plot.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fam::cli
