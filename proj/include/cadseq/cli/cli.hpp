#pragma once

#include <string>
#include <vector>

namespace cadseq::cli {

// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // validate found invalid records
inline constexpr int kExitError = 2;

// Runs `cadseq <subcommand> ...`; args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace cadseq::cli
