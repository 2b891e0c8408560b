#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hierprobe/error.hpp"

namespace hierprobe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitWorker = 3;

/// 2 for configuration and input problems, 3 for worker failures, 1 otherwise.
int exit_code_for(ErrorCode code) noexcept;

/// The hierprobe command line. `args` includes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hierprobe
