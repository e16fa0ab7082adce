#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace roicodec::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitModelMismatch = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitConfig = 4;
inline constexpr int kExitOther = 5;

// Runs one command. Errors are reported on `err` as a single line
// "error: <kind>: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace roicodec::cli
