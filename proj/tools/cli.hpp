#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cqed::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,  // unclassified error, I/O
  kUsage = 2,
  kNumeric = 3,
  kTruncation = 4,
};

// Runs one subcommand; args exclude the program name. Messages go to err,
// file paths written go to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cqed::cli
