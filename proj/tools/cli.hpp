#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ocumap::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,           // bad flags or invalid configuration values
  kMissingInput = 2,    // input file missing, unreadable or malformed
  kDegenerate = 3,      // geometry too degenerate to fit
  kUnwritable = 4,      // output directory or file could not be written
  kInternal = 5,        // anything else
};

// Runs the `ocumap` command line. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace ocumap::cli
