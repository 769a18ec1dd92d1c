#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace knights::cli {

/// Process exit codes.
enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,  // a verification command ran but its check did not pass
    kIoError = 2,      // missing file, unreadable or malformed input
    kParamError = 3,   // bad flag, parameter or shape
};

/// Runs the `knights` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace knights::cli
