#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cvm::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kParseError = 2,
    kConvergenceError = 3,
    kFlagError = 4,
};

/// Entry point shared by the `cvm` binary and the tests. args[0] is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cvm::cli
