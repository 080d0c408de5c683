#pragma once

#include <string>
#include <vector>

namespace ehrcvd::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

/// Runs one command line (args[0] is the program name). Never throws;
/// errors are logged and mapped to an exit code. The output directory is
/// --out, else $EHRCVD_OUT_DIR, else the config's output_dir.
int run(const std::vector<std::string>& args);

}  // namespace ehrcvd::cli
