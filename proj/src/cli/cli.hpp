#pragma once

namespace abpn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2, kVerification = 3 };

/// Entry point of the `abpn` binary.
int run(int argc, char** argv);

}  // namespace abpn::cli
