#pragma once

namespace vat::cli {

// Entry point behind the `vat` binary. Returns the process exit code:
// 0 success, 1 command failure (one-line JSON error on stderr), 2 usage.
int dispatch(int argc, char** argv);

}  // namespace vat::cli
