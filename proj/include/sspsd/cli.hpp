#pragma once

namespace sspsd::cli {

/// Entry point for the `sspsd` command. Exit codes: 0 success, 1 config or
/// I/O failure, 2 non-finite training loss.
int run(int argc, const char* const* argv);

}  // namespace sspsd::cli
