#pragma once

namespace mvfbsde {

/// Entry point shared by the binary and the CLI tests. Subcommands:
/// solve, sample, validate, report. Returns a process exit status.
int cli_main(int argc, const char* const* argv);

} // namespace mvfbsde
