#pragma once

namespace loraflow::cli {

/// Command-line front door. Subcommands: gen-data, init, train, demod,
/// denoise, sweep, report. Returns 0 on success, 2 on flag errors (usage on
/// stderr), 1 on runtime failures.
int run(int argc, const char* const* argv);

}  // namespace loraflow::cli
