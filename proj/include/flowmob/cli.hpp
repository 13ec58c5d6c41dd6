#pragma once

#include <iosfwd>

namespace flowmob {

/// Entry point of the `flowmob` tool. Subcommands: ingest, synth, train,
/// transfer, eval, predict, gradcheck. Returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace flowmob
