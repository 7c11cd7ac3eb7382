#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ebscore {

enum ExitCode : int {
  kExitSuccess = 0,
  /// A declared rate or lemma check failed, or a run did not complete.
  kExitAssertion = 1,
  kExitParameter = 2,
  kExitIo = 3,
};

/// Runs the command line `args` (without the program name). Reports go to
/// `out`, diagnostics to `err`; returns an ExitCode.
///
///   estimate | rate-sweep | hellinger-sweep | lemma-suite | lower-bound | ddpm
///   --config FILE  --set key=value ...  --seed N  --out DIR  --threads N
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebscore
