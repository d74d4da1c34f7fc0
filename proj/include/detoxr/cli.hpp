#ifndef DETOXR_CLI_HPP
#define DETOXR_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace detoxr::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kUsageError = 2 };

// Subcommands: synth, split, score, eval, compare, train-toy, train-mlp,
// serve. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace detoxr::cli

#endif  // DETOXR_CLI_HPP
