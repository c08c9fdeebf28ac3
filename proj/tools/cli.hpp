#ifndef HEADFUSE_TOOLS_CLI_HPP_
#define HEADFUSE_TOOLS_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace headfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Runs one subcommand. `args` excludes the program name. The one-line JSON
// summary goes to `out`; diagnostics go to `err` and the stderr logger.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace headfuse::cli

#endif  // HEADFUSE_TOOLS_CLI_HPP_
