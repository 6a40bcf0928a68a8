#ifndef CPMTL_CLI_HPP_
#define CPMTL_CLI_HPP_

#include <iosfwd>

namespace cpmtl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Subcommands: train, sweep, eval, gradcheck, serve. Results go to `out`,
/// usage text and structured errors to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpmtl

#endif  // CPMTL_CLI_HPP_
