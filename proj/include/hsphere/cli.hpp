#ifndef HSPHERE_CLI_HPP
#define HSPHERE_CLI_HPP

namespace hsphere::cli {

/// Entry point behind the hsphere binary. Exit codes: 0 success, 2 bad
/// config or unreadable input, 3 a verification subcommand found failures.
int run(int argc, const char* const* argv);

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitCheckFailed = 3;

}  // namespace hsphere::cli

#endif  // HSPHERE_CLI_HPP
