#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bmot {

// Exit codes: 0 ok, 1 usage or input error, 2 numerical failure (or an
// unconverged fit under --strict).
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace bmot
