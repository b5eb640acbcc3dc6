#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flexlab::cli {

enum Exit : int { kPass = 0, kFail = 1, kParse = 2 };

// Runs one subcommand; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flexlab::cli
