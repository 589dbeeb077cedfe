#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace lcnet::app {

enum ExitCode : int {
  exit_ok = 0,
  exit_other = 1,
  exit_config = 2,
  exit_data = 3,
  exit_numeric = 4,
};

const std::vector<std::string>& command_names();

// Runs one command; errors propagate as lcnet exceptions.
void run_command(const std::string& command, const RunConfig& cfg, std::ostream& out);

// Full command line (argv[0] is the program name). Maps exceptions to exit codes and writes
// messages to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lcnet::app
