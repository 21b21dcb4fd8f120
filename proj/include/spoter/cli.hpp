#pragma once

#include <string>
#include <vector>

namespace spoter::cli {

// Subcommand entry points. Each parses its own flags and returns the
// process exit code: 0 success, 1 runtime failure, 2 usage/config error.
int cmd_train(const std::vector<std::string>& args);
int cmd_eval(const std::vector<std::string>& args);
int cmd_stats(const std::vector<std::string>& args);
int cmd_map(const std::vector<std::string>& args);
int cmd_selftest(const std::vector<std::string>& args);

// Dispatches the first argument as a subcommand.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace spoter::cli
