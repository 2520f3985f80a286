#pragma once

#include <string>
#include <vector>

namespace cgsta::cli {

// Full command surface: synth, train, eval, score, ablate, sweep, case.
// Returns the process exit code: 0 success, 1 usage/config error, 2 numeric
// failure.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace cgsta::cli
