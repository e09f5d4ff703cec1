#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mortab::cli {

/// Runs one command line (without the program name). Returns the exit code:
/// 0 ok, 1 numeric failure, 2 input or validation error.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

int main(int argc, char **argv);

} // namespace mortab::cli
