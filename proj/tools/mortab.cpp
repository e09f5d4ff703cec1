#include "mortab/cli.hpp"

int main(int argc, char **argv) { return mortab::cli::main(argc, argv); }
