#include "cgsta/cli.hpp"

int main(int argc, char** argv) { return cgsta::cli::run_cli(argc, argv); }
