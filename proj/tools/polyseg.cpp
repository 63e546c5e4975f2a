#include "polyseg/cli.hpp"

int main(int argc, char** argv) { return polyseg::cli::run_command(argc, argv); }
