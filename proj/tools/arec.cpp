#include "arec/cli/commands.hpp"

int main(int argc, char** argv) { return arec::cli::run_cli(argc, argv); }
