#include "cli.hpp"

int main(int argc, char** argv) { return gazesyn::cli::cli_main(argc, argv); }
