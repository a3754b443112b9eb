#include "cli.hpp"

int main(int argc, char** argv) { return sandtree::cli::cli_main(argc, argv); }
