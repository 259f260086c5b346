#include "pdmd/cli.hpp"

int main(int argc, char** argv) { return pdmd::cli::run_cli(argc, argv); }
