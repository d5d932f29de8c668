#include "hwm/cli/cli.hpp"

int main(int argc, char** argv) { return hwm::cli::run(argc, argv); }
