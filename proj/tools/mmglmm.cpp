#include "mmglmm/cli.hpp"

int main(int argc, char** argv) { return mmglmm::run_command(argc, argv); }
