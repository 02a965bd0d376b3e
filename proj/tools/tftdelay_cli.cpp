#include "tftdelay/cli.hpp"

int main(int argc, char** argv) { return tftdelay::cli::run(argc, argv); }
