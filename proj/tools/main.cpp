#include "hsphere/cli.hpp"

int main(int argc, char** argv) { return hsphere::cli::run(argc, argv); }
