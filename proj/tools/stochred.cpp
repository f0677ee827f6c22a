#include "stochred/cli.hpp"

int main(int argc, char** argv) { return stochred::cli::run(argc, argv); }
