#include "tfh/cli.hpp"

int main(int argc, char **argv) { return tfh::cli::run(argc, argv); }
