#include "hamopt/cli.hpp"

int main(int argc, char** argv) { return hamopt::cli::run(argc, argv); }
