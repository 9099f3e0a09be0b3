#include "recurctl/cli.hpp"

int main(int argc, char** argv) { return recurctl::cli::run(argc, argv); }
