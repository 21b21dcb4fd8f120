#include "spoter/cli.hpp"

int main(int argc, char** argv) { return spoter::cli::run(argc, argv); }
