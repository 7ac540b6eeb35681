#include "sspsd/cli.hpp"

int main(int argc, char** argv) { return sspsd::cli::run(argc, argv); }
