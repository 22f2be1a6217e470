#include "dip/cli.hpp"

int main(int argc, char** argv) { return dip::cli::run(argc, argv); }
