#include "cppd/cli.hpp"

int main(int argc, char** argv) { return cppd::cli_main(argc, argv); }
