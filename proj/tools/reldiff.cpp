#include "reldiff/cli.hpp"

int main(int argc, char** argv) { return reldiff::run_cli(argc, argv); }
