#include "lrnr/cli.hpp"

int main(int argc, char** argv) { return lrnr::run_cli(argc, argv); }
