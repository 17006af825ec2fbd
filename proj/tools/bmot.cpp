#include "bmot/cli.hpp"

int main(int argc, char** argv) { return bmot::run_cli(argc, argv); }
