#include "sanet/cli.hpp"

int main(int argc, char** argv) { return sanet::run_cli(argc, argv); }
