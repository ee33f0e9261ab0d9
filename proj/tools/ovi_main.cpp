#include "ovi/cli.hpp"

int main(int argc, char** argv) { return ovi::run_cli(argc, argv); }
