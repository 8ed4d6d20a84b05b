#include "diagmeta/cli.hpp"

int main(int argc, char** argv) { return diagmeta::run_cli(argc, argv); }
