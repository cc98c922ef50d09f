#include "cli.hpp"

int main(int argc, char** argv) { return emoforge::cli::run_cli(argc, argv); }
