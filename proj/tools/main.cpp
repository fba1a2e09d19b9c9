#include "surfcast/cli.hpp"

int main(int argc, char** argv) { return surfcast::run_cli(argc, argv); }
