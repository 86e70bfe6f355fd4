#include "mvfbsde/cli.hpp"

int main(int argc, char** argv) { return mvfbsde::cli_main(argc, argv); }
