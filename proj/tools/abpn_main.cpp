#include "cli.hpp"

int main(int argc, char** argv) { return abpn::cli::run(argc, argv); }
