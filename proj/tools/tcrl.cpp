#include "tcrl/cli.hpp"

int main(int argc, char** argv) { return tcrl::cli::run(argc, argv); }
