#include "fusionfm/cli.hpp"

int main(int argc, char** argv) { return fusionfm::cli::run(argc, argv); }
