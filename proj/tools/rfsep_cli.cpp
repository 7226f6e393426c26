#include "rfsep/cli.hpp"

int main(int argc, char** argv) { return rfsep::cli::run(argc, argv); }
