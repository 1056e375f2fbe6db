#include "cli.hpp"

int main(int argc, char** argv) { return ocumap::cli::run(argc, argv); }
