#include "clof/cli.hpp"

int main(int argc, char** argv) { return clof::cli::run(argc, argv); }
