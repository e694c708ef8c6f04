#include "tvirt/cli.hpp"

int main(int argc, char** argv) { return tvirt::cli::run(argc, argv); }
