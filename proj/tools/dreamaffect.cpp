#include "dreamaffect/cli.hpp"

int main(int argc, char** argv) { return dreamaffect::cli::run(argc, argv); }
