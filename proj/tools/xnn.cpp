#include "xnn/cli.hpp"

int main(int argc, char** argv) { return xnn::cli::main(argc, argv); }
