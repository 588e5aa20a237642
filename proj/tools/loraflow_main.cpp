#include "loraflow/cli.hpp"

int main(int argc, char** argv) { return loraflow::cli::run(argc, argv); }
