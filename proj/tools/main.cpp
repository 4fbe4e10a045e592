#include "creaseforge/cli.hpp"

int main(int argc, char** argv) { return creaseforge::cli_dispatch(argc, argv); }
