#include "tdboot/cli.hpp"

int main(int argc, char** argv) { return tdboot::cli_main(argc, argv); }
