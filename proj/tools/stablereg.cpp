#include "cli.hpp"

int main(int argc, char** argv) { return stablereg::cli::run(argc, argv); }
