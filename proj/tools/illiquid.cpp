#include "illiquid/cli.hpp"

int main(int argc, char** argv) { return illiquid::cli::run(argc, argv); }
