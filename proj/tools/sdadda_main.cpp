#include "sdadda/cli.hpp"

int main(int argc, char** argv) { return sdadda::cli::run(argc, argv); }
