#include "prefmargin/cli.hpp"

int main(int argc, char** argv) { return prefmargin::cli::run(argc, argv); }
