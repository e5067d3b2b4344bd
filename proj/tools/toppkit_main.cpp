#include "toppkit/cli.hpp"

int main(int argc, char** argv) { return toppkit::cli::cli_dispatch(argc, argv); }
