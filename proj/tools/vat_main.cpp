#include "vat/cli.hpp"

int main(int argc, char** argv) { return vat::cli::dispatch(argc, argv); }
