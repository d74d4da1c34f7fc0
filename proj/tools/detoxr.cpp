#include "detoxr/cli.hpp"

int main(int argc, char** argv) { return detoxr::cli::dispatch(argc, argv); }
