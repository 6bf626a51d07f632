#include "graph_phase/cli.hpp"

int main(int argc, char** argv) { return graph_phase::cli_main(argc, argv); }
