#include "judgekit/cli.hpp"

int main(int argc, char** argv) { return judgekit::run_cli(argc, argv); }
