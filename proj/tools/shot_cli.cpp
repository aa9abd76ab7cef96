#include "shot/commands.hpp"

int main(int argc, char** argv) { return shot::run_cli(argc, argv); }
