#include "commands.hpp"

int main(int argc, char** argv) { return gridfield::cli::run(argc, argv); }
