#include "commands.hpp"

int main(int argc, char** argv) { return quantart::cli::run(argc, argv); }
