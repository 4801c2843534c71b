#include <iostream>

#include "extax/pipeline/commands.hpp"

int main(int argc, char** argv) { return extax::run_command(argc, argv, std::cout, std::cerr); }
