#include "regmm/cli.hpp"

int main(int argc, char** argv) { return regmm::dispatch(argc, argv); }
