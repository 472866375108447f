// Catch2 amalgamated implementation + default main, compiled once.
#include <catch2/catch_amalgamated.cpp>
