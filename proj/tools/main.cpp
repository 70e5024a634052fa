/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <iostream>

#include "sizeaug/cli.hpp"

int main(int argc, char** argv) { return sizeaug::run_cli(argc, argv, std::cout, std::cerr); }
