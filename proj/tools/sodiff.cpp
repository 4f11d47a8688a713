// SPDX-License-Identifier: Apache-2.0
#include "sodiff/cli.hpp"

int main(int argc, char** argv) { return sodiff::cli::main_entry(argc, argv); }
