// SPDX-License-Identifier: Apache-2.0
#include "protoedit/cli.hpp"

int main(int argc, char** argv) { return protoedit::cli::run(argc, argv); }
