// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "json.hpp"

namespace protoedit::cli {

/// Entry point for the `protoedit` command-line tool. Returns the process exit status.
int run(int argc, char** argv);

/// Every recognised config key with its default value.
nlohmann::json default_config();

}  // namespace protoedit::cli
