// SPDX-License-Identifier: Apache-2.0
#pragma once

// Runs the protoedit executable as a child process and captures its output.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace protoedit::testing {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// `scratch` receives the redirected stdin/stdout/stderr files.
inline CliResult run_cli(const std::vector<std::string>& args, const std::filesystem::path& scratch,
                         const std::string& input = {}) {
  const auto in = scratch / "cli.stdin", out = scratch / "cli.stdout", err = scratch / "cli.stderr";
  std::ofstream(in) << input;
  std::string cmd = shell_quote(PROTOEDIT_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " <" + shell_quote(in.string()) + " >" + shell_quote(out.string()) + " 2>" +
         shell_quote(err.string());
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = raw == -1 ? -1 : WEXITSTATUS(raw);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace protoedit::testing
