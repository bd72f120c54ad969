#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace realism {

inline constexpr const char* kVersion = "1.0.0";

/// Flat `key=value` configuration; '#' starts a comment line. Keys are the
/// long option names of the subcommands (e.g. `lambda=1e-4`, `layers=a,b`).
/// Options given on the command line take precedence.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Entry point of the `realism` command. `args` excludes the program name.
/// Results go to `out`; progress, effective configuration and errors go to
/// `err`. Failures print a single `error: <category>: <message>` line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace realism
