#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ghostlab {

// Command-line entry point; args excludes argv[0]. Human output goes to
// `out`, diagnostics to `err`. Returns the process exit code: 0 ok,
// 2 config/usage error, 3 numeric error, 4 insufficient data.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace ghostlab
