#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdadda::cli {

// Exit codes: 0 success, 1 runtime failure, 2 unknown flag or bad usage,
// 3 validation failure. Errors are reported as one line on `err`:
//   sdadda: error[<usage|validation|runtime>]: <message>
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace sdadda::cli
