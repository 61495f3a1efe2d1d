#pragma once

#include <string>
#include <vector>

namespace bifleet {

// Entry point behind the bifleet binary; separated so tests can drive the
// exact CLI surface in-process. args excludes the program name.
// Exit codes: 0 success, 1 failure, 2 usage error.
int dispatch(const std::vector<std::string>& args);

}  // namespace bifleet
