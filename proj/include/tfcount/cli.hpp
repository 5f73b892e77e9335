#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tfcount {

constexpr const char* kBackendEnv = "TFCOUNT_BACKEND";

/// Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 backend unreachable.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tfcount
