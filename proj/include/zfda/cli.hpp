#pragma once

#include <string>
#include <vector>

namespace zfda::cli {

// Exit codes: 0 success, 1 config/usage error, 2 data error, 3 divergence,
// 4 digest mismatch, 5 shape mismatch, 10 internal error.
int run(const std::vector<std::string>& args);

}  // namespace zfda::cli
