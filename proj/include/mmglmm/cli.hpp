#pragma once

#include <string>
#include <vector>

namespace mmglmm {

// Exit status: 0 success, 1 usage or input validation, 2 numeric/model failure.
int run_command(const std::vector<std::string>& args);
int run_command(int argc, const char* const* argv);

inline constexpr const char* kOutDirEnv = "MMGLMM_OUT_DIR";

}  // namespace mmglmm
