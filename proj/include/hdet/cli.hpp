#pragma once

#include <string>
#include <vector>

namespace hdet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `hdet` tool; args excludes the program name.
int cli_main(const std::vector<std::string>& args);

}  // namespace hdet
