#pragma once
#include <string>
#include <vector>

namespace evf::cli {

// Entry point for the evf tool; args are argv[1:]. Returns the process exit
// status: 0 on success, 2 on configuration errors, 1 on anything else.
int run(const std::vector<std::string>& args);

}  // namespace evf::cli
