#pragma once

#include <string>
#include <vector>

namespace fedfm {

// Exit codes: 0 ok, 1 check/runtime failure, 2 configuration error.

int cmd_run(const std::string& config_path);

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_dir);

/// Runs the verification suite. config_path may be empty; when given, its
/// seed drives the randomized checks. fault (test hook) names a check whose
/// verified quantity is deliberately perturbed.
int cmd_check(const std::string& config_path, const std::string& fault);

}  // namespace fedfm
