#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfm/matrix.hpp"

namespace fedfm {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct CheckOptions {
    std::uint64_t seed = 2026;
    /// Test hook: the named check runs against a deliberately perturbed
    /// quantity and is expected to fail.
    std::string fault;
};

std::vector<std::string> check_names();

/// Runs the verification suite at small scale: gradient checks for every
/// loss, the anchor aggregation equivalence and optimality oracles, the
/// anchor-update monotonicity sweep, and the metric oracles.
std::vector<CheckResult> run_all_checks(const CheckOptions& opts);

/// Straight-line O(n^2) silhouette reference, independent of the library
/// implementation. Shared by the verification suite and the test oracles.
double silhouette_bruteforce_reference(const Matrix& features, const std::vector<int>& labels);

}  // namespace fedfm
