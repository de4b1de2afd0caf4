#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ttyard/nn/grad_check.hpp"

namespace ttyard::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0;
    double tolerance = 0;
    std::string detail;
};

struct GradientCase {
    std::string kind;
    nn::GradCheckReport report;
};

/// Central-difference check of every layer kind at f64 on small random instances.
std::vector<GradientCase> gradient_suite(std::uint64_t seed, const nn::GradCheckOptions& opts = {});

struct VerifyOptions {
    std::uint64_t seed = 1;
    /// Deliberately break one TT core before validating (exercises the failure path).
    bool corrupt_core_shape = false;
};

/// Every module invariant as a named check with its tolerance.
std::vector<CheckResult> run_all(const VerifyOptions& opts);

/// One line per check; returns true when all passed.
bool print_results(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace ttyard::verify
