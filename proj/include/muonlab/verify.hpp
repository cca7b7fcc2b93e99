#pragma once

#include <string>
#include <vector>

namespace muonlab {

struct SuiteResult {
    std::string name;
    bool ok = false;
    std::string report;  // structured text, one "check <name> pass|fail ..." line each
};

/// Suites: linalg, polar, spectral, theory, gradcheck, all.
SuiteResult run_suite(const std::string& name);

std::vector<std::string> suite_names();

}  // namespace muonlab
