#pragma once

#include <string>
#include <vector>

namespace dispute {

// Full command dispatch; args excludes the program name. Returns the process
// exit code: 0 success, 1 data or validation failure, 2 usage error.
int run(const std::vector<std::string>& args);

// Renders a report JSON document (from analyze/evaluate/compare/stats) as a
// markdown table text. Reals are printed with 4 decimals; PMI rows are
// sorted descending with undefined entries last.
std::string render_report(const std::string& report_json);

}  // namespace dispute
