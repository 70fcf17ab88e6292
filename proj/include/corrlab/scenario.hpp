#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace corrlab {

struct ReportEntry {
    std::string test;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct ScenarioInfo {
    std::string name;
    std::string reproduces;
};

// The seven runnable experiments.
std::vector<ScenarioInfo> list_scenarios();

struct RunOptions {
    bool strict = false;
    std::size_t workers = 1;
    std::string out_dir;  // overrides config "out_dir"
};

// Validates a config, runs the scenario, writes manifest.json, CSV artifacts
// and report.json under the output directory.  Exit codes: 0 ok,
// 2 validation failure, 3 failed check under --strict.
int run_scenario_file(const std::string& config_path, const RunOptions& opts);

// Validation only (exit code semantics as above).
int validate_scenario_file(const std::string& config_path, std::string* error_out = nullptr);

}  // namespace corrlab
