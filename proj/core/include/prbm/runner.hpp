#pragma once

#include <string>

#include "prbm/config.hpp"

namespace prbm {

inline constexpr const char* kVersion = "0.1.0";

struct RunResult {
    int exit_code = 0;  // 0: pass, 1: statistical fail, 2: I/O error
    std::string report_json;
    std::string summary;
};

// Executes the configured experiment and writes report.json, the curve CSVs
// and manifest.json under cfg.output_directory.
RunResult run_experiment(const ExperimentConfig& cfg, int threads, bool verbose = false);

}  // namespace prbm
