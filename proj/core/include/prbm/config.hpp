#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prbm/estimate.hpp"
#include "prbm/fields.hpp"
#include "prbm/simulate.hpp"

namespace prbm {

// Experiment description parsed from a JSON document. Parsing is strict:
// unknown keys are rejected with the JSON pointer of the offending entry.
// Top-level keys: d, boundary, sigma, phi, sim, experiment, output.
struct ExperimentConfig {
    // model
    int d = 1;
    std::string boundary_family = "power_blend";  // or "oscillating"
    double boundary_a = 1.0;
    double boundary_beta = 0.5;
    double boundary_x_b = 1.0;
    std::string sigma_kind = "constant_diagonal";
    double sigma1_sq = 1.0;
    double sigma2_sq = 1.0;
    std::string phi_kind = "unit_normal";  // or "scaled_normal"
    double s0 = 1.0;
    double c0 = 1.0;

    // sim
    SimConfig sim;
    std::size_t paths = 1000;  // config key "N"

    // experiment
    std::string mode = "classify";
    std::vector<double> levels;
    Point start{2.0, 0.0};
    std::vector<double> times;
    std::vector<double> horizons;
    int x_bins = 64, r_bins = 16;
    std::optional<Window> window;
    double burn_in = 0.0;
    int replicas = 1;
    bool negative_control = false;
    std::optional<double> gamma;  // verify-lyapunov / drift-test
    std::string transform;        // drift-test
    std::vector<double> checkpoints;

    // in-config assertions (mode-specific); empty = report only
    std::optional<double> assert_slope_lo, assert_slope_hi;
    std::optional<int> assert_max_violations;
    std::optional<bool> assert_stabilized;
    std::optional<double> assert_decay_below;
    std::optional<double> assert_max_over_min;
    std::optional<bool> assert_pass;
    std::optional<std::string> assert_phase;

    // output
    std::string output_directory = "out";
    std::vector<std::string> output_formats{"json", "csv"};

    Model build_model() const;
    // canonical serialisation: defaults materialised, keys sorted
    std::string canonical_json() const;
    std::string manifest_hash() const;  // FNV-1a 64 over the canonical form, hex
};

ExperimentConfig parse_config(const std::string& json_text);

}  // namespace prbm
