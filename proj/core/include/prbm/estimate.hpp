#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prbm/exponents.hpp"
#include "prbm/lyapunov.hpp"
#include "prbm/simulate.hpp"

namespace prbm {

struct Duration {
    double value = 0.0;
    bool censored = false;
};

struct Window {
    double lo = 0.0, hi = 0.0;
};

// Log-log slope of a survival curve with censoring handled by the
// Kaplan-Meier product-limit estimator; uncertainty by nonparametric
// bootstrap over samples.
struct TailEstimate {
    double slope = 0.0;
    double stderr_boot = 0.0;
    Window window;
    double censored_fraction = 0.0;
    std::size_t n_effective = 0;  // uncensored sample count
    double curvature = 0.0;       // relative quadratic bowing of the fit
    bool poor_fit = false;
    bool window_too_heavy = false;  // predicted slope too shallow to resolve
    std::string note;
    std::string to_json() const;
};

TailEstimate survival_tail_slope(const std::vector<Duration>& durations, Window window,
                                 int grid_points = 20, int bootstrap_rounds = 200,
                                 std::uint64_t seed = 0x5eedb001);

struct MomentDiagnostic {
    double p = 0.0;
    std::vector<double> partial_means;  // over the first 1/4, 1/2 and all paths
};

struct ReturnTailReport {
    ExponentReport exponents;
    TailEstimate tail;
    double predicted_slope = 0.0;  // -m_c
    MomentDiagnostic stable_moment;     // p = m_c / 2: should be stable
    MomentDiagnostic divergent_moment;  // p = 2 m_c: growth trend expected
    StepDiagnostics diagnostics;
    std::string to_json() const;
};

// Ensemble of returns to level r; tail slope vs the predicted -m_c.
ReturnTailReport return_time_experiment(const Model& m, double r, const Point& start,
                                        std::size_t N, const SimConfig& cfg,
                                        std::optional<Window> window = std::nullopt,
                                        int threads = 1);

using XYSample = std::array<double, 2>;  // (x, ||y||)

struct OccupationReport {
    ExponentReport exponents;
    TailEstimate tail;
    double predicted_slope = 0.0;  // -2 M_c
    std::size_t samples = 0;
    int replicas = 1;
    double replica_slope_spread = 0.0;  // |slope_half1 - slope_half2| / pooled se
    std::shared_ptr<std::vector<XYSample>> occupation;  // post-burn-in samples
    StepDiagnostics diagnostics;
    std::string to_json() const;
};

// Long-run occupation measure of ||Z||; the ergodic average approximates the
// invariant distribution. cfg.horizon covers burn_in plus the recorded span;
// cfg.record_stride sets the sampling stride.
OccupationReport occupation_tail(const Model& m, const SimConfig& cfg, const Point& start,
                                 double burn_in, int replicas = 1,
                                 std::optional<Window> window = std::nullopt, int threads = 1);

struct TVCurve {
    std::vector<double> times;
    std::vector<double> tv_hat;
    int x_bins = 0, r_bins = 0;
    std::size_t reference_sample_size = 0;
    double noise_floor = 0.0;
    int violations = 0;  // increases beyond the noise floor
    double slope = 0.0;  // log tv vs log t where tv in [0.02, 0.5]
    int slope_points = 0;
    double predicted_rate = 0.0;  // -M_c
    std::string note;             // records the binned-TV downward bias
    std::string to_json() const;
};

// Binned total-variation distance between the time-t ensemble marginal and
// the long-run reference. Binned TV lower-bounds the true TV; the slope is a
// trend check, not a point estimate.
TVCurve tv_decay(const Model& m, const SimConfig& cfg, const Point& start, std::size_t N,
                 const std::vector<double>& times, int x_bins, int r_bins,
                 const std::vector<XYSample>& reference, int threads = 1);

struct BinnedTV {
    double tv = 0.0;
    double noise_floor = 0.0;
    int x_bins = 0, r_bins = 0;
};

// Diagnostic: binned TV of one sample against the reference-built histogram.
BinnedTV binned_tv_distance(const std::vector<XYSample>& reference,
                            const std::vector<XYSample>& sample, int x_bins, int r_bins);

struct TransienceReport {
    std::vector<double> horizons;
    std::vector<double> fractions;  // censored (never-returned) fraction
    std::vector<double> stderrs;
    bool nonincreasing = false;
    bool stabilized = false;  // last two horizons within 2 pooled stderrs
    double limit_estimate = 0.0;
    std::string to_json() const;
};

// Fraction of paths whose return time exceeds each horizon (independent
// ensembles per horizon). Requires a transient model unless the run is
// declared a negative control.
TransienceReport transience_fraction(const Model& m, double r, const Point& start, std::size_t N,
                                     const std::vector<double>& horizons, const SimConfig& base,
                                     bool negative_control = false, int threads = 1);

enum class DriftTransform {
    StoppedValue,              // kappa^gamma frozen on exit of (lo, hi); supermartingale
    StoppedPower,              // kappa^p frozen on exit of (lo, hi); submartingale
    CompensatedInverseSquare,  // kappa^{-2} - C int kappa^{-4} du, frozen on entry below lo
    StationaryDriftProcess,    // F + C1 int F_{gamma-2} - C2 int 1{x<=x2}; supermartingale
    IdentityMartingale,        // driftless scalar control, V = x, no stopping
};

std::string transform_name(DriftTransform t);

struct DriftTestSpec {
    DriftTransform transform = DriftTransform::StoppedValue;
    PolyLyapunov f;  // (w, exponent, k_w); kappa is always f_{w,1}(Z)
    double stop_lo = 0.0, stop_hi = 0.0;
    double C = 0.0;             // compensator constant
    DriftCertificate cert;      // for StationaryDriftProcess
};

struct DriftTestReport {
    std::string transform;
    bool submartingale = false;
    bool two_sided = false;
    std::vector<double> checkpoints;
    std::vector<double> increments;  // mean of paired checkpoint differences
    std::vector<double> stderrs;
    bool pass = false;
    std::string to_json() const;
};

// Monte Carlo check of the expected-increment sign of a transformed stopped
// process at the given checkpoints: supermartingales must not rise by more
// than 2 paired standard errors, submartingales must not fall by more.
DriftTestReport supermartingale_check(const Model& m, const DriftTestSpec& spec,
                                      const std::vector<double>& checkpoints, std::size_t N,
                                      const SimConfig& cfg, const Point& start, int threads = 1);

struct MomentReport {
    std::vector<double> times;
    std::vector<double> scaled_second_moment;  // E||Z_t||^2 / (1+t)
    std::vector<double> stderrs;
    double max_over_min = 0.0;
    std::string to_json() const;
};

// Diffusive-moment probe: E||Z_t||^2/(1+t) across checkpoints.
MomentReport moment_diffusivity(const Model& m, const SimConfig& cfg, const Point& start,
                                std::size_t N, const std::vector<double>& times, int threads = 1);

}  // namespace prbm
