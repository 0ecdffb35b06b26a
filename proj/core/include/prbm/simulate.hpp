#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "prbm/fields.hpp"
#include "prbm/geometry.hpp"
#include "prbm/lyapunov.hpp"

namespace prbm {

struct SimConfig {
    double dt = 1e-3;
    double horizon = 1.0;
    std::uint64_t master_seed = 0;
    int max_substeps = 12;          // reflection bracket expansions before fallback
    std::uint64_t record_stride = 0;  // 0: keep no trajectory samples

    void validate() const;
};

enum class PathStatus { Running, StoppedByRule, NumericalOverflow };

struct PathState {
    double t = 0.0;
    Point z;
    double local_time = 0.0;
    std::uint64_t step_count = 0;  // also the RNG counter
    PathStatus status = PathStatus::Running;
};

enum class StopKind { ReturnBelow, PassAbove, EnterBelow, ExitInterval };
enum class StopFunctional { XCoordinate, LyapunovValue };

// A stopping rule on a scalar functional of the path. ReturnBelow/PassAbove
// act on the axial coordinate; EnterBelow and ExitInterval may monitor a
// Lyapunov value instead.
struct StoppingSpec {
    StopKind kind = StopKind::ReturnBelow;
    double level = 1.0;      // threshold (upper level for ExitInterval)
    double level_low = 0.0;  // lower level for ExitInterval
    StopFunctional functional = StopFunctional::XCoordinate;
    std::shared_ptr<const LyapunovFunction> lyapunov;  // used by LyapunovValue

    static StoppingSpec return_below(double r);
    static StoppingSpec pass_above(double r);
    static StoppingSpec enter_below(double level, std::shared_ptr<const LyapunovFunction> f);
    static StoppingSpec exit_interval(double lo, double hi,
                                      std::shared_ptr<const LyapunovFunction> f = nullptr);

    std::string kind_name() const;
};

struct HitRecord {
    std::size_t spec_index = 0;
    double time = 0.0;
    bool censored = false;
    int side = 0;  // ExitInterval: -1 low exit, +1 high exit
};

struct StepDiagnostics {
    std::uint64_t steps = 0;
    std::uint64_t reflections = 0;
    std::uint64_t fallbacks = 0;

    void merge(const StepDiagnostics& o) {
        steps += o.steps;
        reflections += o.reflections;
        fallbacks += o.fallbacks;
    }
};

struct TrajectorySample {
    double t;
    Point z;
    double local_time;
};

struct TrajectoryRecord {
    std::vector<TrajectorySample> samples;
    std::vector<HitRecord> hits;
    PathState final_state;
    StepDiagnostics diagnostics;

    // convenience: the resolved (or censored) time of stop i
    double hit_time(std::size_t spec_index) const;
    bool hit_censored(std::size_t spec_index) const;
};

// One reflected Euler step. The proposal is z + Sigma^{1/2}(z) sqrt(dt) xi;
// a proposal leaving the domain is corrected along phi evaluated at the
// boundary crossing point, and the correction length is the local-time
// increment.
PathState step(const PathState& s, const Model& m, const SimConfig& cfg,
               std::span<const double> noise);

TrajectoryRecord run_path(const Model& m, const SimConfig& cfg, const Point& start,
                          const std::vector<StoppingSpec>& stops, std::uint64_t path_id = 0);

struct EnsembleOptions {
    int threads = 1;
    std::vector<double> snapshot_times;  // record the state at these times
};

// N independent paths; path i draws from a stream derived from
// (master_seed, i), so the result is identical for any thread count.
std::vector<TrajectoryRecord> run_ensemble(const Model& m, const SimConfig& cfg,
                                           const Point& start,
                                           const std::vector<StoppingSpec>& stops, std::size_t N,
                                           const EnsembleOptions& opts = {});

// One-dimensional comparison process dX = sigma1^2 (beta/beta_c) / (2X) dt
// + sigma1 dW, kept positive by a reflecting micro-barrier at sqrt(dt)/10.
// The record's points are one-dimensional.
TrajectoryRecord bessel_oracle_path(double beta, double beta_c, double sigma1,
                                    const SimConfig& cfg, double start,
                                    const std::vector<StoppingSpec>& stops,
                                    std::uint64_t path_id = 0);

std::vector<TrajectoryRecord> bessel_oracle_ensemble(double beta, double beta_c, double sigma1,
                                                     const SimConfig& cfg, double start,
                                                     const std::vector<StoppingSpec>& stops,
                                                     std::size_t N,
                                                     const EnsembleOptions& opts = {});

}  // namespace prbm
