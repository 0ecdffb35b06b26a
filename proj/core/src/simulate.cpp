#include "prbm/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "prbm/errors.hpp"
#include "prbm/rng.hpp"
#include "stepper.hpp"

namespace prbm {

namespace {
constexpr double kHitTol = 1e-9;  // absolute tolerance for level comparisons
}

void SimConfig::validate() const {
    if (!(dt > 0.0)) throw config_error("sim.dt must be positive");
    if (!(horizon >= dt)) throw config_error("sim.horizon must be at least dt");
    if (max_substeps < 4) throw config_error("sim.max_substeps must be >= 4");
}

StoppingSpec StoppingSpec::return_below(double r) {
    return {StopKind::ReturnBelow, r, 0.0, StopFunctional::XCoordinate, nullptr};
}
StoppingSpec StoppingSpec::pass_above(double r) {
    return {StopKind::PassAbove, r, 0.0, StopFunctional::XCoordinate, nullptr};
}
StoppingSpec StoppingSpec::enter_below(double level, std::shared_ptr<const LyapunovFunction> f) {
    return {StopKind::EnterBelow, level, 0.0,
            f ? StopFunctional::LyapunovValue : StopFunctional::XCoordinate, std::move(f)};
}
StoppingSpec StoppingSpec::exit_interval(double lo, double hi,
                                         std::shared_ptr<const LyapunovFunction> f) {
    if (!(lo < hi)) throw config_error("exit interval needs level_low < level");
    return {StopKind::ExitInterval, hi, lo,
            f ? StopFunctional::LyapunovValue : StopFunctional::XCoordinate, std::move(f)};
}

std::string StoppingSpec::kind_name() const {
    switch (kind) {
        case StopKind::ReturnBelow: return "return_below";
        case StopKind::PassAbove: return "pass_above";
        case StopKind::EnterBelow: return "enter_below";
        case StopKind::ExitInterval: return "exit_interval";
    }
    return "?";
}

double TrajectoryRecord::hit_time(std::size_t spec_index) const {
    for (const auto& h : hits)
        if (h.spec_index == spec_index) return h.time;
    throw std::logic_error("no hit record for stop index");
}

bool TrajectoryRecord::hit_censored(std::size_t spec_index) const {
    for (const auto& h : hits)
        if (h.spec_index == spec_index) return h.censored;
    throw std::logic_error("no hit record for stop index");
}

namespace {

class StopMonitor {
public:
    StopMonitor(const std::vector<StoppingSpec>& specs) : specs_(&specs) {
        resolved_.assign(specs.size(), 0);
        prev_.assign(specs.size(), 0.0);
        unresolved_ = specs.size();
    }

    double value(const StoppingSpec& s, std::span<const double> z) const {
        if (s.functional == StopFunctional::XCoordinate) return z[0];
        return lyapunov_eval(*s.lyapunov, z);
    }

    void init(std::span<const double> z, std::vector<HitRecord>& hits) {
        for (std::size_t i = 0; i < specs_->size(); ++i) {
            const auto& s = (*specs_)[i];
            const double v = value(s, z);
            prev_[i] = v;
            int side = 0;
            bool hit = false;
            switch (s.kind) {
                case StopKind::ReturnBelow:
                case StopKind::EnterBelow:
                    hit = v <= s.level + kHitTol;
                    break;
                case StopKind::PassAbove:
                    hit = v >= s.level - kHitTol;
                    break;
                case StopKind::ExitInterval:
                    if (v <= s.level_low + kHitTol) { hit = true; side = -1; }
                    else if (v >= s.level - kHitTol) { hit = true; side = +1; }
                    break;
            }
            if (hit) {
                hits.push_back({i, 0.0, false, side});
                resolved_[i] = 1;
                --unresolved_;
            }
        }
    }

    void on_step(double t_prev, double t_new, std::span<const double> z,
                 std::vector<HitRecord>& hits) {
        for (std::size_t i = 0; i < specs_->size(); ++i) {
            if (resolved_[i]) continue;
            const auto& s = (*specs_)[i];
            const double v = value(s, z);
            const double vp = prev_[i];
            prev_[i] = v;
            double level = 0.0;
            int side = 0;
            bool hit = false;
            switch (s.kind) {
                case StopKind::ReturnBelow:
                case StopKind::EnterBelow:
                    if (v <= s.level + kHitTol) { hit = true; level = s.level; }
                    break;
                case StopKind::PassAbove:
                    if (v >= s.level - kHitTol) { hit = true; level = s.level; }
                    break;
                case StopKind::ExitInterval:
                    if (v <= s.level_low + kHitTol) { hit = true; level = s.level_low; side = -1; }
                    else if (v >= s.level - kHitTol) { hit = true; level = s.level; side = +1; }
                    break;
            }
            if (hit) {
                double th = t_new;
                if (std::abs(vp - v) > 0.0) {
                    const double lam = std::clamp((vp - level) / (vp - v), 0.0, 1.0);
                    th = t_prev + lam * (t_new - t_prev);
                }
                hits.push_back({i, th, false, side});
                resolved_[i] = 1;
                --unresolved_;
            }
        }
    }

    std::size_t unresolved() const { return unresolved_; }

    void censor(double horizon, std::vector<HitRecord>& hits) const {
        for (std::size_t i = 0; i < specs_->size(); ++i)
            if (!resolved_[i]) hits.push_back({i, horizon, true, 0});
    }

private:
    const std::vector<StoppingSpec>* specs_;
    std::vector<char> resolved_;
    std::vector<double> prev_;
    std::size_t unresolved_ = 0;
};

TrajectoryRecord run_path_impl(const Model& m, const SimConfig& cfg, const Point& start,
                               const std::vector<StoppingSpec>& stops, std::uint64_t path_id,
                               const std::vector<double>& snapshot_times) {
    detail::Stepper st(m, cfg, start, path_id);
    TrajectoryRecord rec;
    StopMonitor monitor(stops);
    monitor.init(start, rec.hits);

    const std::uint64_t n_steps =
        static_cast<std::uint64_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
    if (cfg.record_stride > 0) rec.samples.push_back({0.0, start, 0.0});

    std::size_t snap = 0;
    const bool has_stops = !stops.empty();
    bool stopped = has_stops && monitor.unresolved() == 0;

    while (!stopped && st.steps() < n_steps && st.advance()) {
        const double t_new = st.t();
        const double t_prev = t_new - cfg.dt;
        if (has_stops) {
            monitor.on_step(t_prev, t_new, st.z(), rec.hits);
            stopped = monitor.unresolved() == 0;
        }
        if (cfg.record_stride > 0 && st.steps() % cfg.record_stride == 0)
            rec.samples.push_back({t_new, Point(st.z()), st.local_time()});
        while (snap < snapshot_times.size() && snapshot_times[snap] <= t_new + 1e-12) {
            rec.samples.push_back({t_new, Point(st.z()), st.local_time()});
            ++snap;
        }
    }

    monitor.censor(cfg.horizon, rec.hits);
    rec.final_state.t = st.t();
    rec.final_state.z = st.z();
    rec.final_state.local_time = st.local_time();
    rec.final_state.step_count = st.steps();
    rec.final_state.status =
        st.status() == PathStatus::Running && stopped ? PathStatus::StoppedByRule : st.status();
    rec.diagnostics = st.diagnostics();
    return rec;
}

}  // namespace

PathState step(const PathState& s, const Model& m, const SimConfig& cfg,
               std::span<const double> noise) {
    if (s.status != PathStatus::Running)
        throw std::logic_error("step() requires a running path state");
    detail::Stepper st(m, cfg, s.z, 0);
    st.force_noise(noise);
    st.advance();
    PathState out;
    out.t = s.t + cfg.dt;
    out.z = st.z();
    out.local_time = s.local_time + st.local_time();
    out.step_count = s.step_count + 1;
    out.status = st.status();
    return out;
}

TrajectoryRecord run_path(const Model& m, const SimConfig& cfg, const Point& start,
                          const std::vector<StoppingSpec>& stops, std::uint64_t path_id) {
    return run_path_impl(m, cfg, start, stops, path_id, {});
}

namespace {

template <class RunOne>
std::vector<TrajectoryRecord> parallel_paths(std::size_t N, int threads, RunOne&& run_one) {
    std::vector<TrajectoryRecord> out(N);
    const int nt = std::max(1, threads);
    if (nt == 1) {
        for (std::size_t i = 0; i < N; ++i) out[i] = run_one(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= N) return;
            try {
                out[i] = run_one(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace

std::vector<TrajectoryRecord> run_ensemble(const Model& m, const SimConfig& cfg,
                                           const Point& start,
                                           const std::vector<StoppingSpec>& stops, std::size_t N,
                                           const EnsembleOptions& opts) {
    if (N < 1) throw config_error("ensemble needs N >= 1");
    std::vector<double> snaps = opts.snapshot_times;
    std::sort(snaps.begin(), snaps.end());
    return parallel_paths(N, opts.threads, [&](std::size_t i) {
        return run_path_impl(m, cfg, start, stops, i, snaps);
    });
}

TrajectoryRecord bessel_oracle_path(double beta, double beta_c, double sigma1,
                                    const SimConfig& cfg, double start,
                                    const std::vector<StoppingSpec>& stops,
                                    std::uint64_t path_id) {
    cfg.validate();
    if (!(start > 0.0)) throw domain_error("comparison process must start at x > 0");
    if (!(beta_c > 0.0) || !(sigma1 > 0.0))
        throw config_error("comparison process needs beta_c > 0 and sigma1 > 0");
    for (const auto& s : stops)
        if (s.functional != StopFunctional::XCoordinate)
            throw config_error("comparison process stops must monitor the coordinate");

    const double drift = 0.5 * sigma1 * sigma1 * (beta / beta_c);
    const double sqdt = std::sqrt(cfg.dt);
    const double x_min = sqdt / 10.0;
    const rng::PathStream stream(cfg.master_seed, path_id);

    TrajectoryRecord rec;
    StopMonitor monitor(stops);
    Point z{start};
    monitor.init(z, rec.hits);
    const std::uint64_t n_steps =
        static_cast<std::uint64_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
    if (cfg.record_stride > 0) rec.samples.push_back({0.0, z, 0.0});

    double x = start;
    std::uint64_t n = 0;
    bool stopped = !stops.empty() && monitor.unresolved() == 0;
    while (!stopped && n < n_steps) {
        const double xi = stream.normals(n, 0).z0;
        x += drift / x * cfg.dt + sigma1 * sqdt * xi;
        if (x < x_min) x = x_min;
        ++n;
        const double t_new = static_cast<double>(n) * cfg.dt;
        z[0] = x;
        if (!stops.empty()) {
            monitor.on_step(t_new - cfg.dt, t_new, z, rec.hits);
            stopped = monitor.unresolved() == 0;
        }
        if (cfg.record_stride > 0 && n % cfg.record_stride == 0)
            rec.samples.push_back({t_new, z, 0.0});
    }
    monitor.censor(cfg.horizon, rec.hits);
    rec.final_state.t = static_cast<double>(n) * cfg.dt;
    rec.final_state.z = z;
    rec.final_state.step_count = n;
    rec.final_state.status = stopped ? PathStatus::StoppedByRule : PathStatus::Running;
    rec.diagnostics.steps = n;
    return rec;
}

std::vector<TrajectoryRecord> bessel_oracle_ensemble(double beta, double beta_c, double sigma1,
                                                     const SimConfig& cfg, double start,
                                                     const std::vector<StoppingSpec>& stops,
                                                     std::size_t N, const EnsembleOptions& opts) {
    if (N < 1) throw config_error("ensemble needs N >= 1");
    return parallel_paths(N, opts.threads, [&](std::size_t i) {
        return bessel_oracle_path(beta, beta_c, sigma1, cfg, start, stops, i);
    });
}

}  // namespace prbm
