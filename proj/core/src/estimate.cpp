#include "prbm/estimate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "prbm/errors.hpp"
#include "prbm/rng.hpp"
#include "stepper.hpp"

namespace prbm {

namespace {

// Kaplan-Meier product-limit curve over (value, censored) pairs sorted by
// value; optional nonnegative integer weights support the bootstrap without
// re-sorting. Ties resolve deaths before censorings.
struct KMCurve {
    std::vector<double> times;     // event (uncensored) times
    std::vector<double> survival;  // S after each event time

    double eval(double t) const {
        // S is right-continuous; find last event time <= t
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 1.0;
        return survival[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

KMCurve km_curve(const std::vector<Duration>& sorted, const std::vector<std::uint32_t>* weights) {
    KMCurve c;
    double at_risk = 0.0;
    if (weights) {
        for (std::uint32_t w : *weights) at_risk += w;
    } else {
        at_risk = static_cast<double>(sorted.size());
    }
    double S = 1.0;
    std::size_t i = 0;
    const std::size_t n = sorted.size();
    while (i < n) {
        const double v = sorted[i].value;
        double deaths = 0.0, losses = 0.0;
        while (i < n && sorted[i].value == v) {
            const double w = weights ? static_cast<double>((*weights)[i]) : 1.0;
            (sorted[i].censored ? losses : deaths) += w;
            ++i;
        }
        if (deaths > 0.0 && at_risk > 0.0) {
            S *= 1.0 - deaths / at_risk;
            c.times.push_back(v);
            c.survival.push_back(S);
        }
        at_risk -= deaths + losses;
    }
    return c;
}

struct SlopeFit {
    double slope = 0.0;
    double curvature = 0.0;
    int points = 0;
};

SlopeFit loglog_slope(const KMCurve& c, const Window& w, int grid_points) {
    SlopeFit fit;
    std::vector<double> us, vs;
    const double llo = std::log(w.lo), lhi = std::log(w.hi);
    for (int k = 0; k < grid_points; ++k) {
        const double u = llo + (lhi - llo) * k / (grid_points - 1);
        const double S = c.eval(std::exp(u));
        if (S <= 0.0 || S >= 1.0) continue;
        us.push_back(u);
        vs.push_back(std::log(S));
    }
    fit.points = static_cast<int>(us.size());
    if (fit.points < 2) return fit;
    const double n = static_cast<double>(us.size());
    const double mu = std::accumulate(us.begin(), us.end(), 0.0) / n;
    const double mv = std::accumulate(vs.begin(), vs.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < us.size(); ++i) {
        sxx += (us[i] - mu) * (us[i] - mu);
        sxy += (us[i] - mu) * (vs[i] - mv);
    }
    if (sxx <= 0.0) return fit;
    fit.slope = sxy / sxx;

    // curvature: relative disagreement of the half-window slopes; a power law
    // gives 0 up to noise, an exponential bows strongly
    if (us.size() >= 4) {
        const std::size_t half = us.size() / 2;
        auto half_slope = [&](std::size_t lo, std::size_t hi) {
            double hu = 0.0, hv = 0.0;
            for (std::size_t i = lo; i < hi; ++i) hu += us[i], hv += vs[i];
            const double nn = static_cast<double>(hi - lo);
            hu /= nn;
            hv /= nn;
            double xx = 0.0, xy = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                xx += (us[i] - hu) * (us[i] - hu);
                xy += (us[i] - hu) * (vs[i] - hv);
            }
            return xx > 0.0 ? xy / xx : 0.0;
        };
        const double s1 = half_slope(0, half);
        const double s2 = half_slope(half, us.size());
        fit.curvature = std::abs(s2 - s1) / std::max(std::abs(s1) + std::abs(s2), 1e-9);
    }
    return fit;
}

}  // namespace

TailEstimate survival_tail_slope(const std::vector<Duration>& durations, Window window,
                                 int grid_points, int bootstrap_rounds, std::uint64_t seed) {
    const std::size_t N = durations.size();
    if (N < 1000) throw insufficient_data_error("survival tail slope needs >= 1000 samples");

    std::vector<Duration> sorted = durations;
    std::sort(sorted.begin(), sorted.end(),
              [](const Duration& a, const Duration& b) { return a.value < b.value; });

    std::size_t uncensored = 0;
    for (const auto& d : sorted) uncensored += d.censored ? 0 : 1;
    if (uncensored == 0) throw insufficient_data_error("all samples censored");

    TailEstimate est;
    est.censored_fraction = 1.0 - static_cast<double>(uncensored) / N;
    est.n_effective = uncensored;

    const KMCurve curve = km_curve(sorted, nullptr);

    // clamp the window into the resolvable range: above the first events,
    // below the point where fewer than 5% remain
    double lo = std::max(window.lo, curve.times.empty() ? window.lo : curve.times.front());
    double hi = window.hi;
    for (std::size_t i = curve.times.size(); i-- > 0;) {
        if (curve.survival[i] >= 0.05) {
            if (curve.times[i] < hi) {
                hi = curve.times[i];
                est.note = "window upper end capped at the 5% survival time; ";
            }
            break;
        }
    }
    if (!(hi > lo)) throw insufficient_data_error("empty tail window after clamping");
    est.window = {lo, hi};

    std::size_t above = 0;
    for (const auto& d : sorted)
        if (!d.censored && d.value >= lo) ++above;
    if (above < 5) throw insufficient_data_error("fewer than 5 uncensored samples above t_lo");

    const SlopeFit fit = loglog_slope(curve, est.window, grid_points);
    if (fit.points < 2) throw insufficient_data_error("survival curve flat over the window");
    est.slope = fit.slope;
    est.curvature = fit.curvature;
    est.poor_fit = fit.curvature > 0.15;
    if (est.poor_fit) est.note += "curvature suggests a non-power-law tail; ";

    // bootstrap over paths via multinomial weights
    std::vector<double> slopes;
    slopes.reserve(bootstrap_rounds);
    std::vector<std::uint32_t> weights(N);
    const rng::PathStream stream(seed, 0xB007);
    for (int b = 0; b < bootstrap_rounds; ++b) {
        std::fill(weights.begin(), weights.end(), 0u);
        for (std::size_t i = 0; i < N; ++i) {
            const double u = stream.uniform(static_cast<std::uint64_t>(b) * N + i, 1);
            ++weights[std::min<std::size_t>(static_cast<std::size_t>(u * N), N - 1)];
        }
        const KMCurve bc = km_curve(sorted, &weights);
        const SlopeFit bf = loglog_slope(bc, est.window, grid_points);
        if (bf.points >= 2) slopes.push_back(bf.slope);
    }
    if (slopes.size() >= 2) {
        const double mean = std::accumulate(slopes.begin(), slopes.end(), 0.0) / slopes.size();
        double var = 0.0;
        for (double s : slopes) var += (s - mean) * (s - mean);
        est.stderr_boot = std::sqrt(var / (slopes.size() - 1));
    }
    return est;
}

namespace {

MomentDiagnostic partial_moment(const std::vector<Duration>& d, double p) {
    MomentDiagnostic out;
    out.p = p;
    for (const std::size_t cut : {d.size() / 4, d.size() / 2, d.size()}) {
        if (cut == 0) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < cut; ++i) s += std::pow(d[i].value, p);
        out.partial_means.push_back(s / cut);
    }
    return out;
}

ExponentReport classify_model(const Model& m) {
    return classify(m.beta(), m.sigma.sigma1_sq(), m.sigma.sigma2_sq(), m.phi.s0(), m.phi.c0());
}

}  // namespace

ReturnTailReport return_time_experiment(const Model& m, double r, const Point& start,
                                        std::size_t N, const SimConfig& cfg,
                                        std::optional<Window> window, int threads) {
    ReturnTailReport rep;
    rep.exponents = classify_model(m);
    if (rep.exponents.phase == Phase::Transient || rep.exponents.phase == Phase::CriticalRecTrans)
        throw regime_error("return-time tails need beta < beta_c");
    if (!(start[0] > r)) throw geometry_error("start must lie above the return level");

    const std::vector<StoppingSpec> stops{StoppingSpec::return_below(r)};
    EnsembleOptions opts;
    opts.threads = threads;
    const auto records = run_ensemble(m, cfg, start, stops, N, opts);

    std::vector<Duration> durations;
    durations.reserve(N);
    for (const auto& rec : records) {
        durations.push_back({rec.hit_time(0), rec.hit_censored(0)});
        rep.diagnostics.merge(rec.diagnostics);
    }

    Window w = window ? *window
                      : Window{5.0 * start[0] * start[0], 0.8 * cfg.horizon};
    rep.tail = survival_tail_slope(durations, w);
    rep.predicted_slope = -rep.exponents.m_c;
    rep.stable_moment = partial_moment(durations, rep.exponents.m_c / 2.0);
    rep.divergent_moment = partial_moment(durations, 2.0 * rep.exponents.m_c);
    return rep;
}

OccupationReport occupation_tail(const Model& m, const SimConfig& cfg, const Point& start,
                                 double burn_in, int replicas, std::optional<Window> window,
                                 int threads) {
    OccupationReport rep;
    rep.exponents = classify_model(m);
    if (rep.exponents.phase != Phase::PositiveRecurrent)
        throw regime_error("occupation tails need a positive-recurrent model (beta < -beta_c)");
    if (replicas < 1) throw config_error("occupation_tail needs replicas >= 1");
    if (!(burn_in >= 0.0) || burn_in >= cfg.horizon)
        throw config_error("burn_in must lie in [0, horizon)");
    const std::uint64_t stride = std::max<std::uint64_t>(1, cfg.record_stride);

    rep.replicas = replicas;
    rep.occupation = std::make_shared<std::vector<XYSample>>();
    std::vector<std::vector<XYSample>> per_replica(replicas);
    std::vector<StepDiagnostics> per_diag(replicas);

    {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                const int rix = next.fetch_add(1);
                if (rix >= replicas) return;
                detail::Stepper st(m, cfg, start, static_cast<std::uint64_t>(rix));
                const std::uint64_t n_steps =
                    static_cast<std::uint64_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
                const std::uint64_t n_burn =
                    static_cast<std::uint64_t>(std::ceil(burn_in / cfg.dt - 1e-9));
                auto& out = per_replica[rix];
                out.reserve((n_steps - n_burn) / stride + 1);
                while (st.steps() < n_steps && st.advance()) {
                    if (st.steps() > n_burn && st.steps() % stride == 0) {
                        const auto& z = st.z();
                        out.push_back({z[0], y_norm(z)});
                    }
                }
                per_diag[rix] = st.diagnostics();
            }
        };
        std::vector<std::thread> pool;
        const int nt = std::max(1, std::min(threads, replicas));
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (int rix = 0; rix < replicas; ++rix) {
        rep.diagnostics.merge(per_diag[rix]);
        rep.occupation->insert(rep.occupation->end(), per_replica[rix].begin(),
                               per_replica[rix].end());
    }
    rep.samples = rep.occupation->size();
    if (rep.samples < 1000) throw insufficient_data_error("too few occupation samples");

    auto radii = [](const std::vector<XYSample>& xs) {
        std::vector<Duration> out;
        out.reserve(xs.size());
        for (const auto& s : xs)
            out.push_back({std::sqrt(s[0] * s[0] + s[1] * s[1]), false});
        return out;
    };
    std::vector<Duration> all = radii(*rep.occupation);

    // default window: bulk quantile up to the diffusive reach of one replica
    std::vector<double> vals(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) vals[i] = all[i].value;
    std::sort(vals.begin(), vals.end());
    auto quant = [&](double q) { return vals[static_cast<std::size_t>(q * (vals.size() - 1))]; };
    const double t_eff = cfg.horizon - burn_in;
    const double reach = 0.35 * std::sqrt(m.sigma.sigma1_sq() * t_eff);
    Window w = window ? *window : Window{quant(0.40), std::min(quant(0.98), reach)};
    if (!(w.hi > w.lo)) w = {quant(0.40), quant(0.98)};

    rep.tail = survival_tail_slope(all, w);
    rep.predicted_slope = -2.0 * rep.exponents.M_c;

    const double resolvable = std::abs(rep.predicted_slope) * std::log(w.hi / w.lo);
    if (resolvable < 0.3466) {
        rep.tail.window_too_heavy = true;
        rep.tail.slope = 0.0;
        rep.tail.note += "predicted tail too shallow for the reachable window; ";
    }

    // replica reproducibility: compare slopes of the two replica halves
    if (replicas >= 2) {
        std::vector<XYSample> h1, h2;
        for (int rix = 0; rix < replicas; ++rix) {
            auto& dst = rix < replicas / 2 ? h1 : h2;
            dst.insert(dst.end(), per_replica[rix].begin(), per_replica[rix].end());
        }
        try {
            const TailEstimate e1 = survival_tail_slope(radii(h1), w, 20, 60, 0xAB1);
            const TailEstimate e2 = survival_tail_slope(radii(h2), w, 20, 60, 0xAB2);
            const double pooled =
                std::sqrt(e1.stderr_boot * e1.stderr_boot + e2.stderr_boot * e2.stderr_boot);
            rep.replica_slope_spread = pooled > 0.0 ? std::abs(e1.slope - e2.slope) / pooled : 0.0;
        } catch (const insufficient_data_error&) {
            rep.replica_slope_spread = 0.0;
        }
    }
    return rep;
}

namespace {

struct Histogram2D {
    std::vector<double> x_edges;               // nx-1 interior edges
    std::vector<std::vector<double>> r_edges;  // per column, nr-1 interior edges
    int nx = 0, nr = 0;

    std::size_t cell(double x, double r) const {
        const auto xit = std::upper_bound(x_edges.begin(), x_edges.end(), x);
        const std::size_t cx = static_cast<std::size_t>(xit - x_edges.begin());
        const auto& re = r_edges[cx];
        const auto rit = std::upper_bound(re.begin(), re.end(), r);
        return cx * static_cast<std::size_t>(nr) + static_cast<std::size_t>(rit - re.begin());
    }
};

Histogram2D build_histogram(const std::vector<XYSample>& ref, int want_x, int want_r) {
    Histogram2D h;
    int nx = want_x, nr = want_r;
    // every cell of the reference must keep >= 20 hits
    while (nx > 4 && static_cast<std::size_t>(nx) * nr * 20 > ref.size()) nx /= 2;
    while (nr > 4 && static_cast<std::size_t>(nx) * nr * 20 > ref.size()) nr /= 2;
    h.nx = nx;
    h.nr = nr;

    std::vector<double> xs(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) xs[i] = ref[i][0];
    std::sort(xs.begin(), xs.end());
    for (int k = 1; k < nx; ++k)
        h.x_edges.push_back(xs[ref.size() * static_cast<std::size_t>(k) / nx]);

    std::vector<std::vector<double>> cols(static_cast<std::size_t>(nx));
    for (const auto& s : ref) {
        const auto xit = std::upper_bound(h.x_edges.begin(), h.x_edges.end(), s[0]);
        cols[static_cast<std::size_t>(xit - h.x_edges.begin())].push_back(s[1]);
    }
    h.r_edges.resize(static_cast<std::size_t>(nx));
    for (int cx = 0; cx < nx; ++cx) {
        auto& col = cols[static_cast<std::size_t>(cx)];
        std::sort(col.begin(), col.end());
        for (int k = 1; k < nr; ++k) {
            const std::size_t idx = col.empty() ? 0 : col.size() * static_cast<std::size_t>(k) / nr;
            h.r_edges[static_cast<std::size_t>(cx)].push_back(col.empty() ? 0.0 : col[idx]);
        }
    }
    return h;
}

}  // namespace

BinnedTV binned_tv_distance(const std::vector<XYSample>& reference,
                            const std::vector<XYSample>& sample, int x_bins, int r_bins) {
    if (reference.empty() || sample.empty())
        throw insufficient_data_error("binned TV needs nonempty samples");
    const Histogram2D hist = build_histogram(reference, x_bins, r_bins);
    const std::size_t n_cells = static_cast<std::size_t>(hist.nx) * hist.nr;
    std::vector<double> pi_hat(n_cells, 0.0), p_hat(n_cells, 0.0);
    for (const auto& s : reference) pi_hat[hist.cell(s[0], s[1])] += 1.0;
    for (double& p : pi_hat) p /= static_cast<double>(reference.size());
    for (const auto& s : sample) p_hat[hist.cell(s[0], s[1])] += 1.0;
    for (double& p : p_hat) p /= static_cast<double>(sample.size());
    BinnedTV out;
    out.x_bins = hist.nx;
    out.r_bins = hist.nr;
    for (std::size_t c = 0; c < n_cells; ++c) {
        out.tv += 0.5 * std::abs(p_hat[c] - pi_hat[c]);
        out.noise_floor +=
            0.5 * std::sqrt(2.0 * pi_hat[c] * (1.0 - pi_hat[c]) / (3.14159265358979 * sample.size()));
    }
    return out;
}

TVCurve tv_decay(const Model& m, const SimConfig& cfg, const Point& start, std::size_t N,
                 const std::vector<double>& times, int x_bins, int r_bins,
                 const std::vector<XYSample>& reference, int threads) {
    if (reference.empty())
        throw config_error("tv_decay requires the long-run reference (run invariant-tail first)");
    const ExponentReport ex = classify_model(m);
    if (ex.phase != Phase::PositiveRecurrent)
        throw regime_error("tv decay needs a positive-recurrent model");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] <= times[i - 1]) throw config_error("tv times must be increasing");

    TVCurve curve;
    curve.times = times;
    curve.predicted_rate = -ex.M_c;
    curve.reference_sample_size = reference.size();
    curve.note = "binned TV lower-bounds the true total variation";

    const Histogram2D hist = build_histogram(reference, x_bins, r_bins);
    curve.x_bins = hist.nx;
    curve.r_bins = hist.nr;
    const std::size_t n_cells = static_cast<std::size_t>(hist.nx) * hist.nr;

    std::vector<double> pi_hat(n_cells, 0.0);
    for (const auto& s : reference) pi_hat[hist.cell(s[0], s[1])] += 1.0;
    for (double& p : pi_hat) p /= static_cast<double>(reference.size());

    double floor = 0.0;
    for (double p : pi_hat)
        floor += 0.5 * std::sqrt(2.0 * p * (1.0 - p) / (3.14159265358979 * N));
    curve.noise_floor = floor;

    SimConfig run_cfg = cfg;
    run_cfg.horizon = times.back();
    run_cfg.record_stride = 0;
    EnsembleOptions opts;
    opts.threads = threads;
    opts.snapshot_times = times;
    const auto records = run_ensemble(m, run_cfg, start, {}, N, opts);

    for (std::size_t j = 0; j < times.size(); ++j) {
        std::vector<double> p_hat(n_cells, 0.0);
        std::size_t counted = 0;
        for (const auto& rec : records) {
            if (j >= rec.samples.size()) continue;
            const auto& z = rec.samples[j].z;
            p_hat[hist.cell(z[0], y_norm(z))] += 1.0;
            ++counted;
        }
        if (counted == 0) throw insufficient_data_error("no ensemble snapshots at a tv time");
        double tv = 0.0;
        for (std::size_t c = 0; c < n_cells; ++c)
            tv += std::abs(p_hat[c] / counted - pi_hat[c]);
        curve.tv_hat.push_back(0.5 * tv);
    }

    for (std::size_t j = 0; j + 1 < curve.tv_hat.size(); ++j)
        if (curve.tv_hat[j + 1] > curve.tv_hat[j] + curve.noise_floor) ++curve.violations;

    // slope over the usable band
    std::vector<double> us, vs;
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (curve.tv_hat[j] >= 0.02 && curve.tv_hat[j] <= 0.5) {
            us.push_back(std::log(times[j]));
            vs.push_back(std::log(curve.tv_hat[j]));
        }
    }
    if (us.size() < 2) {
        // fall back to the latest two points
        for (std::size_t j = times.size() >= 2 ? times.size() - 2 : 0; j < times.size(); ++j) {
            us.push_back(std::log(times[j]));
            vs.push_back(std::log(std::max(curve.tv_hat[j], 1e-12)));
        }
        curve.note += "; slope from the last two points (band [0.02,0.5] too narrow)";
    }
    const double n = static_cast<double>(us.size());
    const double mu = std::accumulate(us.begin(), us.end(), 0.0) / n;
    const double mv = std::accumulate(vs.begin(), vs.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < us.size(); ++i) {
        sxx += (us[i] - mu) * (us[i] - mu);
        sxy += (us[i] - mu) * (vs[i] - mv);
    }
    curve.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    curve.slope_points = static_cast<int>(us.size());
    return curve;
}

TransienceReport transience_fraction(const Model& m, double r, const Point& start, std::size_t N,
                                     const std::vector<double>& horizons, const SimConfig& base,
                                     bool negative_control, int threads) {
    const ExponentReport ex = classify_model(m);
    if (ex.phase != Phase::Transient && !negative_control)
        throw regime_error("transience fractions need a transient model "
                           "(or an explicit negative control)");
    if (!(start[0] > r)) throw geometry_error("start must lie above the return level");

    TransienceReport rep;
    rep.horizons = horizons;
    const std::vector<StoppingSpec> stops{StoppingSpec::return_below(r)};
    for (std::size_t j = 0; j < horizons.size(); ++j) {
        SimConfig cfg = base;
        cfg.horizon = horizons[j];
        cfg.master_seed = base.master_seed ^ rng::splitmix64(j + 1);
        EnsembleOptions opts;
        opts.threads = threads;
        const auto records = run_ensemble(m, cfg, start, stops, N, opts);
        std::size_t censored = 0;
        for (const auto& rec : records) censored += rec.hit_censored(0) ? 1 : 0;
        const double p = static_cast<double>(censored) / N;
        rep.fractions.push_back(p);
        rep.stderrs.push_back(std::sqrt(std::max(p * (1.0 - p), 1.0 / N) / N));
    }

    rep.nonincreasing = true;
    for (std::size_t j = 0; j + 1 < rep.fractions.size(); ++j) {
        const double pooled = std::sqrt(rep.stderrs[j] * rep.stderrs[j] +
                                        rep.stderrs[j + 1] * rep.stderrs[j + 1]);
        if (rep.fractions[j + 1] > rep.fractions[j] + 2.0 * pooled) rep.nonincreasing = false;
    }
    if (rep.fractions.size() >= 2) {
        const std::size_t j = rep.fractions.size() - 2;
        const double pooled = std::sqrt(rep.stderrs[j] * rep.stderrs[j] +
                                        rep.stderrs[j + 1] * rep.stderrs[j + 1]);
        rep.stabilized = std::abs(rep.fractions[j + 1] - rep.fractions[j]) < 2.0 * pooled;
    }
    rep.limit_estimate = rep.fractions.empty() ? 0.0 : rep.fractions.back();
    return rep;
}

std::string transform_name(DriftTransform t) {
    switch (t) {
        case DriftTransform::StoppedValue: return "stopped_value";
        case DriftTransform::StoppedPower: return "stopped_power";
        case DriftTransform::CompensatedInverseSquare: return "inverse_square";
        case DriftTransform::StationaryDriftProcess: return "stationary_drift";
        case DriftTransform::IdentityMartingale: return "martingale_control";
    }
    return "?";
}

DriftTestReport supermartingale_check(const Model& m, const DriftTestSpec& spec,
                                      const std::vector<double>& checkpoints, std::size_t N,
                                      const SimConfig& cfg, const Point& start, int threads) {
    if (checkpoints.size() < 2) throw config_error("drift test needs >= 2 checkpoints");
    for (std::size_t j = 1; j < checkpoints.size(); ++j)
        if (checkpoints[j] <= checkpoints[j - 1])
            throw config_error("drift test checkpoints must be increasing");

    DriftTestReport rep;
    rep.transform = transform_name(spec.transform);
    rep.checkpoints = checkpoints;
    rep.submartingale = spec.transform == DriftTransform::StoppedPower;
    rep.two_sided = spec.transform == DriftTransform::IdentityMartingale;

    const std::size_t J = checkpoints.size();
    std::vector<std::uint64_t> cp_steps(J);
    for (std::size_t j = 0; j < J; ++j)
        cp_steps[j] = static_cast<std::uint64_t>(std::llround(checkpoints[j] / cfg.dt));
    const std::uint64_t n_max = cp_steps.back();

    SimConfig run_cfg = cfg;
    run_cfg.horizon = std::max(checkpoints.back(), cfg.dt);

    const PolyLyapunov kappa_fn{spec.f.w, 1.0, spec.f.k_w};
    const LyapunovFunction kappa_lf = kappa_fn;
    if (spec.transform == DriftTransform::StationaryDriftProcess && !(spec.cert.C1 > 0.0))
        throw config_error("stationary drift test needs a certificate with C1 > 0");
    LyapunovFunction F_fn = spec.cert.found || spec.transform == DriftTransform::StationaryDriftProcess
                                ? LyapunovFunction(MollifiedLyapunov{
                                      {spec.cert.w, spec.cert.gamma, spec.cert.k_w},
                                      spec.cert.x0, spec.cert.x1, spec.cert.k})
                                : LyapunovFunction(kappa_fn);
    LyapunovFunction F2_fn = spec.cert.found || spec.transform == DriftTransform::StationaryDriftProcess
                                 ? LyapunovFunction(MollifiedLyapunov{
                                       {spec.cert.w, spec.cert.gamma - 2.0, spec.cert.k_w},
                                       spec.cert.x0, spec.cert.x1, spec.cert.k})
                                 : LyapunovFunction(kappa_fn);

    std::vector<std::vector<double>> values(N, std::vector<double>(J, 0.0));

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        try {
            for (;;) {
                const std::size_t pid = next.fetch_add(1);
                if (pid >= N) return;
                auto& row = values[pid];

                if (spec.transform == DriftTransform::IdentityMartingale) {
                    const rng::PathStream stream(run_cfg.master_seed, pid);
                    double x = start[0];
                    std::size_t j = 0;
                    const double sq = std::sqrt(run_cfg.dt);
                    for (std::uint64_t n = 0; n <= n_max && j < J; ++n) {
                        while (j < J && n == cp_steps[j]) row[j++] = x;
                        if (n < n_max) x += sq * stream.normals(n, 0).z0;
                    }
                    continue;
                }

                detail::Stepper st(m, run_cfg, start, pid);
                double acc = 0.0;  // compensator integral
                bool stopped = false;

                auto transform_value = [&](double kappa, std::span<const double> z) {
                    switch (spec.transform) {
                        case DriftTransform::StoppedValue:
                            return std::pow(kappa, spec.f.gamma);
                        case DriftTransform::StoppedPower:
                            return std::pow(kappa, spec.f.gamma);
                        case DriftTransform::CompensatedInverseSquare:
                            return 1.0 / (kappa * kappa) - spec.C * acc;
                        case DriftTransform::StationaryDriftProcess:
                            return lyapunov_eval(F_fn, z) + spec.cert.C1 * acc;
                        default:
                            return 0.0;
                    }
                };
                auto integrand = [&](double kappa, std::span<const double> z) {
                    switch (spec.transform) {
                        case DriftTransform::CompensatedInverseSquare:
                            return 1.0 / (kappa * kappa * kappa * kappa);
                        case DriftTransform::StationaryDriftProcess:
                            // C1 int F_{gamma-2} - C2 int 1{x<=x2}, folded into one
                            return lyapunov_eval(F2_fn, z) -
                                   (z[0] <= spec.cert.x2 ? spec.cert.C2 / spec.cert.C1 : 0.0);
                        default:
                            return 0.0;
                    }
                };
                auto check_stop = [&](double kappa) {
                    switch (spec.transform) {
                        case DriftTransform::StoppedValue:
                        case DriftTransform::StoppedPower:
                            return kappa <= spec.stop_lo || kappa >= spec.stop_hi;
                        case DriftTransform::CompensatedInverseSquare:
                            return kappa <= spec.stop_lo;
                        default:
                            return false;
                    }
                };

                double kappa = lyapunov_eval(kappa_lf, st.z());
                double current = transform_value(kappa, st.z());
                stopped = check_stop(kappa);
                std::size_t j = 0;
                for (std::uint64_t n = 0; n <= n_max && j < J; ++n) {
                    while (j < J && n == cp_steps[j]) row[j++] = current;
                    if (n == n_max || j >= J) break;
                    if (!stopped) {
                        acc += run_cfg.dt * integrand(kappa, st.z());
                        if (!st.advance()) {
                            stopped = true;  // overflow: freeze
                            continue;
                        }
                        kappa = lyapunov_eval(kappa_lf, st.z());
                        current = transform_value(kappa, st.z());
                        if (check_stop(kappa)) stopped = true;
                    }
                }
                for (; j < J; ++j) row[j] = current;
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    {
        std::vector<std::thread> pool;
        const int nt = std::max(1, threads);
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    rep.pass = true;
    for (std::size_t j = 0; j + 1 < J; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < N; ++i) mean += values[i][j + 1] - values[i][j];
        mean /= static_cast<double>(N);
        double var = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double d = values[i][j + 1] - values[i][j] - mean;
            var += d * d;
        }
        const double se = std::sqrt(var / (N - 1.0) / N);
        rep.increments.push_back(mean);
        rep.stderrs.push_back(se);
        bool ok;
        if (rep.two_sided) ok = std::abs(mean) <= 2.0 * se;
        else if (rep.submartingale) ok = mean >= -2.0 * se;
        else ok = mean <= 2.0 * se;
        rep.pass = rep.pass && ok;
    }
    return rep;
}

MomentReport moment_diffusivity(const Model& m, const SimConfig& cfg, const Point& start,
                                std::size_t N, const std::vector<double>& times, int threads) {
    if (times.empty()) throw config_error("moment_diffusivity needs at least one time");
    MomentReport rep;
    rep.times = times;
    SimConfig run_cfg = cfg;
    run_cfg.horizon = times.back();
    run_cfg.record_stride = 0;
    EnsembleOptions opts;
    opts.threads = threads;
    opts.snapshot_times = times;
    const auto records = run_ensemble(m, run_cfg, start, {}, N, opts);
    for (std::size_t j = 0; j < times.size(); ++j) {
        double mean = 0.0, var = 0.0;
        std::size_t n = 0;
        for (const auto& rec : records) {
            if (j >= rec.samples.size()) continue;
            const auto& z = rec.samples[j].z;
            const double v = (z[0] * z[0] + y_norm_sq(z)) / (1.0 + times[j]);
            mean += v;
            ++n;
        }
        mean /= std::max<std::size_t>(n, 1);
        for (const auto& rec : records) {
            if (j >= rec.samples.size()) continue;
            const auto& z = rec.samples[j].z;
            const double v = (z[0] * z[0] + y_norm_sq(z)) / (1.0 + times[j]) - mean;
            var += v * v;
        }
        rep.scaled_second_moment.push_back(mean);
        rep.stderrs.push_back(n > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0);
    }
    const auto [mn, mx] = std::minmax_element(rep.scaled_second_moment.begin(),
                                              rep.scaled_second_moment.end());
    rep.max_over_min = *mn > 0.0 ? *mx / *mn : std::numeric_limits<double>::infinity();
    return rep;
}

// ---- JSON serialisation -------------------------------------------------

std::string TailEstimate::to_json() const {
    nlohmann::json j;
    if (window_too_heavy) j["slope"] = nullptr;
    else j["slope"] = slope;
    j["stderr"] = stderr_boot;
    j["window"] = {window.lo, window.hi};
    j["censored_fraction"] = censored_fraction;
    j["n_effective"] = n_effective;
    j["curvature"] = curvature;
    j["poor_fit"] = poor_fit;
    j["window_too_heavy"] = window_too_heavy;
    j["note"] = note;
    return j.dump(2);
}

std::string ReturnTailReport::to_json() const {
    nlohmann::json j;
    j["exponents"] = nlohmann::json::parse(exponents.to_json());
    j["tail"] = nlohmann::json::parse(tail.to_json());
    j["predicted_slope"] = predicted_slope;
    j["stable_moment"] = {{"p", stable_moment.p}, {"partial_means", stable_moment.partial_means}};
    j["divergent_moment"] = {{"p", divergent_moment.p},
                             {"partial_means", divergent_moment.partial_means}};
    j["diagnostics"] = {{"steps", diagnostics.steps},
                        {"reflections", diagnostics.reflections},
                        {"fallbacks", diagnostics.fallbacks}};
    return j.dump(2);
}

std::string OccupationReport::to_json() const {
    nlohmann::json j;
    j["exponents"] = nlohmann::json::parse(exponents.to_json());
    j["tail"] = nlohmann::json::parse(tail.to_json());
    j["predicted_slope"] = predicted_slope;
    j["samples"] = samples;
    j["replicas"] = replicas;
    j["replica_slope_spread"] = replica_slope_spread;
    j["diagnostics"] = {{"steps", diagnostics.steps},
                        {"reflections", diagnostics.reflections},
                        {"fallbacks", diagnostics.fallbacks}};
    return j.dump(2);
}

std::string TVCurve::to_json() const {
    nlohmann::json j;
    j["times"] = times;
    j["tv_hat"] = tv_hat;
    j["x_bins"] = x_bins;
    j["r_bins"] = r_bins;
    j["reference_sample_size"] = reference_sample_size;
    j["noise_floor"] = noise_floor;
    j["violations"] = violations;
    j["slope"] = slope;
    j["slope_points"] = slope_points;
    j["predicted_rate"] = predicted_rate;
    j["note"] = note;
    return j.dump(2);
}

std::string TransienceReport::to_json() const {
    nlohmann::json j;
    j["horizons"] = horizons;
    j["fractions"] = fractions;
    j["stderrs"] = stderrs;
    j["nonincreasing"] = nonincreasing;
    j["stabilized"] = stabilized;
    j["limit_estimate"] = limit_estimate;
    return j.dump(2);
}

std::string DriftTestReport::to_json() const {
    nlohmann::json j;
    j["transform"] = transform;
    j["submartingale"] = submartingale;
    j["two_sided"] = two_sided;
    j["checkpoints"] = checkpoints;
    j["increments"] = increments;
    j["stderrs"] = stderrs;
    j["pass"] = pass;
    return j.dump(2);
}

std::string MomentReport::to_json() const {
    nlohmann::json j;
    j["times"] = times;
    j["scaled_second_moment"] = scaled_second_moment;
    j["stderrs"] = stderrs;
    j["max_over_min"] = max_over_min;
    return j.dump(2);
}

}  // namespace prbm
