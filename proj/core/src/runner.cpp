#include "prbm/runner.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "prbm/errors.hpp"
#include "prbm/estimate.hpp"
#include "prbm/exponents.hpp"
#include "prbm/lyapunov.hpp"
#include "prbm/rng.hpp"

namespace prbm {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open " + path.string());
    out << content;
    if (!out) throw std::ios_base::failure("cannot write " + path.string());
}

std::string status_name(PathStatus s) {
    switch (s) {
        case PathStatus::Running: return "running";
        case PathStatus::StoppedByRule: return "stopped";
        case PathStatus::NumericalOverflow: return "overflow";
    }
    return "?";
}

struct Assertion {
    std::string name;
    bool pass;
    std::string detail;
};

json assertions_json(const std::vector<Assertion>& as) {
    json arr = json::array();
    for (const auto& a : as) arr.push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
    return arr;
}

void check_slope(const ExperimentConfig& cfg, double slope, std::vector<Assertion>& as) {
    if (!cfg.assert_slope_lo) return;
    const bool ok = slope >= *cfg.assert_slope_lo && slope <= *cfg.assert_slope_hi;
    as.push_back({"slope_in", ok,
                  "slope " + fmt(slope) + " vs [" + fmt(*cfg.assert_slope_lo) + ", " +
                      fmt(*cfg.assert_slope_hi) + "]"});
}

// grid constant for the compensated inverse-square drift test: an upper
// bound for Laplacian_Sigma f_{w,-2} / f_{w,-4} far from the origin
double inverse_square_constant(const Model& m, double w, double k_w) {
    const LyapunovFunction f2 = PolyLyapunov{w, -2.0, k_w};
    const PolyLyapunov f1{w, 1.0, k_w};
    double C = 0.0;
    for (int i = 0; i <= 60; ++i) {
        const double x = std::pow(10.0, 0.5 + 4.5 * i / 60.0);
        for (double frac : {0.0, 0.5, 0.9}) {
            Point z = m.dom.boundary_point(x);
            for (std::size_t c = 1; c < z.size(); ++c) z[c] *= frac;
            const double lap = sigma_laplacian(f2, m.sigma, z, m.dom.d);
            const double denom = std::pow(lyapunov_eval(LyapunovFunction(f1), z), -4.0);
            C = std::max(C, lap / denom);
        }
    }
    return 1.2 * std::max(C, 1e-6);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, int threads, bool verbose) {
    RunResult result;
    std::vector<Assertion> assertions;
    json report;
    report["mode"] = cfg.mode;
    report["config_hash"] = cfg.manifest_hash();
    report["version"] = kVersion;
    std::vector<std::pair<std::string, std::string>> csv_files;

    const Model model = cfg.build_model();
    const ExponentReport exponents =
        classify(model.beta(), cfg.sigma1_sq, cfg.sigma2_sq, model.phi.s0(), model.phi.c0());
    report["exponents"] = json::parse(exponents.to_json());
    result.summary = exponents.summary();

    if (cfg.mode == "classify") {
        if (cfg.assert_phase)
            assertions.push_back({"phase", phase_name(exponents.phase) == *cfg.assert_phase,
                                  "phase " + phase_name(exponents.phase) + " vs " +
                                      *cfg.assert_phase});
    } else if (cfg.mode == "return-tails") {
        const double r = cfg.levels.empty() ? 1.0 : cfg.levels[0];
        const ReturnTailReport rep = return_time_experiment(model, r, cfg.start, cfg.paths,
                                                            cfg.sim, cfg.window, threads);
        report["return_tails"] = json::parse(rep.to_json());
        check_slope(cfg, rep.tail.slope, assertions);
        result.summary += "; measured slope " + fmt(rep.tail.slope) + " vs predicted " +
                          fmt(rep.predicted_slope);
        csv_files.emplace_back("tail_estimate.csv",
                               "slope,stderr,window_lo,window_hi,censored_fraction\n" +
                                   fmt(rep.tail.slope) + "," + fmt(rep.tail.stderr_boot) + "," +
                                   fmt(rep.tail.window.lo) + "," + fmt(rep.tail.window.hi) + "," +
                                   fmt(rep.tail.censored_fraction) + "\n");
    } else if (cfg.mode == "invariant-tail") {
        SimConfig run = cfg.sim;
        if (run.record_stride == 0) run.record_stride = 50;
        const OccupationReport rep = occupation_tail(model, run, cfg.start, cfg.burn_in,
                                                     cfg.replicas, cfg.window, threads);
        report["invariant_tail"] = json::parse(rep.to_json());
        check_slope(cfg, rep.tail.slope, assertions);
        if (rep.tail.window_too_heavy)
            assertions.push_back({"window_resolvable", false, rep.tail.note});
        result.summary += "; occupation slope " + fmt(rep.tail.slope) + " vs predicted " +
                          fmt(rep.predicted_slope);
        std::string csv = "r,survival\n";
        std::vector<double> radii;
        radii.reserve(rep.occupation->size());
        for (const auto& s : *rep.occupation)
            radii.push_back(std::sqrt(s[0] * s[0] + s[1] * s[1]));
        std::sort(radii.begin(), radii.end());
        const std::size_t step = std::max<std::size_t>(1, radii.size() / 512);
        for (std::size_t i = 0; i < radii.size(); i += step)
            csv += fmt(radii[i]) + "," +
                   fmt(1.0 - static_cast<double>(i) / radii.size()) + "\n";
        csv_files.emplace_back("occupation_survival.csv", csv);
    } else if (cfg.mode == "tv-decay") {
        if (cfg.times.empty()) throw config_error("tv-decay needs /experiment/times");
        SimConfig ref_cfg = cfg.sim;
        if (ref_cfg.record_stride == 0) ref_cfg.record_stride = 50;
        ref_cfg.master_seed ^= rng::splitmix64(0xCC);
        const OccupationReport ref = occupation_tail(model, ref_cfg, cfg.start, cfg.burn_in,
                                                     cfg.replicas, std::nullopt, threads);
        const TVCurve curve = tv_decay(model, cfg.sim, cfg.start, cfg.paths, cfg.times,
                                       cfg.x_bins, cfg.r_bins, *ref.occupation, threads);
        report["tv_decay"] = json::parse(curve.to_json());
        check_slope(cfg, curve.slope, assertions);
        if (cfg.assert_max_violations)
            assertions.push_back({"max_violations", curve.violations <= *cfg.assert_max_violations,
                                  std::to_string(curve.violations) + " increases beyond the noise floor"});
        result.summary += "; tv slope " + fmt(curve.slope) + " vs predicted " +
                          fmt(curve.predicted_rate);
        std::string csv = "t,tv_hat\n";
        for (std::size_t i = 0; i < curve.times.size(); ++i)
            csv += fmt(curve.times[i]) + "," + fmt(curve.tv_hat[i]) + "\n";
        csv_files.emplace_back("tv_curve.csv", csv);
    } else if (cfg.mode == "transience") {
        const double r = cfg.levels.empty() ? 1.0 : cfg.levels[0];
        std::vector<double> horizons = cfg.horizons;
        if (horizons.empty()) horizons = {100.0, 1000.0, 10000.0};
        const TransienceReport rep = transience_fraction(model, r, cfg.start, cfg.paths, horizons,
                                                         cfg.sim, cfg.negative_control, threads);
        report["transience"] = json::parse(rep.to_json());
        if (cfg.assert_stabilized)
            assertions.push_back({"stabilized", rep.stabilized == *cfg.assert_stabilized,
                                  "stabilized=" + std::to_string(rep.stabilized)});
        if (cfg.assert_decay_below)
            assertions.push_back({"decay_below", rep.limit_estimate <= *cfg.assert_decay_below,
                                  "limit " + fmt(rep.limit_estimate)});
        result.summary += "; censored fraction limit " + fmt(rep.limit_estimate);
        std::string csv = "horizon,censored_fraction,stderr\n";
        for (std::size_t i = 0; i < rep.horizons.size(); ++i)
            csv += fmt(rep.horizons[i]) + "," + fmt(rep.fractions[i]) + "," +
                   fmt(rep.stderrs[i]) + "\n";
        csv_files.emplace_back("transience.csv", csv);
    } else if (cfg.mode == "moments") {
        std::vector<double> times = cfg.times;
        if (times.empty()) times = {1.0, 10.0, 100.0};
        const MomentReport rep =
            moment_diffusivity(model, cfg.sim, cfg.start, cfg.paths, times, threads);
        report["moments"] = json::parse(rep.to_json());
        if (cfg.assert_max_over_min)
            assertions.push_back({"max_over_min", rep.max_over_min < *cfg.assert_max_over_min,
                                  "ratio " + fmt(rep.max_over_min)});
        result.summary += "; max/min scaled second moment " + fmt(rep.max_over_min);
        std::string csv = "t,scaled_second_moment,stderr\n";
        for (std::size_t i = 0; i < rep.times.size(); ++i)
            csv += fmt(rep.times[i]) + "," + fmt(rep.scaled_second_moment[i]) + "," +
                   fmt(rep.stderrs[i]) + "\n";
        csv_files.emplace_back("moments.csv", csv);
    } else if (cfg.mode == "drift-test") {
        DriftTestSpec spec;
        std::vector<double> cps = cfg.checkpoints;
        if (cps.empty()) cps = {0.0, 2.0, 5.0, 10.0, 20.0};
        if (cfg.transform == "martingale_control") {
            spec.transform = DriftTransform::IdentityMartingale;
        } else if (cfg.transform == "stationary_drift") {
            spec.transform = DriftTransform::StationaryDriftProcess;
            const double g = cfg.gamma ? *cfg.gamma
                                       : 0.5 * (1.0 - model.beta() / model.beta_c());
            spec.cert = find_drift_certificate(model, g);
            if (!spec.cert.found)
                throw regime_error("no drift certificate found for the stationary test");
        } else {
            const bool transient = exponents.phase == Phase::Transient;
            ParameterChoice pc;
            if (cfg.transform == "stopped_power") {
                spec.transform = DriftTransform::StoppedPower;
                pc = choose_parameters(model, Regime::ReturnLower);
            } else if (cfg.transform == "inverse_square") {
                spec.transform = DriftTransform::CompensatedInverseSquare;
                pc = choose_parameters(model, Regime::ReturnLower);
            } else {
                spec.transform = DriftTransform::StoppedValue;
                pc = choose_parameters(model, transient ? Regime::Transient : Regime::Recurrent);
            }
            spec.f = {pc.w, pc.gamma, compute_k_w(model.dom.boundary, pc.w)};
            if (cfg.levels.size() >= 2) {
                spec.stop_lo = cfg.levels[0];
                spec.stop_hi = cfg.levels[1];
            } else {
                const LyapunovFunction f1 = PolyLyapunov{spec.f.w, 1.0, spec.f.k_w};
                const double k0 = lyapunov_eval(f1, cfg.start);
                spec.stop_lo = 0.25 * k0;
                spec.stop_hi = 4.0 * k0;
            }
            if (spec.transform == DriftTransform::CompensatedInverseSquare)
                spec.C = inverse_square_constant(model, spec.f.w, spec.f.k_w);
        }
        const DriftTestReport rep =
            supermartingale_check(model, spec, cps, cfg.paths, cfg.sim, cfg.start, threads);
        report["drift_test"] = json::parse(rep.to_json());
        if (cfg.assert_pass)
            assertions.push_back({"drift_pass", rep.pass == *cfg.assert_pass,
                                  "pass=" + std::to_string(rep.pass)});
        result.summary += "; drift test " + rep.transform + (rep.pass ? " passed" : " FAILED");
        std::string csv = "checkpoint_lo,checkpoint_hi,increment,stderr\n";
        for (std::size_t i = 0; i + 1 < rep.checkpoints.size(); ++i)
            csv += fmt(rep.checkpoints[i]) + "," + fmt(rep.checkpoints[i + 1]) + "," +
                   fmt(rep.increments[i]) + "," + fmt(rep.stderrs[i]) + "\n";
        csv_files.emplace_back("drift_increments.csv", csv);
    } else if (cfg.mode == "simulate") {
        std::vector<StoppingSpec> stops;
        for (double lv : cfg.levels)
            stops.push_back(lv < cfg.start[0] ? StoppingSpec::return_below(lv)
                                              : StoppingSpec::pass_above(lv));
        EnsembleOptions opts;
        opts.threads = threads;
        const auto records = run_ensemble(model, cfg.sim, cfg.start, stops, cfg.paths, opts);
        std::string traj = "path_id,t,x,y_norm,L,status\n";
        std::string hits = "path_id,stop_kind,level,time,censored\n";
        StepDiagnostics diag;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& rec = records[i];
            for (const auto& s : rec.samples)
                traj += std::to_string(i) + "," + fmt(s.t) + "," + fmt(s.z[0]) + "," +
                        fmt(y_norm(s.z)) + "," + fmt(s.local_time) + ",running\n";
            traj += std::to_string(i) + "," + fmt(rec.final_state.t) + "," +
                    fmt(rec.final_state.z[0]) + "," + fmt(y_norm(rec.final_state.z)) + "," +
                    fmt(rec.final_state.local_time) + "," + status_name(rec.final_state.status) +
                    "\n";
            for (const auto& h : rec.hits)
                hits += std::to_string(i) + "," + stops[h.spec_index].kind_name() + "," +
                        fmt(stops[h.spec_index].level) + "," + fmt(h.time) + "," +
                        (h.censored ? "1" : "0") + "\n";
            diag.merge(rec.diagnostics);
        }
        report["simulate"] = {{"paths", records.size()},
                              {"steps", diag.steps},
                              {"reflections", diag.reflections},
                              {"fallbacks", diag.fallbacks}};
        result.summary += "; simulated " + std::to_string(records.size()) + " paths";
        csv_files.emplace_back("trajectory.csv", traj);
        csv_files.emplace_back("hits.csv", hits);
    } else if (cfg.mode == "verify-lyapunov") {
        const double g =
            cfg.gamma ? *cfg.gamma : 0.5 * (1.0 - model.beta() / model.beta_c());
        const DriftCertificate cert = find_drift_certificate(model, g);
        report["certificate"] = json::parse(cert.to_json());
        assertions.push_back({"certificate_found", cert.found, cert.note});
        result.summary += cert.found ? "; drift certificate found" : "; NO drift certificate";
    } else {
        throw config_error("unhandled mode " + cfg.mode);
    }

    report["assertions"] = assertions_json(assertions);
    bool all_pass = true;
    for (const auto& a : assertions) all_pass = all_pass && a.pass;
    report["pass"] = all_pass;
    result.report_json = report.dump(2);
    result.exit_code = all_pass ? 0 : 1;

    try {
        const std::filesystem::path dir(cfg.output_directory);
        std::filesystem::create_directories(dir);
        write_file(dir / "report.json", result.report_json + "\n");
        json manifest;
        manifest["config_hash"] = cfg.manifest_hash();
        manifest["seed"] = cfg.sim.master_seed;
        manifest["version"] = kVersion;
        manifest["config"] = json::parse(cfg.canonical_json());
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        const bool want_csv =
            std::find(cfg.output_formats.begin(), cfg.output_formats.end(), "csv") !=
            cfg.output_formats.end();
        if (want_csv)
            for (const auto& [name, content] : csv_files) write_file(dir / name, content);
    } catch (const std::ios_base::failure& e) {
        result.exit_code = 2;
        result.summary += std::string("; I/O error: ") + e.what();
        return result;
    }

    if (verbose) std::fputs((result.summary + "\n").c_str(), stderr);
    return result;
}

}  // namespace prbm
