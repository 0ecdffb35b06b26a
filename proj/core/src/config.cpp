#include "prbm/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "prbm/errors.hpp"

namespace prbm {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& pointer,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw config_error("unknown config key " + pointer + "/" + it.key());
    }
}

double need_number(const json& obj, const std::string& pointer, const std::string& key) {
    if (!obj.contains(key) || !obj[key].is_number())
        throw config_error("missing or non-numeric field " + pointer + "/" + key);
    return obj[key].get<double>();
}

double opt_number(const json& obj, const std::string& key, double fallback) {
    return obj.contains(key) ? obj[key].get<double>() : fallback;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw config_error(std::string("malformed JSON: ") + e.what());
    }
    if (!root.is_object()) throw config_error("config root must be a JSON object");
    reject_unknown(root, "", {"d", "boundary", "sigma", "phi", "sim", "experiment", "output"});

    ExperimentConfig c;

    if (root.contains("d")) {
        if (!root["d"].is_number_integer() || root["d"].get<int>() < 1)
            throw config_error("/d must be a positive integer");
        c.d = root["d"].get<int>();
    }

    if (root.contains("boundary")) {
        const json& b = root["boundary"];
        reject_unknown(b, "/boundary", {"family", "a", "beta", "x_b"});
        if (!b.contains("family")) throw config_error("missing /boundary/family");
        c.boundary_family = b["family"].get<std::string>();
        if (c.boundary_family == "power_blend") {
            c.boundary_a = need_number(b, "/boundary", "a");
            c.boundary_beta = need_number(b, "/boundary", "beta");
            c.boundary_x_b = need_number(b, "/boundary", "x_b");
            if (c.boundary_beta >= 1.0)
                throw assumption_error("/boundary/beta must be < 1 (sublinear growth)");
        } else if (c.boundary_family == "oscillating") {
            reject_unknown(b, "/boundary", {"family"});
        } else {
            throw config_error("unknown /boundary/family '" + c.boundary_family + "'");
        }
    }

    if (root.contains("sigma")) {
        const json& s = root["sigma"];
        reject_unknown(s, "/sigma", {"kind", "sigma1_sq", "sigma2_sq"});
        c.sigma_kind = s.contains("kind") ? s["kind"].get<std::string>() : "constant_diagonal";
        if (c.sigma_kind != "constant_diagonal")
            throw config_error("/sigma/kind: only constant_diagonal is file-configurable");
        c.sigma1_sq = need_number(s, "/sigma", "sigma1_sq");
        c.sigma2_sq = need_number(s, "/sigma", "sigma2_sq");
        if (c.sigma1_sq <= 0.0 || c.sigma2_sq <= 0.0)
            throw config_error("/sigma limits must be positive");
    }

    if (root.contains("phi")) {
        const json& p = root["phi"];
        reject_unknown(p, "/phi", {"kind", "s0", "c0"});
        c.phi_kind = p.contains("kind") ? p["kind"].get<std::string>() : "unit_normal";
        if (c.phi_kind == "scaled_normal") {
            c.s0 = need_number(p, "/phi", "s0");
            c.c0 = need_number(p, "/phi", "c0");
            if (c.s0 <= 0.0 || c.c0 <= 0.0) throw config_error("/phi scales must be positive");
        } else if (c.phi_kind == "unit_normal") {
            c.s0 = c.c0 = 1.0;
        } else {
            throw config_error("unknown /phi/kind '" + c.phi_kind + "'");
        }
    }

    if (root.contains("sim")) {
        const json& s = root["sim"];
        reject_unknown(s, "/sim", {"dt", "horizon", "seed", "N", "max_substeps", "record_stride"});
        c.sim.dt = opt_number(s, "dt", c.sim.dt);
        c.sim.horizon = opt_number(s, "horizon", c.sim.horizon);
        if (s.contains("seed")) c.sim.master_seed = s["seed"].get<std::uint64_t>();
        if (s.contains("N")) c.paths = s["N"].get<std::size_t>();
        if (s.contains("max_substeps")) c.sim.max_substeps = s["max_substeps"].get<int>();
        if (s.contains("record_stride"))
            c.sim.record_stride = s["record_stride"].get<std::uint64_t>();
        c.sim.validate();
        if (c.paths < 1) throw config_error("/sim/N must be >= 1");
    }

    if (root.contains("experiment")) {
        const json& e = root["experiment"];
        reject_unknown(e, "/experiment",
                       {"mode", "levels", "start", "times", "horizons", "bins", "window",
                        "burn_in", "replicas", "negative_control", "gamma", "transform",
                        "checkpoints", "assert"});
        if (e.contains("mode")) c.mode = e["mode"].get<std::string>();
        static const std::set<std::string> modes{"classify",   "return-tails", "invariant-tail",
                                                 "tv-decay",   "transience",   "moments",
                                                 "drift-test", "simulate",     "verify-lyapunov"};
        if (!modes.count(c.mode)) throw config_error("unknown /experiment/mode '" + c.mode + "'");
        if (e.contains("levels")) c.levels = e["levels"].get<std::vector<double>>();
        if (e.contains("start")) c.start = e["start"].get<std::vector<double>>();
        if (e.contains("times")) c.times = e["times"].get<std::vector<double>>();
        if (e.contains("horizons")) c.horizons = e["horizons"].get<std::vector<double>>();
        if (e.contains("bins")) {
            reject_unknown(e["bins"], "/experiment/bins", {"x", "r"});
            c.x_bins = static_cast<int>(opt_number(e["bins"], "x", c.x_bins));
            c.r_bins = static_cast<int>(opt_number(e["bins"], "r", c.r_bins));
        }
        if (e.contains("window")) {
            const auto w = e["window"].get<std::vector<double>>();
            if (w.size() != 2 || !(w[0] < w[1]))
                throw config_error("/experiment/window must be [lo, hi] with lo < hi");
            c.window = Window{w[0], w[1]};
        }
        c.burn_in = opt_number(e, "burn_in", 0.0);
        if (e.contains("replicas")) c.replicas = e["replicas"].get<int>();
        if (e.contains("negative_control")) c.negative_control = e["negative_control"].get<bool>();
        if (e.contains("gamma")) c.gamma = e["gamma"].get<double>();
        if (e.contains("transform")) c.transform = e["transform"].get<std::string>();
        if (e.contains("checkpoints")) c.checkpoints = e["checkpoints"].get<std::vector<double>>();
        if (e.contains("assert")) {
            const json& a = e["assert"];
            reject_unknown(a, "/experiment/assert",
                           {"slope_in", "max_violations", "stabilized", "decay_below",
                            "max_over_min", "pass", "phase"});
            if (a.contains("slope_in")) {
                const auto s = a["slope_in"].get<std::vector<double>>();
                if (s.size() != 2) throw config_error("/experiment/assert/slope_in needs [lo, hi]");
                c.assert_slope_lo = s[0];
                c.assert_slope_hi = s[1];
            }
            if (a.contains("max_violations")) c.assert_max_violations = a["max_violations"].get<int>();
            if (a.contains("stabilized")) c.assert_stabilized = a["stabilized"].get<bool>();
            if (a.contains("decay_below")) c.assert_decay_below = a["decay_below"].get<double>();
            if (a.contains("max_over_min")) c.assert_max_over_min = a["max_over_min"].get<double>();
            if (a.contains("pass")) c.assert_pass = a["pass"].get<bool>();
            if (a.contains("phase")) c.assert_phase = a["phase"].get<std::string>();
        }
    }

    if (root.contains("output")) {
        const json& o = root["output"];
        reject_unknown(o, "/output", {"directory", "formats"});
        if (o.contains("directory")) c.output_directory = o["directory"].get<std::string>();
        if (o.contains("formats")) c.output_formats = o["formats"].get<std::vector<std::string>>();
    }

    // model-level validation: dimensions and start membership
    if (c.start.size() != static_cast<std::size_t>(c.d) + 1)
        throw config_error("/experiment/start must have d+1 coordinates");
    const Model model = c.build_model();
    if (!model.dom.inside(c.start))
        throw geometry_error("/experiment/start lies outside the domain");
    return c;
}

Model ExperimentConfig::build_model() const {
    BoundaryFunction b = boundary_family == "oscillating"
                             ? BoundaryFunction::oscillating()
                             : BoundaryFunction::power_blend(boundary_a, boundary_beta,
                                                             boundary_x_b);
    CovarianceField s = CovarianceField::constant_diagonal(sigma1_sq, sigma2_sq);
    ReflectionField p = phi_kind == "scaled_normal" ? ReflectionField::scaled_normal(s0, c0)
                                                    : ReflectionField::unit_normal();
    return Model(DomainGeometry(d, std::move(b)), std::move(s), std::move(p));
}

std::string ExperimentConfig::canonical_json() const {
    json root;
    root["d"] = d;
    json b;
    b["family"] = boundary_family;
    if (boundary_family == "power_blend") {
        b["a"] = boundary_a;
        b["beta"] = boundary_beta;
        b["x_b"] = boundary_x_b;
    }
    root["boundary"] = b;
    root["sigma"] = {{"kind", sigma_kind}, {"sigma1_sq", sigma1_sq}, {"sigma2_sq", sigma2_sq}};
    json p;
    p["kind"] = phi_kind;
    if (phi_kind == "scaled_normal") {
        p["s0"] = s0;
        p["c0"] = c0;
    }
    root["phi"] = p;
    root["sim"] = {{"dt", sim.dt},
                   {"horizon", sim.horizon},
                   {"seed", sim.master_seed},
                   {"N", paths},
                   {"max_substeps", sim.max_substeps},
                   {"record_stride", sim.record_stride}};
    json e;
    e["mode"] = mode;
    if (!levels.empty()) e["levels"] = levels;
    e["start"] = start;
    if (!times.empty()) e["times"] = times;
    if (!horizons.empty()) e["horizons"] = horizons;
    e["bins"] = {{"x", x_bins}, {"r", r_bins}};
    if (window) e["window"] = {window->lo, window->hi};
    if (burn_in > 0.0) e["burn_in"] = burn_in;
    if (replicas != 1) e["replicas"] = replicas;
    if (negative_control) e["negative_control"] = true;
    if (gamma) e["gamma"] = *gamma;
    if (!transform.empty()) e["transform"] = transform;
    if (!checkpoints.empty()) e["checkpoints"] = checkpoints;
    json a;
    if (assert_slope_lo) a["slope_in"] = {*assert_slope_lo, *assert_slope_hi};
    if (assert_max_violations) a["max_violations"] = *assert_max_violations;
    if (assert_stabilized) a["stabilized"] = *assert_stabilized;
    if (assert_decay_below) a["decay_below"] = *assert_decay_below;
    if (assert_max_over_min) a["max_over_min"] = *assert_max_over_min;
    if (assert_pass) a["pass"] = *assert_pass;
    if (assert_phase) a["phase"] = *assert_phase;
    if (!a.empty()) e["assert"] = a;
    root["experiment"] = e;
    root["output"] = {{"directory", output_directory}, {"formats", output_formats}};
    return root.dump(2);
}

std::string ExperimentConfig::manifest_hash() const {
    const std::string s = canonical_json();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace prbm
