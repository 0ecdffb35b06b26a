#include "prbm/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "prbm/errors.hpp"

namespace prbm {

namespace {

// Quintic Hermite coefficients on t in [0,1] from endpoint values and scaled
// derivatives d = h*f', s = h^2*f''.
std::array<double, 6> quintic_coefficients(double f0, double d0, double s0, double f1, double d1,
                                           double s1) {
    const double df = f1 - f0;
    std::array<double, 6> c{};
    c[0] = f0;
    c[1] = d0;
    c[2] = 0.5 * s0;
    c[3] = 10.0 * df - 6.0 * d0 - 4.0 * d1 - 1.5 * s0 + 0.5 * s1;
    c[4] = -15.0 * df + 8.0 * d0 + 7.0 * d1 + 1.5 * s0 - s1;
    c[5] = 6.0 * df - 3.0 * d0 - 3.0 * d1 - 0.5 * s0 + 0.5 * s1;
    return c;
}

BoundaryFunction::Triple sqrt_core(double scale, double x) {
    const double r = std::sqrt(x);
    return {scale * r, 0.5 * scale / r, -0.25 * scale / (x * r)};
}

BoundaryFunction::Triple power_tail(double a, double beta, double x) {
    const double v = a * std::pow(x, beta);
    return {v, beta * v / x, beta * (beta - 1.0) * v / (x * x)};
}

// Oscillating profile for x >= kOscFormulaStart, written in u = log log x:
//   b = u + 1/u + u sin u.
constexpr double kOscCoreEnd = 20.0;
constexpr double kOscFormulaStart = 100.0;

BoundaryFunction::Triple oscillating_formula(double x) {
    const double lx = std::log(x);
    const double u = std::log(lx);
    const double su = std::sin(u);
    const double cu = std::cos(u);
    const double value = u + 1.0 / u + u * su;
    const double g = 1.0 - 1.0 / (u * u) + su + u * cu;       // db/du
    const double gp = 2.0 / (u * u * u) + 2.0 * cu - u * su;  // d2b/du2
    const double xlx = x * lx;
    const double first = g / xlx;
    const double second = (gp - g * (lx + 1.0)) / (xlx * xlx);
    return {value, first, second};
}

}  // namespace

BoundaryFunction BoundaryFunction::power_blend(double a, double beta, double x_b) {
    if (a <= 0.0) throw config_error("power_blend: amplitude a must be positive");
    BoundaryFunction b;
    b.family_ = Family::PowerBlend;
    b.a_ = a;
    b.beta_ = beta;
    b.x_b_ = x_b;
    b.analytic_beta_ = beta;
    if (x_b <= 0.0) {
        if (beta <= 0.0)
            throw config_error("power_blend: pure power with x_b <= 0 requires beta > 0");
        b.x_b_ = 0.0;
        b.blend_lo_ = b.blend_hi_ = 0.0;
        return b;
    }
    // sqrt core scaled to meet the tail value at x_b; the quintic bridges the
    // slope mismatch on [0.8 x_b, x_b] so the tail is exact from x_b on.
    b.core_scale_ = a * std::pow(x_b, beta - 0.5);
    const double lo = 0.8 * x_b;
    b.build_blend(lo, sqrt_core(b.core_scale_, lo), x_b, power_tail(a, beta, x_b));
    return b;
}

BoundaryFunction BoundaryFunction::oscillating() {
    BoundaryFunction b;
    b.family_ = Family::Oscillating;
    b.analytic_beta_ = 0.0;
    b.core_scale_ = oscillating_formula(kOscFormulaStart).value / std::sqrt(kOscFormulaStart);
    b.build_blend(kOscCoreEnd, sqrt_core(b.core_scale_, kOscCoreEnd), kOscFormulaStart,
                  oscillating_formula(kOscFormulaStart));
    return b;
}

BoundaryFunction BoundaryFunction::custom(Callback value, Callback first, Callback second,
                                          std::optional<double> analytic_beta,
                                          IntervalBound slope_bound) {
    if (!value || !first || !second)
        throw config_error("custom boundary requires value and derivative callbacks");
    BoundaryFunction b;
    b.family_ = Family::Custom;
    b.value_cb_ = std::move(value);
    b.first_cb_ = std::move(first);
    b.second_cb_ = std::move(second);
    b.slope_bound_cb_ = std::move(slope_bound);
    b.analytic_beta_ = analytic_beta;
    return b;
}

void BoundaryFunction::build_blend(double lo, const Triple& at_lo, double hi,
                                   const Triple& at_hi) {
    blend_lo_ = lo;
    blend_hi_ = hi;
    const double h = hi - lo;
    blend_coef_ = quintic_coefficients(at_lo.value, h * at_lo.first, h * h * at_lo.second,
                                       at_hi.value, h * at_hi.first, h * h * at_hi.second);
    // positivity + slope bound over the blend window
    double min_v = at_lo.value;
    double max_s = std::abs(at_lo.first);
    for (int i = 0; i <= 512; ++i) {
        const double x = lo + h * i / 512.0;
        const Triple t = eval_blend(x);
        min_v = std::min(min_v, t.value);
        max_s = std::max(max_s, std::abs(t.first));
    }
    if (min_v <= 0.0) throw config_error("boundary blend dips to a non-positive value");
    blend_max_slope_ = max_s * 1.02;
}

BoundaryFunction::Triple BoundaryFunction::eval_blend(double x) const {
    const double h = blend_hi_ - blend_lo_;
    const double t = (x - blend_lo_) / h;
    const auto& c = blend_coef_;
    const double v = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
    const double dv = c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])));
    const double d2v = 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]));
    return {v, dv / h, d2v / (h * h)};
}

BoundaryFunction::Triple BoundaryFunction::eval_power_blend(double x) const {
    if (x_b_ <= 0.0 || x >= blend_hi_) return power_tail(a_, beta_, x);
    if (x <= blend_lo_) return sqrt_core(core_scale_, x);
    return eval_blend(x);
}

BoundaryFunction::Triple BoundaryFunction::eval_oscillating(double x) const {
    if (x >= kOscFormulaStart) return oscillating_formula(x);
    if (x <= kOscCoreEnd) return sqrt_core(core_scale_, x);
    return eval_blend(x);
}

BoundaryFunction::Triple BoundaryFunction::eval(double x) const {
    if (!(x > 0.0)) throw domain_error("boundary derivatives are undefined at x <= 0");
    switch (family_) {
        case Family::PowerBlend:
            return eval_power_blend(x);
        case Family::Oscillating:
            return eval_oscillating(x);
        case Family::Custom:
            return {value_cb_(x), first_cb_(x), second_cb_(x)};
    }
    throw std::logic_error("unreachable boundary family");
}

double BoundaryFunction::value(double x) const {
    if (x < 0.0) throw domain_error("boundary profile is defined on x >= 0");
    if (x == 0.0) {
        if (family_ == Family::Custom) return value_cb_(0.0);
        return 0.0;
    }
    switch (family_) {
        case Family::PowerBlend:
            if (x_b_ <= 0.0 || x >= blend_hi_) return a_ * std::pow(x, beta_);
            if (x <= blend_lo_) return core_scale_ * std::sqrt(x);
            return eval_blend(x).value;
        case Family::Oscillating:
            return eval_oscillating(x).value;
        case Family::Custom:
            return value_cb_(x);
    }
    throw std::logic_error("unreachable boundary family");
}

double BoundaryFunction::oscillating_profile_loglog(double u) {
    if (!(u > 0.0)) throw domain_error("oscillating profile needs log log x > 0");
    return u + 1.0 / u + u * std::sin(u);
}

std::optional<double> BoundaryFunction::max_abs_slope(double lo, double hi) const {
    if (lo <= 0.0 || hi < lo) return std::nullopt;
    switch (family_) {
        case Family::PowerBlend: {
            double m = 0.0;
            auto tail_bound = [&](double a, double b2) {
                // |beta| a x^{beta-1} is monotone in x
                const double at_lo = std::abs(beta_) * a_ * std::pow(a, beta_ - 1.0);
                const double at_hi = std::abs(beta_) * a_ * std::pow(b2, beta_ - 1.0);
                return std::max(at_lo, at_hi);
            };
            if (x_b_ <= 0.0) return tail_bound(lo, hi);
            if (lo < blend_lo_) m = std::max(m, 0.5 * core_scale_ / std::sqrt(lo));
            if (hi > blend_lo_ && lo < blend_hi_) m = std::max(m, blend_max_slope_);
            if (hi > blend_hi_) m = std::max(m, tail_bound(std::max(lo, blend_hi_), hi));
            return m;
        }
        case Family::Oscillating: {
            double m = 0.0;
            if (lo < kOscCoreEnd) m = std::max(m, 0.5 * core_scale_ / std::sqrt(lo));
            if (hi > kOscCoreEnd && lo < kOscFormulaStart) m = std::max(m, blend_max_slope_);
            if (hi > kOscFormulaStart) {
                const double x0 = std::max(lo, kOscFormulaStart);
                const double u_hi = std::log(std::log(hi));
                m = std::max(m, (2.5 + u_hi) / (x0 * std::log(x0)));
            }
            return m;
        }
        case Family::Custom:
            if (slope_bound_cb_) return slope_bound_cb_(lo, hi);
            return std::nullopt;
    }
    return std::nullopt;
}

DomainGeometry::DomainGeometry(int dim, BoundaryFunction b) : d(dim), boundary(std::move(b)) {
    if (dim < 1) throw config_error("transverse dimension d must be >= 1");
}

bool DomainGeometry::inside(std::span<const double> z) const {
    if (z[0] < 0.0) return false;
    const double b = boundary.value(z[0]);
    return y_norm_sq(z) <= b * b;
}

double DomainGeometry::signed_gap(std::span<const double> z) const {
    if (z[0] < 0.0) throw geometry_error("point lies outside the x >= 0 halfspace");
    return boundary.value(z[0]) - y_norm(z);
}

bool DomainGeometry::on_boundary(std::span<const double> z) const {
    if (z[0] < 0.0) return false;
    const double gap = signed_gap(z);
    const double scale = 1.0 + norm(z);
    return gap >= kGapLowerScale * scale && gap <= kGapUpperScale * scale;
}

Point DomainGeometry::inward_normal(std::span<const double> z) const {
    const double ny = y_norm(z);
    if (ny <= 0.0) throw geometry_error("inward normal undefined on the axis (y = 0)");
    if (!on_boundary(z)) throw geometry_error("inward normal requested off the boundary");
    const double bp = boundary.eval(z[0]).first;
    const double s = std::sqrt(1.0 + bp * bp);
    Point n(z.size());
    n[0] = bp / s;
    for (std::size_t i = 1; i < z.size(); ++i) n[i] = -z[i] / (ny * s);
    return n;
}

Point DomainGeometry::boundary_point(double x, std::span<const double> yhat) const {
    const double b = boundary.value(x);
    Point z(static_cast<std::size_t>(d) + 1, 0.0);
    z[0] = x;
    if (yhat.empty()) {
        z[1] = b;
    } else {
        double n2 = 0.0;
        for (double v : yhat) n2 += v * v;
        const double n = std::sqrt(n2);
        if (n <= 0.0) throw geometry_error("boundary_point: zero direction");
        for (int i = 0; i < d; ++i) z[static_cast<std::size_t>(i) + 1] = b * yhat[i] / n;
    }
    return z;
}

namespace {

// trend test: values on the grid tail must shrink relative to the head
bool decaying_trend(const std::vector<double>& dev) {
    const std::size_t n = dev.size();
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < n / 4 + 1; ++i) head = std::max(head, std::abs(dev[i]));
    for (std::size_t i = n - n / 4 - 1; i < n; ++i) tail = std::max(tail, std::abs(dev[i]));
    if (tail <= 1e-9) return true;
    return tail <= 0.5 * head;
}

}  // namespace

AssumptionReport check_domain_assumptions(const BoundaryFunction& b, DomainAssumptionLevel level,
                                          const std::vector<double>& grid) {
    if (grid.size() < 8) throw config_error("assumption check grid needs at least 8 points");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] <= 0.0 || (i > 0 && grid[i] <= grid[i - 1]))
            throw config_error("assumption check grid must be positive and strictly increasing");
    }

    AssumptionReport rep;
    rep.grid = grid;

    auto add = [&rep](std::string name, bool pass, double measured, std::string note) {
        rep.checks.push_back({std::move(name), pass, measured, std::move(note)});
    };

    if (level == DomainAssumptionLevel::D1) {
        rep.level = "D1";
        // probe near the cusp
        std::vector<double> bbp, ratio;
        for (int i = 0; i <= 24; ++i) {
            const double x = std::pow(10.0, -8.0 + 6.0 * i / 24.0);
            const auto t = b.eval(x);
            bbp.push_back(t.value * t.first);
            if (t.first != 0.0) ratio.push_back(t.second / (t.first * t.first * t.first));
        }
        const double min_bbp = *std::min_element(bbp.begin(), bbp.end());
        add("liminf_b_bprime_positive", min_bbp > 0.0, min_bbp, "min of b*b' on (0,1e-2]");
        bool ratio_ok = false;
        double last = 0.0;
        if (ratio.size() >= 3) {
            last = ratio[0];
            const double prev = ratio[1];
            // the probe grid decreases toward 0, so convergence shows up at the front
            const double step = std::abs(ratio[0] - ratio[1]);
            const double scale = std::max({1e-12, 0.05 * std::abs(ratio[0]), 0.05 * std::abs(prev)});
            ratio_ok = step <= std::max(scale, 1e-6) && ratio[0] <= 1e-6;
        }
        add("bpp_over_bp_cubed_limit", ratio_ok, last, "b''/b'^3 trend toward a limit in (-inf,0]");
    } else {
        std::vector<double> bp, bpp, ratio;
        for (double x : grid) {
            const auto t = b.eval(x);
            bp.push_back(t.first);
            bpp.push_back(t.second);
            ratio.push_back(x * t.first / t.value);
        }
        const double target = b.analytic_beta() ? *b.analytic_beta() : ratio.back();
        std::vector<double> dev(ratio.size());
        for (std::size_t i = 0; i < ratio.size(); ++i) dev[i] = ratio[i] - target;

        double tail_dev = 0.0;
        for (std::size_t i = ratio.size() - ratio.size() / 4 - 1; i < ratio.size(); ++i)
            tail_dev = std::max(tail_dev, std::abs(dev[i]));

        if (level == DomainAssumptionLevel::D2) {
            rep.level = "D2";
            add("bprime_to_zero", decaying_trend(bp), std::abs(bp.back()), "|b'| decay on the grid");
            add("bsecond_to_zero", decaying_trend(bpp), std::abs(bpp.back()),
                "|b''| decay on the grid");
            add("x_bprime_over_b_to_beta", tail_dev <= 1e-9 || decaying_trend(dev), ratio.back(),
                "x b'/b vs analytic growth exponent; measured value at the grid end");
            add("beta_lt_1", target < 1.0 - 1e-9, target, "growth exponent must lie in (-inf,1)");
        } else {
            rep.level = "D2plus";
            const bool have_beta = b.analytic_beta().has_value();
            add("analytic_beta_in_0_1", have_beta && target > 0.0 && target < 1.0, target,
                "quantified level requires beta in (0,1)");
            std::vector<double> scaled(dev.size());
            for (std::size_t i = 0; i < dev.size(); ++i) {
                const double bx = b.value(grid[i]);
                scaled[i] = std::abs(dev[i]) * grid[i] * grid[i] / (bx * bx);
            }
            double tail_scaled = 0.0;
            for (std::size_t i = scaled.size() - scaled.size() / 4 - 1; i < scaled.size(); ++i)
                tail_scaled = std::max(tail_scaled, scaled[i]);
            add("quantified_beta_rate", tail_scaled <= 1e-9 || decaying_trend(scaled), tail_scaled,
                "|x b'/b - beta| * x^2 / b^2 trend");
        }
    }

    rep.pass = std::all_of(rep.checks.begin(), rep.checks.end(),
                           [](const AssumptionCheck& c) { return c.pass; });
    return rep;
}

std::string AssumptionReport::to_json() const {
    nlohmann::json j;
    j["level"] = level;
    j["pass"] = pass;
    j["grid_min"] = grid.empty() ? 0.0 : grid.front();
    j["grid_max"] = grid.empty() ? 0.0 : grid.back();
    j["grid_size"] = grid.size();
    nlohmann::json items = nlohmann::json::array();
    for (const auto& c : checks) {
        items.push_back({{"name", c.name}, {"pass", c.pass}, {"measured", c.measured},
                         {"note", c.note}});
    }
    j["checks"] = items;
    return j.dump(2);
}

}  // namespace prbm
