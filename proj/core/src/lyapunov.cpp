#include "prbm/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "prbm/errors.hpp"
#include "prbm/rng.hpp"

namespace prbm {

namespace {

constexpr double kEuler = 2.718281828459045235360287;

struct PolyParts {
    double u, s, h, f1;
};

PolyParts poly_parts(const PolyLyapunov& f, std::span<const double> z) {
    PolyParts p;
    p.u = z[0] + f.k_w;
    p.s = y_norm_sq(z);
    p.h = 1.0 + f.w * (1.0 - f.w) * p.s / (2.0 * p.u * p.u);
    if (!(p.h > 0.45 && p.h < 1.55))
        throw std::logic_error("Lyapunov bracket left [1/2,3/2]; k_w inconsistent with the domain");
    p.f1 = p.u * std::pow(p.h, 1.0 / f.w);
    return p;
}

double poly_eval(const PolyLyapunov& f, std::span<const double> z) {
    const PolyParts p = poly_parts(f, z);
    return std::pow(p.f1, f.gamma);
}

Point poly_grad(const PolyLyapunov& f, std::span<const double> z) {
    const PolyParts p = poly_parts(f, z);
    const double hw = std::pow(p.h, 1.0 / f.w);        // h^{1/w}
    const double hw1 = hw / p.h;                       // h^{1/w - 1}
    const double one_w = 1.0 - f.w;
    Point g(z.size());
    g[0] = hw - one_w * p.s / (p.u * p.u) * hw1;
    for (std::size_t i = 1; i < z.size(); ++i) g[i] = one_w * z[i] / p.u * hw1;
    const double scale = f.gamma * std::pow(p.f1, f.gamma - 1.0);
    for (double& v : g) v *= scale;
    return g;
}

double log_eval(const LogLyapunov& f, std::span<const double> z) {
    if (!(z[0] > kEuler)) throw domain_error("logarithmic Lyapunov function needs x > e");
    const double x = z[0];
    const double s = y_norm_sq(z);
    const double xd = std::pow(x, -f.delta);
    return std::log(x) - xd + f.ratio * s / (2.0 * x * x) * (1.0 + f.delta * xd) + 1.0;
}

Point log_grad(const LogLyapunov& f, std::span<const double> z) {
    if (!(z[0] > kEuler)) throw domain_error("logarithmic Lyapunov function needs x > e");
    const double x = z[0];
    const double s = y_norm_sq(z);
    const double xd = std::pow(x, -f.delta);
    Point g(z.size());
    g[0] = (1.0 + f.delta * xd) / x -
           f.ratio * s / (x * x * x) * (1.0 + f.delta * (1.0 + 0.5 * f.delta) * xd);
    const double ty = f.ratio / (x * x) * (1.0 + f.delta * xd);
    for (std::size_t i = 1; i < z.size(); ++i) g[i] = ty * z[i];
    return g;
}

}  // namespace

double mollifier(double x, double x0, double x1) {
    if (x <= x0) return 0.0;
    if (x >= x1) return 1.0;
    const double w = x1 - x0;
    const double q = w * w - (x1 - x) * (x1 - x);
    return std::exp(1.0 / (w * w) - 1.0 / q);
}

double mollifier_deriv(double x, double x0, double x1) {
    if (x <= x0 || x >= x1) return 0.0;
    const double w = x1 - x0;
    const double q = w * w - (x1 - x) * (x1 - x);
    return mollifier(x, x0, x1) * 2.0 * (x1 - x) / (q * q);
}

namespace {

double molly_eval(const MollifiedLyapunov& f, std::span<const double> z) {
    const double m = mollifier(z[0], f.x0, f.x1);
    if (m == 0.0) return f.k;
    const double v = poly_eval(f.base, z);
    if (m == 1.0) return v;
    return v * m + f.k * (1.0 - m);
}

Point molly_grad(const MollifiedLyapunov& f, std::span<const double> z) {
    const double m = mollifier(z[0], f.x0, f.x1);
    if (m == 0.0) return Point(z.size(), 0.0);
    Point g = poly_grad(f.base, z);
    if (m == 1.0) return g;
    const double dm = mollifier_deriv(z[0], f.x0, f.x1);
    const double v = poly_eval(f.base, z);
    for (double& c : g) c *= m;
    g[0] += (v - f.k) * dm;
    return g;
}

double raw_eval(const LyapunovFunction& f, std::span<const double> z) {
    return std::visit(
        [&](const auto& fn) -> double {
            using T = std::decay_t<decltype(fn)>;
            if constexpr (std::is_same_v<T, PolyLyapunov>) return poly_eval(fn, z);
            else if constexpr (std::is_same_v<T, MollifiedLyapunov>) return molly_eval(fn, z);
            else return log_eval(fn, z);
        },
        f);
}

void check_membership(std::span<const double> z, const DomainGeometry* dom) {
    if (!dom) return;
    if (z[0] < 0.0) throw geometry_error("point outside the x >= 0 halfspace");
    const double gap = dom->signed_gap(z);
    if (gap < kGapLowerScale * (1.0 + norm(z)) * 1e3 && gap < -1e-9 * (1.0 + norm(z)))
        throw geometry_error("Lyapunov evaluation outside the domain");
}

}  // namespace

double lyapunov_eval(const LyapunovFunction& f, std::span<const double> z,
                     const DomainGeometry* dom) {
    check_membership(z, dom);
    return raw_eval(f, z);
}

Point lyapunov_grad(const LyapunovFunction& f, std::span<const double> z,
                    const DomainGeometry* dom) {
    check_membership(z, dom);
    return std::visit(
        [&](const auto& fn) -> Point {
            using T = std::decay_t<decltype(fn)>;
            if constexpr (std::is_same_v<T, PolyLyapunov>) return poly_grad(fn, z);
            else if constexpr (std::is_same_v<T, MollifiedLyapunov>) return molly_grad(fn, z);
            else return log_grad(fn, z);
        },
        f);
}

double sigma_laplacian(const LyapunovFunction& f, const CovarianceField& sigma,
                       std::span<const double> z, int d) {
    const int n = d + 1;
    const double h = 1e-5 * (1.0 + norm(z));
    Point zp(z.begin(), z.end());
    const double f0 = raw_eval(f, zp);
    const Matrix s = sigma.matrix(z, d);

    double lap = 0.0;
    for (int i = 0; i < n; ++i) {
        // diagonal second difference
        zp[i] = z[i] + h;
        const double fp = raw_eval(f, zp);
        zp[i] = z[i] - h;
        const double fm = raw_eval(f, zp);
        zp[i] = z[i];
        lap += s[static_cast<std::size_t>(i) * n + i] * (fp - 2.0 * f0 + fm) / (h * h);
        for (int j = i + 1; j < n; ++j) {
            const double sij = s[static_cast<std::size_t>(i) * n + j];
            if (sij == 0.0) continue;
            zp[i] = z[i] + h; zp[j] = z[j] + h;
            const double fpp = raw_eval(f, zp);
            zp[j] = z[j] - h;
            const double fpm = raw_eval(f, zp);
            zp[i] = z[i] - h; zp[j] = z[j] + h;
            const double fmp = raw_eval(f, zp);
            zp[j] = z[j] - h;
            const double fmm = raw_eval(f, zp);
            zp[i] = z[i]; zp[j] = z[j];
            lap += 2.0 * sij * (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
    }
    return lap;
}

double boundary_drift(const LyapunovFunction& f, const Model& m, std::span<const double> z) {
    if (!m.dom.on_boundary(z)) throw geometry_error("boundary drift requested off the boundary");
    const Point g = lyapunov_grad(f, z);
    const Point phi = eval_phi(m.phi, m.dom, z);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * phi[i];
    return dot;
}

double compute_k_w(const BoundaryFunction& b, double w) {
    if (w == 0.0) throw config_error("Lyapunov parameter w must be nonzero");
    const double c = std::sqrt(std::abs(w * (1.0 - w)));
    if (c == 0.0) return 1.0;

    auto objective = [&](double x) { return c * b.value(x) - x; };

    const int n = 20000;
    const double lo = -6.0, hi = 9.0;  // log10 range
    double best = 0.0, best_x = 0.0;
    int best_i = -1;
    double prev = -std::numeric_limits<double>::infinity();
    double last_slope = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = std::pow(10.0, lo + (hi - lo) * i / n);
        const double v = objective(x);
        if (v > best) {
            best = v;
            best_x = x;
            best_i = i;
        }
        last_slope = v - prev;
        prev = v;
    }
    if (best_i == n && best > 0.0 && last_slope > 0.0)
        throw non_sublinear_error("sup(c b(x) - x) still increasing at x = 1e9");

    if (best_i > 0) {
        // golden-section refinement around the grid argmax
        double a = std::pow(10.0, lo + (hi - lo) * (best_i - 1) / static_cast<double>(n));
        double d2 = std::pow(10.0, lo + (hi - lo) * std::min(n, best_i + 1) / static_cast<double>(n));
        const double gr = 0.6180339887498949;
        double x1 = d2 - gr * (d2 - a), x2 = a + gr * (d2 - a);
        double f1 = objective(x1), f2 = objective(x2);
        for (int it = 0; it < 120 && (d2 - a) > 1e-14 * (1.0 + d2); ++it) {
            if (f1 < f2) {
                a = x1; x1 = x2; f1 = f2;
                x2 = a + gr * (d2 - a); f2 = objective(x2);
            } else {
                d2 = x2; x2 = x1; f2 = f1;
                x1 = d2 - gr * (d2 - a); f1 = objective(x1);
            }
        }
        best = std::max(best, std::max(f1, f2));
        (void)best_x;
    }
    return 1.0 + std::max(0.0, best);
}

namespace {

// deterministic unit directions in R^d
std::vector<Point> sample_directions(int d, int count) {
    std::vector<Point> dirs;
    dirs.reserve(count);
    if (d == 1) {
        for (int i = 0; i < count; ++i) dirs.push_back(Point{i % 2 == 0 ? 1.0 : -1.0});
        return dirs;
    }
    const rng::PathStream stream(0x5EEDDA7Au, 7);
    std::uint64_t step = 0;
    while (static_cast<int>(dirs.size()) < count) {
        Point v(static_cast<std::size_t>(d));
        rng::fill_normals(stream, step++, v.data(), d);
        double nn = 0.0;
        for (double c : v) nn += c * c;
        if (nn < 1e-12) continue;
        for (double& c : v) c /= std::sqrt(nn);
        dirs.push_back(std::move(v));
    }
    return dirs;
}

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

}  // namespace

SignReport verify_drift_asymptotics(const Model& m, double w, double gamma,
                                    const std::vector<double>& x_grid) {
    if (x_grid.size() < 8) throw config_error("drift sign verification needs >= 8 grid points");
    SignReport rep;
    rep.w = w;
    rep.gamma = gamma;
    rep.k_w = compute_k_w(m.dom.boundary, w);
    const double beta = m.beta();
    const double s1 = m.sigma.sigma1_sq(), s2 = m.sigma.sigma2_sq();
    rep.expected_sign = sign_of(gamma * (m.phi.s0() * beta / m.phi.c0() - 1.0 + w));
    rep.asymptote_coeff = s1 * (gamma - 1.0) + s2 * (1.0 - w);

    const PolyLyapunov f{w, gamma, rep.k_w};
    const LyapunovFunction lf = f;
    const auto dirs = sample_directions(m.dom.d, 32);

    // (i) sign stabilisation over the grid
    std::ptrdiff_t last_mismatch = -1;
    for (std::size_t gi = 0; gi < x_grid.size(); ++gi) {
        for (const auto& dir : dirs) {
            const Point z = m.dom.boundary_point(x_grid[gi], dir);
            if (sign_of(boundary_drift(lf, m, z)) != rep.expected_sign) {
                last_mismatch = static_cast<std::ptrdiff_t>(gi);
                break;
            }
        }
    }
    const double top = x_grid.back();
    if (last_mismatch + 1 >= static_cast<std::ptrdiff_t>(x_grid.size())) {
        rep.conclusive = false;
        rep.note = "sign never stabilises on the grid";
    } else {
        rep.stabilization_x = x_grid[static_cast<std::size_t>(last_mismatch + 1)];
        // stabilisation must cover the top two decades
        rep.conclusive = rep.stabilization_x <= top / 100.0 || last_mismatch == -1;
        if (!rep.conclusive) rep.note = "violations persist into the top two decades";
    }

    // (ii) Sigma-Laplacian vs its large-x form on the top two decades
    double max_rel = 0.0, max_abs = 0.0;
    for (double x : x_grid) {
        if (x < top / 100.0) continue;
        Point z = m.dom.boundary_point(x);
        for (std::size_t i = 1; i < z.size(); ++i) z[i] *= 0.5;
        const double lap = sigma_laplacian(lf, m.sigma, z, m.dom.d);
        const PolyLyapunov f1{w, 1.0, rep.k_w};
        const double base = poly_eval(f1, z);
        const double asym = gamma * std::pow(base, gamma - 2.0) * rep.asymptote_coeff;
        max_abs = std::max(max_abs, std::abs(lap - asym));
        if (asym != 0.0) max_rel = std::max(max_rel, std::abs(lap - asym) / std::abs(asym));
    }
    rep.tail_max_rel_dev = max_rel;
    rep.tail_max_abs_dev = max_abs;

    // (iii) gradient envelope constant
    double C = 0.0;
    for (double x : x_grid) {
        for (double frac : {0.0, 0.5, 1.0}) {
            Point z = m.dom.boundary_point(x);
            for (std::size_t i = 1; i < z.size(); ++i) z[i] *= frac;
            const Point g = lyapunov_grad(lf, z);
            double g2 = 0.0;
            for (double v : g) g2 += v * v;
            C = std::max(C, g2 / std::pow(x + rep.k_w, 2.0 * (gamma - 1.0)));
        }
    }
    rep.grad_bound_C = C;
    return rep;
}

namespace {

struct Interval {
    double lo, hi;
    std::string name;
};

double midpoint_off_zero(const Interval& iv) {
    if (!(iv.lo < iv.hi))
        throw regime_error("empty parameter interval: " + iv.name + " violated");
    double mid = 0.5 * (iv.lo + iv.hi);
    if (std::abs(mid) <= 1e-9 * (iv.hi - iv.lo)) mid = iv.lo + 0.6 * (iv.hi - iv.lo);
    return mid;
}

}  // namespace

ParameterChoice choose_parameters(const Model& m, Regime regime) {
    const double beta = m.beta();
    const double bc = m.beta_c();
    const double s1 = m.sigma.sigma1_sq(), s2 = m.sigma.sigma2_sq();
    const double s0 = m.phi.s0(), c0 = m.phi.c0();
    const double q = beta / bc;
    const double m_c = 0.5 * (1.0 - q);

    ParameterChoice out;
    out.regime = regime;

    switch (regime) {
        case Regime::Recurrent: {
            if (!(beta < bc)) throw regime_error("regime error: beta < beta_c violated");
            const Interval wi{1.0 - s1 / s2, 1.0 - beta * s0 / c0, "w in (1-s1^2/s2^2, 1-beta s0/c0)"};
            out.w = midpoint_off_zero(wi);
            const double ghi = std::min(1.0, 1.0 - (1.0 - out.w) * s2 / s1);
            const Interval gi{0.0, ghi, "gamma in (0, min(1, 1-(1-w) s2^2/s1^2))"};
            out.gamma = midpoint_off_zero(gi);
            out.aux = {{"w_lo", wi.lo}, {"w_hi", wi.hi}, {"gamma_hi", ghi}};
            break;
        }
        case Regime::Transient: {
            if (!(beta > bc)) throw regime_error("regime error: beta > beta_c violated");
            const Interval wi{1.0 - beta * s0 / c0, 1.0 - s1 / s2, "w in (1-beta s0/c0, 1-s1^2/s2^2)"};
            out.w = midpoint_off_zero(wi);
            const double glo = 1.0 - s2 / s1 * (1.0 - out.w);
            const Interval gi{glo, 0.0, "gamma in (1-(1-w) s2^2/s1^2, 0)"};
            out.gamma = midpoint_off_zero(gi);
            out.aux = {{"w_lo", wi.lo}, {"w_hi", wi.hi}, {"gamma_lo", glo}};
            break;
        }
        case Regime::ReturnUpper: {
            if (!(beta < bc)) throw regime_error("regime error: beta < beta_c violated");
            const Interval gi{0.0, m_c, "gamma in (0, (1-beta/beta_c)/2)"};
            out.gamma = midpoint_off_zero(gi);
            const Interval wi{1.0 - s1 * (1.0 - 2.0 * out.gamma) / s2, 1.0 - beta * s0 / c0,
                              "w in (1-s1^2(1-2 gamma)/s2^2, 1-beta s0/c0)"};
            out.w = midpoint_off_zero(wi);
            const double eps_cap = -(s1 * (2.0 * out.gamma - 1.0) + s2 * (1.0 - out.w));
            out.aux = {{"gamma_hi", m_c}, {"w_lo", wi.lo}, {"w_hi", wi.hi},
                       {"epsilon", 0.5 * eps_cap}};
            break;
        }
        case Regime::ReturnLower: {
            if (!(beta < bc)) throw regime_error("regime error: beta < beta_c violated");
            const double p = 2.0 * m_c + 1.0;  // any p > 2 m_c works
            const Interval wi{1.0 - beta * s0 / c0, 1.0 - (1.0 - p) * s1 / s2,
                              "w in (1-beta s0/c0, 1-(1-p) s1^2/s2^2)"};
            out.w = midpoint_off_zero(wi);
            out.gamma = p;
            out.aux = {{"p", p}, {"w_lo", wi.lo}, {"w_hi", wi.hi}};
            break;
        }
        case Regime::StationaryDrift: {
            if (!(beta < -bc)) throw regime_error("regime error: beta < -beta_c violated");
            const Interval gi{0.0, 1.0 - q, "gamma in (0, 1-beta/beta_c)"};
            out.gamma = midpoint_off_zero(gi);
            const DriftCertificate cert = find_drift_certificate(m, out.gamma);
            out.w = cert.w;
            out.aux = {{"x0", cert.x0}, {"x1", cert.x1}, {"k", cert.k},   {"x2", cert.x2},
                       {"C1", cert.C1}, {"C2", cert.C2}, {"found", cert.found ? 1.0 : 0.0}};
            break;
        }
    }
    return out;
}

DriftCertificate find_drift_certificate(const Model& m, double gamma,
                                        const DriftCertificateOptions& opts) {
    const double beta = m.beta();
    const double bc = m.beta_c();
    const double s1 = m.sigma.sigma1_sq(), s2 = m.sigma.sigma2_sq();
    if (!(beta < -bc)) throw regime_error("regime error: beta < -beta_c violated");
    if (!(gamma > 0.0 && gamma < 1.0 - beta / bc))
        throw regime_error("regime error: gamma outside (0, 1-beta/beta_c)");

    DriftCertificate cert;
    cert.gamma = gamma;
    const Interval wi{1.0 + s1 / s2 * (gamma - 1.0), 1.0 - beta * m.phi.s0() / m.phi.c0(),
                      "w in (1+s1^2/s2^2(gamma-1), 1-beta s0/c0)"};
    cert.w = midpoint_off_zero(wi);
    cert.k_w = compute_k_w(m.dom.boundary, cert.w);
    cert.C1 = -gamma * (s1 * (gamma - 1.0) + s2 * (1.0 - cert.w)) / 4.0;

    const PolyLyapunov fg{cert.w, gamma, cert.k_w};
    const LyapunovFunction lfg = fg;
    const auto dirs = sample_directions(m.dom.d, std::max<std::size_t>(8, opts.boundary_samples / 8));

    // locate the sign-stabilisation level of <grad f, phi> on the boundary
    const double xcap = opts.x_grid_max;
    double x_stab = 0.0;
    {
        const int per_dec = 16;
        const double lo_exp = -2.0, hi_exp = std::log10(xcap);
        const int npts = static_cast<int>((hi_exp - lo_exp) * per_dec);
        double last_bad = 0.0;
        for (int i = 0; i <= npts; ++i) {
            const double x = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / npts);
            for (const auto& dir : dirs) {
                const Point z = m.dom.boundary_point(x, dir);
                if (!(boundary_drift(lfg, m, z) < 0.0)) {
                    last_bad = x;
                    break;
                }
            }
        }
        x_stab = last_bad * 1.05;
    }

    // mollifier window: defaults [1,2] unless stabilisation or a slope sign
    // change in the blend region force it higher
    double x0 = std::max(1.0, x_stab);
    const auto& b = m.dom.boundary;
    if (b.family() == BoundaryFunction::Family::PowerBlend && b.blend_point() > 0.0)
        x0 = std::max(x0, 1.05 * b.blend_point());
    double x1 = 2.0 * x0;

    // slope sign over the window decides which side k must sit on
    int slope_sign = 0;
    bool mixed = false;
    for (int i = 0; i <= 64; ++i) {
        const double x = x0 + (x1 - x0) * i / 64.0;
        const int s = sign_of(b.eval(x).first);
        if (s == 0) continue;
        if (slope_sign == 0) slope_sign = s;
        else if (slope_sign != s) mixed = true;
    }
    if (mixed) {
        cert.note = "boundary slope changes sign on the mollifier window";
        cert.found = false;
        return cert;
    }

    // k from the window extremes of f on the boundary strip
    double fmin = std::numeric_limits<double>::infinity(), fmax = 0.0;
    for (int i = 0; i <= 128; ++i) {
        const double x = x0 + (x1 - x0) * i / 128.0;
        const Point z = m.dom.boundary_point(x);
        const double v = poly_eval(fg, z);
        fmin = std::min(fmin, v);
        fmax = std::max(fmax, v);
    }
    if (slope_sign > 0) cert.k = 2.0 * fmax;       // f - k <= 0 where <phi,e_x> > 0
    else if (slope_sign < 0) cert.k = 0.5 * fmin;  // f - k >= 0 where <phi,e_x> < 0
    else cert.k = 1.0;                             // flat boundary: any k
    cert.x0 = x0;
    cert.x1 = x1;

    const MollifiedLyapunov Fg{fg, x0, x1, cert.k};
    const MollifiedLyapunov Fg2{{cert.w, gamma - 2.0, cert.k_w}, x0, x1, cert.k};
    const LyapunovFunction lF = Fg, lF2 = Fg2;

    // interior grid: log-spaced x times transverse fractions
    const std::size_t nfrac = 25;
    const std::size_t nx = std::max<std::size_t>(opts.min_grid_points / nfrac + 1, 200);
    const double lo_exp = std::log10(0.05), hi_exp = std::log10(xcap);
    std::vector<double> xs(nx), lhs_max_per_x(nx, -std::numeric_limits<double>::infinity());
    std::vector<Point> witness_per_x(nx);
    for (std::size_t i = 0; i < nx; ++i) {
        const double x = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / (nx - 1));
        xs[i] = x;
        const double bx = b.value(x);
        for (std::size_t j = 0; j < nfrac; ++j) {
            const double frac = j / static_cast<double>(nfrac - 1) * 0.999;
            Point z(static_cast<std::size_t>(m.dom.d) + 1, 0.0);
            z[0] = x;
            z[1] = bx * frac;
            const double lhs =
                0.5 * sigma_laplacian(lF, m.sigma, z, m.dom.d) + cert.C1 * molly_eval(Fg2, z);
            if (lhs > lhs_max_per_x[i]) {
                lhs_max_per_x[i] = lhs;
                witness_per_x[i] = z;
            }
        }
    }
    cert.grid_points = nx * nfrac;

    // x2: smallest grid level beyond which the drift inequality holds with
    // zero right-hand side
    std::size_t cut = nx;
    double tail_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = nx; i-- > 0;) {
        tail_max = std::max(tail_max, lhs_max_per_x[i]);
        if (tail_max >= 0.0) {
            cut = i + 1;
            break;
        }
        cut = i;
    }
    if (opts.x2_override) {
        cert.x2 = *opts.x2_override;
    } else {
        if (cut >= nx) {
            cert.found = false;
            cert.note = "drift inequality fails arbitrarily far out";
            cert.witness = witness_per_x[nx - 1];
            return cert;
        }
        cert.x2 = cut == 0 ? 0.0 : std::max(xs[cut], x1);
    }

    double head_max = 0.0;
    for (std::size_t i = 0; i < nx && xs[i] <= cert.x2; ++i)
        head_max = std::max(head_max, lhs_max_per_x[i]);
    cert.C2 = opts.C2_override ? *opts.C2_override : 1.05 * std::max(0.0, head_max) + 1e-9;

    // margins over the full grid
    double min_margin = std::numeric_limits<double>::infinity();
    Point witness;
    for (std::size_t i = 0; i < nx; ++i) {
        const double rhs = xs[i] <= cert.x2 ? cert.C2 : 0.0;
        const double margin = rhs - lhs_max_per_x[i];
        if (margin < min_margin) {
            min_margin = margin;
            witness = witness_per_x[i];
        }
    }
    cert.min_interior_margin = min_margin;

    // boundary drift of F on samples above x0
    double min_bmargin = std::numeric_limits<double>::infinity();
    Point bwitness;
    const std::size_t nb = opts.boundary_samples;
    cert.boundary_samples = nb;
    for (std::size_t i = 0; i < nb; ++i) {
        const double x =
            std::pow(10.0, std::log10(x0 * 1.01) +
                               (std::log10(xcap) - std::log10(x0 * 1.01)) * i / (nb - 1));
        for (const auto& dir : dirs) {
            const Point z = m.dom.boundary_point(x, dir);
            const double margin = -boundary_drift(lF, m, z);
            if (margin < min_bmargin) {
                min_bmargin = margin;
                bwitness = z;
            }
        }
    }
    cert.min_boundary_margin = min_bmargin;

    cert.found = min_margin > 0.0 && min_bmargin > 0.0;
    if (!cert.found) {
        cert.witness = min_margin <= 0.0 ? witness : bwitness;
        cert.note = min_margin <= 0.0 ? "interior drift inequality violated"
                                      : "boundary drift sign violated";
    }
    return cert;
}

std::string SignReport::to_json() const {
    nlohmann::json j;
    j["w"] = w;
    j["gamma"] = gamma;
    j["k_w"] = k_w;
    j["expected_sign"] = expected_sign;
    j["conclusive"] = conclusive;
    j["stabilization_x"] = stabilization_x;
    j["tail_max_rel_dev"] = tail_max_rel_dev;
    j["tail_max_abs_dev"] = tail_max_abs_dev;
    j["asymptote_coeff"] = asymptote_coeff;
    j["grad_bound_C"] = grad_bound_C;
    j["note"] = note;
    return j.dump(2);
}

std::string DriftCertificate::to_json() const {
    nlohmann::json j;
    j["found"] = found;
    j["w"] = w;
    j["gamma"] = gamma;
    j["x0"] = x0;
    j["x1"] = x1;
    j["k"] = k;
    j["x2"] = x2;
    j["C1"] = C1;
    j["C2"] = C2;
    j["margins"] = {{"interior", min_interior_margin},
                    {"boundary", min_boundary_margin},
                    {"grid_points", grid_points},
                    {"boundary_samples", boundary_samples}};
    if (!witness.empty()) j["witness"] = witness;
    j["note"] = note;
    return j.dump(2);
}

}  // namespace prbm
