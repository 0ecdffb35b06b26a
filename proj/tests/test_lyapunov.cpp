#include <doctest.h>

#include <cmath>

#include "prbm/errors.hpp"
#include "prbm/lyapunov.hpp"
#include "prbm/rng.hpp"

using namespace prbm;

namespace {

Model make_model(double beta, double s1, double s2, bool unit_normal = true, double s0 = 1.0,
                 double c0 = 1.0, int d = 1) {
    return Model(DomainGeometry(d, BoundaryFunction::power_blend(1.0, beta, beta == 0.5 ? 0.0 : 1.0)),
                 CovarianceField::constant_diagonal(s1, s2),
                 unit_normal ? ReflectionField::unit_normal()
                             : ReflectionField::scaled_normal(s0, c0));
}

std::vector<double> log_grid(double lo_exp, double hi_exp, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / (n - 1));
    return g;
}

Point fd_gradient(const LyapunovFunction& f, const Point& z) {
    Point g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double h = 6e-6 * (1.0 + std::abs(z[i]));
        Point zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        g[i] = (lyapunov_eval(f, zp) - lyapunov_eval(f, zm)) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("shift constant for the polynomial family") {
    const auto sqrt_b = BoundaryFunction::power_blend(1.0, 0.5, 0.0);
    CHECK(compute_k_w(sqrt_b, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(compute_k_w(sqrt_b, 0.5) == doctest::Approx(1.0625).epsilon(1e-9));

    const auto wide = BoundaryFunction::power_blend(2.0, 0.5, 0.0);
    CHECK(compute_k_w(wide, -1.0) == doctest::Approx(3.0).epsilon(1e-9));

    const auto linear = BoundaryFunction::custom([](double x) { return x; },
                                                 [](double) { return 1.0; },
                                                 [](double) { return 0.0; }, 1.0);
    CHECK_THROWS_AS(compute_k_w(linear, -1.0), non_sublinear_error);
    CHECK_THROWS_AS(compute_k_w(sqrt_b, 0.0), config_error);
}

TEST_CASE("polynomial family: closed-form values on the axis") {
    const PolyLyapunov f{0.5, 1.0, 1.0625};
    const LyapunovFunction lf = f;
    CHECK(lyapunov_eval(lf, Point{4.0, 0.0}) == doctest::Approx(5.0625).epsilon(1e-14));
    const Point g = lyapunov_grad(lf, Point{4.0, 0.0});
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(0.0));
}

TEST_CASE("closed-form gradients match central differences everywhere") {
    const auto b = BoundaryFunction::power_blend(1.0, 0.5, 0.0);
    const double k_w = compute_k_w(b, 0.7);
    const DomainGeometry dom(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0));
    const std::vector<LyapunovFunction> fams{
        PolyLyapunov{0.7, 0.3, k_w},
        PolyLyapunov{-0.6, -0.4, compute_k_w(b, -0.6)},
        MollifiedLyapunov{{0.7, 1.4, k_w}, 1.0, 2.0, 0.8},
        LogLyapunov{0.25, 0.5},
    };
    const rng::PathStream stream(7, 11);
    for (const auto& f : fams) {
        int checked = 0;
        for (int i = 0; checked < 1000 && i < 4000; ++i) {
            const double x = std::pow(10.0, 0.5 + 3.5 * stream.uniform(i, 0));
            if (std::holds_alternative<LogLyapunov>(f) && x <= 2.72) continue;
            const double frac = 0.95 * stream.uniform(i, 1);
            const Point z{x, frac * dom.boundary.value(x)};
            const Point an = lyapunov_grad(f, z);
            const Point fd = fd_gradient(f, z);
            double scale = 0.0;
            for (double v : an) scale = std::max(scale, std::abs(v));
            for (std::size_t c = 0; c < z.size(); ++c)
                CHECK(std::abs(an[c] - fd[c]) <= 1e-6 * std::max(scale, 1e-12));
            ++checked;
        }
        CHECK(checked == 1000);
    }
}

TEST_CASE("sandwich bounds hold on the domain") {
    const auto b = BoundaryFunction::power_blend(1.0, 0.5, 0.0);
    const DomainGeometry dom(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0));
    for (double w : {-1.0, 0.4, 0.9, 1.7}) {
        const double k_w = compute_k_w(b, w);
        for (double gamma : {-0.8, 0.5, 2.0}) {
            const LyapunovFunction f = PolyLyapunov{w, gamma, k_w};
            const rng::PathStream stream(3, 5);
            for (int i = 0; i < 300; ++i) {
                const double x = std::pow(10.0, -2.0 + 6.0 * stream.uniform(i, 0));
                const Point z{x, (2.0 * stream.uniform(i, 1) - 1.0) * dom.boundary.value(x)};
                const double v = lyapunov_eval(f, z);
                const double base = std::pow(x + k_w, gamma);
                const double fac = std::pow(2.0, std::abs(gamma) / std::abs(w));
                CHECK(v >= base / fac * (1.0 - 1e-12));
                CHECK(v <= base * fac * (1.0 + 1e-12));
            }
        }
    }
}

TEST_CASE("Sigma-Laplacian approaches its large-x form") {
    const auto m = make_model(0.5, 1.0, 1.0);
    for (const auto& [w, gamma] : std::vector<std::pair<double, double>>{
             {0.5, 0.2}, {1.65, 1.1}, {-0.4, -0.2}}) {
        const double k_w = compute_k_w(m.dom.boundary, w);
        const LyapunovFunction f = PolyLyapunov{w, gamma, k_w};
        const double x = 1e4;
        const Point z{x, 0.3 * m.dom.boundary.value(x)};
        const double lap = sigma_laplacian(f, m.sigma, z, 1);
        const double base = lyapunov_eval(LyapunovFunction(PolyLyapunov{w, 1.0, k_w}), z);
        const double asym = gamma * std::pow(base, gamma - 2.0) *
                            (m.sigma.sigma1_sq() * (gamma - 1.0) +
                             m.sigma.sigma2_sq() * (1.0 - w));
        CHECK(std::abs(lap - asym) <= 0.05 * std::abs(asym));
    }
    // w = 1 with gamma = 1 collapses the leading term entirely
    const LyapunovFunction flat = PolyLyapunov{1.0, 1.0, 1.0};
    const Point z{1e4, 0.3 * m.dom.boundary.value(1e4)};
    CHECK(std::abs(sigma_laplacian(flat, m.sigma, z, 1)) < 1e-8);
}

TEST_CASE("mollified family: window identities") {
    const MollifiedLyapunov F{{0.5, 1.0, 1.0625}, 1.0, 2.0, 0.7};
    const LyapunovFunction lf = F;
    const LyapunovFunction base = F.base;
    CHECK(mollifier(1.0, 1.0, 2.0) == 0.0);
    CHECK(mollifier(2.0, 1.0, 2.0) == 1.0);
    CHECK(mollifier_deriv(1.0, 1.0, 2.0) == 0.0);
    CHECK(mollifier_deriv(2.0, 1.0, 2.0) == 0.0);

    CHECK(lyapunov_eval(lf, Point{0.5, 0.3}) == 0.7);   // identically k below x0
    CHECK(lyapunov_eval(lf, Point{3.0, 0.4}) ==
          lyapunov_eval(base, Point{3.0, 0.4}));        // coincides with f above x1

    // monotone window along many lines
    const rng::PathStream stream(2, 9);
    for (int line = 0; line < 1000; ++line) {
        const double x0 = 0.2 + stream.uniform(line, 0);
        const double x1 = x0 + 0.5 + stream.uniform(line, 1);
        double prev = -1.0;
        for (int i = 0; i <= 50; ++i) {
            const double x = x0 - 0.2 + (x1 - x0 + 0.4) * i / 50.0;
            const double v = mollifier(x, x0, x1);
            CHECK(v >= prev - 1e-15);
            prev = v;
        }
    }
}

TEST_CASE("logarithmic family: bounds and domain guard") {
    const LogLyapunov g{0.25, 0.5};
    const LyapunovFunction lf = g;
    const DomainGeometry dom(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0));
    CHECK_THROWS_AS(lyapunov_eval(lf, Point{2.0, 0.0}), domain_error);
    // log x <= g <= log x + C_delta with one fixed constant over the grid
    const double C_delta = 1.0 + 0.5 * 0.5 * (1.0 + 0.25);  // 1 + ratio/2 (1+delta) covers b^2/x^2 <= 1/x
    for (double x : log_grid(0.5, 8, 40)) {
        if (x <= std::exp(1.0)) continue;
        for (double frac : {0.0, 0.5, 1.0}) {
            const Point z{x, frac * dom.boundary.value(x)};
            const double v = lyapunov_eval(lf, z);
            CHECK(v >= std::log(x));
            CHECK(v <= std::log(x) + C_delta);
        }
    }
}

TEST_CASE("boundary drift signs of the polynomial family at large x") {
    const auto m = make_model(0.1, 1.0, 1.0);  // beta = 0.1, normal reflection
    const double k_w = compute_k_w(m.dom.boundary, 0.5);
    // gamma > 0, w < 1 - beta s0/c0: negative drift far out
    const LyapunovFunction neg = PolyLyapunov{0.5, 0.2, k_w};
    CHECK(boundary_drift(neg, m, m.dom.boundary_point(1e6)) < 0.0);
    // flip the sign condition: gamma < 0 makes it positive
    const LyapunovFunction pos = PolyLyapunov{0.5, -0.2, k_w};
    CHECK(boundary_drift(pos, m, m.dom.boundary_point(1e6)) > 0.0);
}

TEST_CASE("critical growth rate: logarithmic function has negative drift and Laplacian") {
    // beta = beta_c = 0.5 with sigma1^2 = 0.5, sigma2^2 = 1, exact scaled normal
    const auto m = make_model(0.5, 0.5, 1.0, false, 1.0, 1.0);
    CHECK(m.beta_c() == doctest::Approx(0.5));
    const double delta = 0.25;  // < min(eps, 1 - beta)
    const LyapunovFunction g = LogLyapunov{delta, 0.5};

    double x0 = -1.0;
    for (double x : log_grid(0.6, 5, 60)) {
        if (x <= 3.0) continue;
        bool neg = boundary_drift(g, m, m.dom.boundary_point(x)) < 0.0;
        for (double frac : {0.0, 0.5, 0.95})
            neg = neg && sigma_laplacian(g, m.sigma, Point{x, frac * m.dom.boundary.value(x)},
                                         1) < 0.0;
        if (neg && x0 < 0.0) x0 = x;
        if (!neg) x0 = -1.0;
    }
    REQUIRE(x0 > 0.0);  // both signs stabilise beyond a finite level
    CHECK(x0 < 100.0);

    // the boundary drift matches its predicted envelope -s0^2 beta^2/c0 b^3 x^{-4}
    const double x = 1e4;
    const double drift = boundary_drift(g, m, m.dom.boundary_point(x));
    const double bx = m.dom.boundary.value(x);
    const double envelope = -0.25 * bx * bx * bx / (x * x * x * x);
    CHECK(drift == doctest::Approx(envelope).epsilon(0.05));
}

TEST_CASE("drift sign verification on the reference models") {
    const auto grid = log_grid(0, 9, 91);
    // null-recurrent parameters stabilise negative
    const auto m2 = make_model(0.1, 1.0, 1.0);
    const SignReport r1 = verify_drift_asymptotics(m2, 0.5, 0.2, grid);
    CHECK(r1.expected_sign == -1);
    CHECK(r1.conclusive);
    CHECK(r1.tail_max_rel_dev < 0.05);
    CHECK(r1.grad_bound_C > 0.0);

    // transient parameters: both the Laplacian and the drift go negative
    const auto m3 = make_model(0.65, 0.5, 1.0);
    const ParameterChoice pc = choose_parameters(m3, Regime::Transient);
    const SignReport r2 = verify_drift_asymptotics(m3, pc.w, pc.gamma, grid);
    CHECK(r2.expected_sign == -1);
    CHECK(r2.conclusive);
    const double coeff = m3.sigma.sigma1_sq() * (pc.gamma - 1.0) +
                         m3.sigma.sigma2_sq() * (1.0 - pc.w);
    CHECK(pc.gamma * coeff < 0.0);  // interior inequality of the transient choice
}

TEST_CASE("parameter chooser: reference values and regime guards") {
    const auto m2 = make_model(0.1, 1.0, 1.0);
    const ParameterChoice rec = choose_parameters(m2, Regime::Recurrent);
    CHECK(rec.w == doctest::Approx(0.45).epsilon(1e-12));
    CHECK(rec.gamma == doctest::Approx(0.225).epsilon(1e-12));

    const auto m3 = make_model(0.65, 0.5, 1.0);
    const ParameterChoice tr = choose_parameters(m3, Regime::Transient);
    CHECK(tr.aux.at("w_lo") == doctest::Approx(0.35));
    CHECK(tr.aux.at("w_hi") == doctest::Approx(0.5));
    CHECK(tr.gamma < 0.0);
    CHECK(tr.gamma > tr.aux.at("gamma_lo"));
    // both inequalities of the transient choice hold at the midpoint
    CHECK(tr.gamma * (m3.sigma.sigma1_sq() * (tr.gamma - 1.0) +
                      m3.sigma.sigma2_sq() * (1.0 - tr.w)) < 0.0);
    CHECK(tr.gamma * (m3.phi.s0() * m3.beta() / m3.phi.c0() - 1.0 + tr.w) < 0.0);

    const auto m_bad = make_model(0.6, 0.5, 1.0);
    CHECK_THROWS_WITH_AS(choose_parameters(m_bad, Regime::Recurrent).w,
                         doctest::Contains("beta < beta_c"), regime_error);

    const auto m1 = make_model(-1.2, 1.0, 1.0);
    const ParameterChoice ru = choose_parameters(m1, Regime::ReturnUpper);
    CHECK(ru.gamma > 0.0);
    CHECK(ru.gamma < 0.5 * (1.0 - m1.beta() / m1.beta_c()));
    CHECK(m1.sigma.sigma1_sq() * (2.0 * ru.gamma - 1.0) +
              m1.sigma.sigma2_sq() * (1.0 - ru.w) <
          0.0);

    const ParameterChoice rl = choose_parameters(m1, Regime::ReturnLower);
    CHECK(rl.gamma > 1.0 - m1.beta() / m1.beta_c());
    CHECK(rl.gamma * (m1.sigma.sigma1_sq() * (rl.gamma - 1.0) +
                      m1.sigma.sigma2_sq() * (1.0 - rl.w)) > 0.0);
}

TEST_CASE("stationary drift certificate on the narrowing model") {
    const auto m1 = make_model(-1.2, 1.0, 1.0);
    CHECK(0.5 * (1.0 - m1.beta() / m1.beta_c()) == doctest::Approx(1.1));

    const DriftCertificate cert = find_drift_certificate(m1, 1.1);
    CHECK(cert.found);
    CHECK(cert.min_interior_margin > 0.0);
    CHECK(cert.min_boundary_margin > 0.0);
    CHECK(cert.grid_points >= 10000);
    CHECK(cert.boundary_samples >= 64);
    CHECK(cert.C1 > 0.0);
    CHECK(cert.x2 >= cert.x1);

    // gamma outside the admissible interval
    CHECK_THROWS_AS(find_drift_certificate(m1, 2.5), regime_error);

    // dropping the compact-set allowance breaks the inequality somewhere
    DriftCertificateOptions opts;
    opts.x2_override = 0.0;
    opts.C2_override = 0.0;
    opts.min_grid_points = 4000;
    const DriftCertificate bare = find_drift_certificate(m1, 1.1, opts);
    CHECK(!bare.found);
    CHECK(!bare.witness.empty());
}
