#include <doctest.h>

#include <cmath>

#include "prbm/errors.hpp"
#include "prbm/geometry.hpp"
#include "prbm/rng.hpp"

using namespace prbm;

namespace {
constexpr double kPi = 3.14159265358979323846;

std::vector<double> log_grid(double lo_exp, double hi_exp, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = std::pow(10.0, lo_exp + (hi_exp - lo_exp) * i / (n - 1));
    return g;
}
}  // namespace

TEST_CASE("pure sqrt profile: closed-form values and derivatives") {
    const auto b = BoundaryFunction::power_blend(1.0, 0.5, 0.0);
    const auto t = b.eval(4.0);
    CHECK(t.value == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(t.first == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(t.second == doctest::Approx(-0.03125).epsilon(1e-14));
    CHECK_THROWS_AS(b.eval(0.0), domain_error);
    CHECK_THROWS_AS(b.eval(-1.0), domain_error);
}

TEST_CASE("narrowing power tail is exact past the blend point") {
    const auto b = BoundaryFunction::power_blend(2.0, -0.5, 1.0);
    const auto t = b.eval(4.0);
    CHECK(t.value == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(t.first == doctest::Approx(-0.125).epsilon(1e-14));
    CHECK(t.second == doctest::Approx(0.046875).epsilon(1e-14));
}

TEST_CASE("central differences match the analytic derivative") {
    const auto fams = {BoundaryFunction::power_blend(1.0, 0.1, 1.0),
                       BoundaryFunction::power_blend(1.0, -1.2, 1.0),
                       BoundaryFunction::power_blend(2.0, 0.65, 0.5),
                       BoundaryFunction::oscillating()};
    for (const auto& b : fams) {
        for (double x : {0.31, 2.7, 13.0, 430.0, 9.1e3}) {
            // keep at least 10h away from the blend edges
            if (b.family() == BoundaryFunction::Family::PowerBlend &&
                std::abs(x - b.blend_point()) < 0.2)
                continue;
            for (double h : {1e-4, 1e-5}) {
                const double fd = (b.value(x + h) - b.value(x - h)) / (2.0 * h);
                const double an = b.eval(x).first;
                CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
            }
        }
    }
}

TEST_CASE("signed gap of the sqrt tube") {
    DomainGeometry dom(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0));
    CHECK(dom.signed_gap(Point{4.0, 0.0}) == doctest::Approx(2.0));
    CHECK(dom.signed_gap(Point{4.0, 2.0}) == doctest::Approx(0.0));
    CHECK(dom.signed_gap(Point{4.0, 2.5}) == doctest::Approx(-0.5));
    CHECK_THROWS_AS(dom.signed_gap(Point{-0.1, 0.0}), geometry_error);
    CHECK(dom.inside(Point{4.0, 1.99}));
    CHECK(!dom.inside(Point{4.0, 2.01}));
}

TEST_CASE("signed gap is continuous along a crossing segment") {
    DomainGeometry dom(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0));
    const Point a{4.0, 0.5}, c{6.0, 3.1};
    double prev = dom.signed_gap(a);
    const int n = 1000;
    for (int i = 1; i <= n; ++i) {
        Point z{a[0] + (c[0] - a[0]) * i / n, a[1] + (c[1] - a[1]) * i / n};
        const double g = dom.signed_gap(z);
        // Lipschitz in the segment parameter: no jumps, so a sign flip passes
        // through a near-zero value
        CHECK(std::abs(g - prev) < 5.0 / n);
        prev = g;
    }
}

TEST_CASE("inward normal: unit length, orthogonal to the boundary tangent") {
    DomainGeometry dom(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0));
    const Point z{4.0, 2.0};
    const Point n = dom.inward_normal(z);
    CHECK(n[0] == doctest::Approx(0.24253562503633297).epsilon(1e-9));
    CHECK(n[1] == doctest::Approx(-0.97014250014533188).epsilon(1e-9));
    CHECK(std::abs(n[0] * n[0] + n[1] * n[1] - 1.0) < 1e-12);

    // hypothetical 45-degree cone wall via a custom profile
    DomainGeometry cone(1, BoundaryFunction::custom([](double x) { return x; },
                                                    [](double) { return 1.0; },
                                                    [](double) { return 0.0; }, 1.0));
    const Point nc = cone.inward_normal(Point{1.0, 1.0});
    CHECK(nc[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(nc[1] == doctest::Approx(-1.0 / std::sqrt(2.0)));

    CHECK_THROWS_AS(dom.inward_normal(Point{4.0, 0.0}), geometry_error);
}

TEST_CASE("inward normal orthogonality property on random boundary points") {
    DomainGeometry dom(2, BoundaryFunction::power_blend(1.0, 0.3, 1.0));
    const rng::PathStream stream(17, 3);
    for (int i = 0; i < 300; ++i) {
        const double x = std::pow(10.0, -1.0 + 4.0 * stream.uniform(i, 0));
        double dir[2] = {stream.uniform(i, 1) - 0.5, stream.uniform(i, 2) - 0.5};
        const double dn = std::hypot(dir[0], dir[1]);
        if (dn < 1e-6) continue;
        const Point z = dom.boundary_point(x, std::span<const double>{dir, 2});
        const Point n = dom.inward_normal(z);
        const double bp = dom.boundary.eval(x).first;
        // tangent along the profile: (1, b' yhat)
        double dot_t = n[0];
        double dot_out = n[0] * bp;
        for (int k = 1; k <= 2; ++k) {
            dot_t += n[k] * bp * z[k] / y_norm(z);
            dot_out -= n[k] * z[k] / y_norm(z);
        }
        CHECK(std::abs(dot_t) <= 1e-9);
        CHECK(dot_out > 0.0);
        double len = 0.0;
        for (double v : n) len += v * v;
        CHECK(std::abs(len - 1.0) <= 1e-12);
    }
}

TEST_CASE("growth assumption checks: exact power law") {
    const auto b = BoundaryFunction::power_blend(1.0, 0.3, 1.0);
    const auto rep = check_domain_assumptions(b, DomainAssumptionLevel::D2, log_grid(1, 6, 16));
    CHECK(rep.pass);
    for (const auto& c : rep.checks) {
        if (c.name == "x_bprime_over_b_to_beta") CHECK(std::abs(c.measured - 0.3) <= 1e-9);
    }
}

TEST_CASE("growth assumption checks: oscillating profile has exponent zero") {
    const auto b = BoundaryFunction::oscillating();
    const auto rep = check_domain_assumptions(b, DomainAssumptionLevel::D2, log_grid(1, 12, 23));
    CHECK(rep.pass);
    for (const auto& c : rep.checks) {
        if (c.name == "x_bprime_over_b_to_beta") CHECK(std::abs(c.measured) <= 0.05);
    }
}

TEST_CASE("growth assumption checks: linear profile fails") {
    const auto b = BoundaryFunction::custom([](double x) { return x; },
                                            [](double) { return 1.0; },
                                            [](double) { return 0.0; }, 1.0);
    const auto rep = check_domain_assumptions(b, DomainAssumptionLevel::D2, log_grid(1, 6, 16));
    CHECK(!rep.pass);
    bool beta_check_failed = false;
    for (const auto& c : rep.checks)
        if (c.name == "beta_lt_1" && !c.pass) beta_check_failed = true;
    CHECK(beta_check_failed);
}

TEST_CASE("assumption checks: cusp regularity and quantified growth") {
    const auto sqrt_core = BoundaryFunction::power_blend(1.0, 0.5, 0.0);
    CHECK(check_domain_assumptions(sqrt_core, DomainAssumptionLevel::D1, log_grid(1, 6, 12)).pass);
    CHECK(check_domain_assumptions(sqrt_core, DomainAssumptionLevel::D2plus, log_grid(1, 6, 12))
              .pass);
    CHECK_THROWS_AS(check_domain_assumptions(sqrt_core, DomainAssumptionLevel::D2,
                                             log_grid(1, 6, 4)),
                    config_error);
}

TEST_CASE("oscillating boundary: closed-form extremes along the double-log scale") {
    // values at x = exp(exp(-pi/2 + 2k pi)) shrink toward zero ...
    double prev_min = 1e300;
    for (int k = 1; k <= 4; ++k) {
        const double u = -kPi / 2 + 2 * kPi * k;
        const double v = BoundaryFunction::oscillating_profile_loglog(u);
        CHECK(v == doctest::Approx(1.0 / u).epsilon(1e-12));
        CHECK(v < prev_min);
        prev_min = v;
    }
    // ... while values at x = exp(exp(2k pi)) grow without bound
    double prev_max = 0.0;
    for (int k = 1; k <= 4; ++k) {
        const double u = 2 * kPi * k;
        const double v = BoundaryFunction::oscillating_profile_loglog(u);
        CHECK(v == doctest::Approx(u + 1.0 / u).epsilon(1e-12));
        CHECK(v > prev_max);
        prev_max = v;
    }
    // the first peak is still within double range; check the direct evaluation
    const auto b = BoundaryFunction::oscillating();
    const double x1 = std::exp(std::exp(2 * kPi));
    CHECK(b.value(x1) == doctest::Approx(2 * kPi + 1.0 / (2 * kPi)).epsilon(1e-9));
}

TEST_CASE("slope bounds cover the exact derivative") {
    const auto fams = {BoundaryFunction::power_blend(1.0, -1.2, 1.0),
                       BoundaryFunction::power_blend(1.0, 0.65, 1.0),
                       BoundaryFunction::oscillating()};
    for (const auto& b : fams) {
        for (double lo : {0.05, 0.5, 3.0, 50.0, 1e4}) {
            const double hi = lo * 1.4 + 0.1;
            const auto bound = b.max_abs_slope(lo, hi);
            REQUIRE(bound.has_value());
            for (int i = 0; i <= 64; ++i) {
                const double x = lo + (hi - lo) * i / 64.0;
                CHECK(std::abs(b.eval(x).first) <= *bound * (1.0 + 1e-9));
            }
        }
    }
}
