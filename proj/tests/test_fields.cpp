#include <doctest.h>

#include <cmath>

#include "prbm/errors.hpp"
#include "prbm/fields.hpp"
#include "prbm/rng.hpp"

using namespace prbm;

namespace {

Model sqrt_model(double s1 = 1.0, double s2 = 1.0, double s0 = 1.0, double c0 = 1.0, int d = 1) {
    return Model(DomainGeometry(d, BoundaryFunction::power_blend(1.0, 0.5, 0.0)),
                 CovarianceField::constant_diagonal(s1, s2),
                 ReflectionField::scaled_normal(s0, c0));
}

}  // namespace

TEST_CASE("constant-diagonal square root") {
    const Point z{1.0, 0.0};
    auto s = eval_sigma_sqrt(CovarianceField::constant_diagonal(1.0, 1.0), z, 1);
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[3] == doctest::Approx(1.0));
    CHECK(s[1] == 0.0);

    s = eval_sigma_sqrt(CovarianceField::constant_diagonal(0.5, 1.0), z, 1);
    CHECK(s[0] == doctest::Approx(std::sqrt(0.5)));
    CHECK(s[3] == doctest::Approx(1.0));

    const Point z2{1.0, 0.0, 0.0};
    s = eval_sigma_sqrt(CovarianceField::constant_diagonal(1.0, 2.0), z2, 2);
    for (int i = 0; i < 3; ++i) CHECK(s[static_cast<std::size_t>(i) * 3 + i] == doctest::Approx(1.0));
}

TEST_CASE("square root squared reproduces the covariance") {
    auto cb = [](std::span<const double> z) {
        // smooth positive-definite 2x2 field
        const double a = 1.0 + 0.3 / (1.0 + z[0]);
        const double b = 0.2 / (1.0 + z[0] * z[0] + z[1] * z[1]);
        return Matrix{a, b, b, 0.8};
    };
    const auto f = CovarianceField::custom(cb, 1.0, 0.8, 1.0);
    const rng::PathStream stream(99, 1);
    for (int i = 0; i < 1000; ++i) {
        const Point z{10.0 * stream.uniform(i, 0), stream.uniform(i, 1) - 0.5};
        const Matrix s = eval_sigma_sqrt(f, z, 1);
        const Matrix m = f.matrix(z, 1);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 2; ++k) acc += s[r * 2 + k] * s[k * 2 + c];
                CHECK(std::abs(acc - m[r * 2 + c]) < 1e-10);
            }
    }
}

TEST_CASE("non-positive-definite custom covariance raises a spectral error") {
    auto bad = CovarianceField::custom(
        [](std::span<const double>) {
            return Matrix{1.0, 2.0, 2.0, 1.0};  // eigenvalues 3 and -1
        },
        1.0, 1.0, 0.0);
    CHECK_THROWS_AS(eval_sigma_sqrt(bad, Point{1.0, 0.0}, 1), spectral_error);
}

TEST_CASE("reflection field values on the sqrt tube") {
    const auto m = sqrt_model();
    const Point z{4.0, 2.0};
    const Point phi = eval_phi(m.phi, m.dom, z);
    CHECK(phi[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(-1.0).epsilon(1e-12));

    const Point phi2 = eval_phi(ReflectionField::scaled_normal(2.0, 0.5), m.dom, z);
    CHECK(phi2[0] == doctest::Approx(0.5));
    CHECK(phi2[1] == doctest::Approx(-0.5));

    const Point u = eval_phi(ReflectionField::unit_normal(), m.dom, z);
    const Point n = m.dom.inward_normal(z);
    CHECK(u[0] == doctest::Approx(n[0]));
    CHECK(u[1] == doctest::Approx(n[1]));
    CHECK(u[0] * n[0] + u[1] * n[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(eval_phi(m.phi, m.dom, Point{4.0, 1.5}), geometry_error);
}

TEST_CASE("scaled normal has a positive normal component: closed-form identity") {
    const double s0 = 0.7, c0 = 1.3;
    const auto m = sqrt_model(1.0, 1.0, s0, c0);
    const rng::PathStream stream(5, 2);
    for (int i = 0; i < 1000; ++i) {
        const double x = std::pow(10.0, -1.0 + 4.0 * stream.uniform(i, 0));
        const Point z = m.dom.boundary_point(x, std::vector<double>{stream.uniform(i, 1) > 0.5
                                                                        ? 1.0
                                                                        : -1.0});
        const Point phi = eval_phi(m.phi, m.dom, z);
        const Point n = m.dom.inward_normal(z);
        const double dot = phi[0] * n[0] + phi[1] * n[1];
        const double bp = m.dom.boundary.eval(x).first;
        const double expected = (s0 * bp * bp + c0) / std::sqrt(1.0 + bp * bp);
        CHECK(dot > 0.0);
        CHECK(std::abs(dot - expected) < 1e-12 * std::max(1.0, expected));
    }
}

TEST_CASE("model construction rejects non-positive limit parameters") {
    CHECK_THROWS_AS(CovarianceField::constant_diagonal(0.0, 1.0), config_error);
    CHECK_THROWS_AS(CovarianceField::constant_diagonal(1.0, -2.0), config_error);
    CHECK_THROWS_AS(ReflectionField::scaled_normal(0.0, 1.0), config_error);
    CHECK_THROWS_AS(ReflectionField::scaled_normal(1.0, 0.0), config_error);
}

TEST_CASE("field limit checks: built-ins realise the limits exactly") {
    const auto m = sqrt_model(0.5, 1.0);
    std::vector<double> grid;
    for (int i = 0; i < 12; ++i) grid.push_back(std::pow(10.0, 0.5 + 0.4 * i));
    const auto rep = check_field_assumptions(m, FieldAssumptionLevel::C2V2, grid);
    CHECK(rep.pass);
    for (const auto& c : rep.checks)
        if (c.name.find("limit") != std::string::npos) CHECK(std::abs(c.measured) <= 1e-9);
}

TEST_CASE("field limit checks: unit normal deviates by order b'^2") {
    Model m(DomainGeometry(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0)),
            CovarianceField::constant_diagonal(1.0, 1.0), ReflectionField::unit_normal());
    std::vector<double> grid;
    for (int i = 0; i < 12; ++i) grid.push_back(std::pow(10.0, 0.5 + 0.35 * i));
    const auto rep = check_field_assumptions(m, FieldAssumptionLevel::C2V2, grid);
    CHECK(rep.pass);
    // measured deviation of each limit stays within b'(x)^2 at every grid x
    for (double x : grid) {
        const double bp = m.dom.boundary.eval(x).first;
        const Point z = m.dom.boundary_point(x);
        const Point phi = eval_phi(m.phi, m.dom, z);
        CHECK(std::abs(phi[0] / bp - 1.0) <= bp * bp);
        CHECK(std::abs(-phi[1] - 1.0) <= bp * bp);
    }
}

TEST_CASE("field limit checks: constructed normal-component violation is caught") {
    // tangential field: <phi, n> = 0 everywhere
    auto tangential = ReflectionField::custom(
        [](std::span<const double> z) {
            const double bp = 0.5 / std::sqrt(z[0]);
            const double s = std::sqrt(1.0 + bp * bp);
            return Point{1.0 / s, (z[1] > 0 ? bp : -bp) / s};
        },
        1.0, 1.0);
    Model m(DomainGeometry(1, BoundaryFunction::power_blend(1.0, 0.5, 0.0)),
            CovarianceField::constant_diagonal(1.0, 1.0), std::move(tangential));
    std::vector<double> grid{1.0, 2.0, 4.0, 8.0, 16.0};
    const auto rep = check_field_assumptions(m, FieldAssumptionLevel::C1V1, grid);
    CHECK(!rep.pass);
    bool v1_failed = false;
    for (const auto& c : rep.checks)
        if (c.name == "V1_normal_component_positive" && !c.pass) {
            v1_failed = true;
            CHECK(c.note.find("witness") != std::string::npos);
        }
    CHECK(v1_failed);
}
