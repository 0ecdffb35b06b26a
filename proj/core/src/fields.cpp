#include "prbm/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "prbm/errors.hpp"

namespace prbm {

CovarianceField CovarianceField::constant_diagonal(double sigma1_sq, double sigma2_sq) {
    if (sigma1_sq <= 0.0 || sigma2_sq <= 0.0)
        throw config_error("covariance limits sigma1_sq, sigma2_sq must be positive");
    CovarianceField f;
    f.kind_ = Kind::ConstantDiagonal;
    f.sigma1_sq_ = sigma1_sq;
    f.sigma2_sq_ = sigma2_sq;
    f.ellipticity_floor_ = std::min(sigma1_sq, sigma2_sq);
    return f;
}

CovarianceField CovarianceField::custom(MatrixCallback cb, double sigma1_sq_limit,
                                        double sigma2_sq_limit, double lipschitz_bound) {
    if (!cb) throw config_error("custom covariance requires a matrix callback");
    if (sigma1_sq_limit <= 0.0 || sigma2_sq_limit <= 0.0)
        throw config_error("covariance limits sigma1_sq, sigma2_sq must be positive");
    CovarianceField f;
    f.kind_ = Kind::Custom;
    f.cb_ = std::move(cb);
    f.sigma1_sq_ = sigma1_sq_limit;
    f.sigma2_sq_ = sigma2_sq_limit;
    f.lipschitz_bound_ = lipschitz_bound;
    f.ellipticity_floor_ = 0.0;  // established by sampling, not declared
    return f;
}

Matrix CovarianceField::matrix(std::span<const double> z, int d) const {
    const int n = d + 1;
    if (kind_ == Kind::ConstantDiagonal) {
        Matrix m(static_cast<std::size_t>(n) * n, 0.0);
        m[0] = sigma1_sq_;
        for (int i = 1; i < n; ++i) m[static_cast<std::size_t>(i) * n + i] = sigma2_sq_ / d;
        return m;
    }
    Matrix m = cb_(z);
    if (m.size() != static_cast<std::size_t>(n) * n)
        throw config_error("custom covariance callback returned a matrix of wrong dimension");
    return m;
}

Matrix eval_sigma_sqrt(const CovarianceField& f, std::span<const double> z, int d) {
    const int n = d + 1;
    if (f.kind() == CovarianceField::Kind::ConstantDiagonal) {
        Matrix m(static_cast<std::size_t>(n) * n, 0.0);
        m[0] = std::sqrt(f.sigma1_sq());
        for (int i = 1; i < n; ++i)
            m[static_cast<std::size_t>(i) * n + i] = std::sqrt(f.sigma2_sq() / d);
        return m;
    }
    const Matrix raw = f.matrix(z, d);
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s(i, j) = raw[static_cast<std::size_t>(i) * n + j];
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    const double lambda_min = es.eigenvalues().minCoeff();
    if (lambda_min <= 0.0)
        throw spectral_error("covariance not positive definite; smallest eigenvalue " +
                             std::to_string(lambda_min));
    const Eigen::MatrixXd root = es.operatorSqrt();
    Matrix out(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = root(i, j);
    return out;
}

ReflectionField ReflectionField::unit_normal() {
    ReflectionField f;
    f.kind_ = Kind::UnitNormal;
    return f;
}

ReflectionField ReflectionField::scaled_normal(double s0, double c0) {
    if (s0 <= 0.0 || c0 <= 0.0)
        throw config_error("reflection scales s0, c0 must be positive");
    ReflectionField f;
    f.kind_ = Kind::ScaledNormal;
    f.s0_ = s0;
    f.c0_ = c0;
    return f;
}

ReflectionField ReflectionField::custom(VectorCallback cb, double s0_limit, double c0_limit) {
    if (!cb) throw config_error("custom reflection requires a vector callback");
    if (s0_limit <= 0.0 || c0_limit <= 0.0)
        throw config_error("reflection scales s0, c0 must be positive");
    ReflectionField f;
    f.kind_ = Kind::Custom;
    f.cb_ = std::move(cb);
    f.s0_ = s0_limit;
    f.c0_ = c0_limit;
    return f;
}

Point eval_phi(const ReflectionField& f, const DomainGeometry& dom, std::span<const double> z) {
    if (f.kind() == ReflectionField::Kind::Custom) return f.callback()(z);
    if (!dom.on_boundary(z))
        throw geometry_error("reflection field is defined only on the boundary");
    const double ny = y_norm(z);
    if (ny <= 0.0) throw geometry_error("reflection undefined on the axis (y = 0)");
    if (f.kind() == ReflectionField::Kind::UnitNormal) return dom.inward_normal(z);
    const double bp = dom.boundary.eval(z[0]).first;
    Point phi(z.size());
    phi[0] = f.s0() * bp;
    for (std::size_t i = 1; i < z.size(); ++i) phi[i] = -f.c0() * z[i] / ny;
    return phi;
}

Model::Model(DomainGeometry g, CovarianceField s, ReflectionField p)
    : dom(std::move(g)), sigma(std::move(s)), phi(std::move(p)) {
    if (sigma.sigma1_sq() <= 0.0 || sigma.sigma2_sq() <= 0.0 || phi.s0() <= 0.0 || phi.c0() <= 0.0)
        throw config_error("model limit parameters must be positive");
    // dimension consistency of a custom covariance
    if (sigma.kind() == CovarianceField::Kind::Custom) {
        Point probe(static_cast<std::size_t>(dom.d) + 1, 0.0);
        probe[0] = 1.0;
        (void)sigma.matrix(probe, dom.d);
    }
}

double Model::beta() const {
    const auto b = dom.boundary.analytic_beta();
    if (!b) throw config_error("model boundary has no declared growth exponent");
    return *b;
}

double Model::beta_c() const {
    return phi.c0() * sigma.sigma1_sq() / (phi.s0() * sigma.sigma2_sq());
}

AssumptionReport check_field_assumptions(const Model& m, FieldAssumptionLevel level,
                                         const std::vector<double>& boundary_grid) {
    if (boundary_grid.size() < 4)
        throw config_error("field assumption check needs at least 4 grid points");
    for (double x : boundary_grid)
        if (x <= 0.0) throw geometry_error("field checks need boundary points with x > 0");

    AssumptionReport rep;
    rep.grid = boundary_grid;
    rep.level = level == FieldAssumptionLevel::C1V1
                    ? "C1V1"
                    : (level == FieldAssumptionLevel::C2V2 ? "C2V2" : "C2V2plus");

    const int d = m.dom.d;
    std::vector<double> dev_s1, dev_s2, dev_s0, dev_c0;
    double min_phi_n = std::numeric_limits<double>::infinity();
    double max_phi_norm = 0.0;
    double witness_x = 0.0;

    for (double x : boundary_grid) {
        const Point z = m.dom.boundary_point(x);
        const Matrix s = m.sigma.matrix(z, d);
        const int n = d + 1;
        double trace = 0.0;
        for (int i = 0; i < n; ++i) trace += s[static_cast<std::size_t>(i) * n + i];
        dev_s1.push_back(s[0] - m.sigma.sigma1_sq());
        dev_s2.push_back(trace - s[0] - m.sigma.sigma2_sq());

        const Point phi = eval_phi(m.phi, m.dom, z);
        const Point nrm = m.dom.inward_normal(z);
        double pn = 0.0, pnorm2 = 0.0, px = phi[0];
        for (std::size_t i = 0; i < phi.size(); ++i) {
            pn += phi[i] * nrm[i];
            pnorm2 += phi[i] * phi[i];
        }
        double py_in = 0.0;  // <phi, -e_yhat>
        const double ny = y_norm(z);
        for (std::size_t i = 1; i < phi.size(); ++i) py_in -= phi[i] * z[i] / ny;
        if (pn < min_phi_n) {
            min_phi_n = pn;
            witness_x = x;
        }
        max_phi_norm = std::max(max_phi_norm, std::sqrt(pnorm2));
        const double bp = m.dom.boundary.eval(x).first;
        dev_s0.push_back(bp != 0.0 ? px / bp - m.phi.s0() : 0.0);
        dev_c0.push_back(py_in - m.phi.c0());
    }

    auto tail_max_abs = [](const std::vector<double>& v) {
        double t = 0.0;
        for (std::size_t i = v.size() - v.size() / 4 - 1; i < v.size(); ++i)
            t = std::max(t, std::abs(v[i]));
        return t;
    };
    auto trend_ok = [&](const std::vector<double>& v) {
        double head = 0.0;
        for (std::size_t i = 0; i < v.size() / 4 + 1; ++i) head = std::max(head, std::abs(v[i]));
        const double tail = tail_max_abs(v);
        return tail <= 1e-9 || tail <= 0.5 * head;
    };

    rep.checks.push_back({"V1_normal_component_positive", min_phi_n > 0.0, min_phi_n,
                          "min <phi,n> over the grid; witness x = " + std::to_string(witness_x)});
    rep.checks.push_back(
        {"V1_phi_bounded", std::isfinite(max_phi_norm), max_phi_norm, "sup ||phi|| over the grid"});

    if (level != FieldAssumptionLevel::C1V1) {
        rep.checks.push_back({"C2_sigma1_limit", trend_ok(dev_s1), tail_max_abs(dev_s1),
                              "<Sigma e_x,e_x> - sigma1_sq tail deviation"});
        rep.checks.push_back({"C2_sigma2_limit", trend_ok(dev_s2), tail_max_abs(dev_s2),
                              "Tr Sigma - sigma1_sq - sigma2_sq tail deviation"});
        rep.checks.push_back({"V2_s0_limit", trend_ok(dev_s0), tail_max_abs(dev_s0),
                              "<phi,e_x>/b' - s0 tail deviation"});
        rep.checks.push_back({"V2_c0_limit", trend_ok(dev_c0), tail_max_abs(dev_c0),
                              "<phi,-e_yhat> - c0 tail deviation"});
    }
    if (level == FieldAssumptionLevel::C2V2plus) {
        // quantified rates: deviations * x^eps (covariance) and * x^2/b^2 (reflection)
        std::vector<double> q1(dev_s1.size()), q2(dev_s0.size());
        for (std::size_t i = 0; i < boundary_grid.size(); ++i) {
            const double x = boundary_grid[i];
            const double b = m.dom.boundary.value(x);
            const double w = x * x / (b * b);
            q1[i] = std::max(std::abs(dev_s1[i]), std::abs(dev_s2[i])) * std::sqrt(x);
            q2[i] = std::max(std::abs(dev_s0[i]), std::abs(dev_c0[i])) * w;
        }
        rep.checks.push_back({"C2plus_rate", trend_ok(q1), tail_max_abs(q1),
                              "covariance deviation * x^(1/2) trend"});
        rep.checks.push_back({"V2plus_rate", trend_ok(q2), tail_max_abs(q2),
                              "reflection deviation * x^2/b^2 trend"});
    }

    rep.pass = std::all_of(rep.checks.begin(), rep.checks.end(),
                           [](const AssumptionCheck& c) { return c.pass; });
    return rep;
}

}  // namespace prbm
