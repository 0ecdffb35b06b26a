#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>

#include "prbm/fields.hpp"
#include "prbm/geometry.hpp"

namespace prbm {

// Polynomial-scale function f_{w,gamma}(z) = ((x+k_w) h^{1/w})^gamma with
// h = 1 + w(1-w)||y||^2 / (2 (x+k_w)^2). The shift k_w is chosen so that h
// stays in [1/2, 3/2] on the whole domain, which sandwiches f between
// (x+k_w)^gamma 2^{-|gamma|/|w|} and (x+k_w)^gamma 2^{|gamma|/|w|}.
struct PolyLyapunov {
    double w = 0.5;
    double gamma = 1.0;
    double k_w = 1.0;
};

// f blended to a constant k below x0 through a smooth monotone bump window
// m on [x0, x1]: F = f m + k (1 - m). Coincides with f for x >= x1 and is
// identically k for x <= x0.
struct MollifiedLyapunov {
    PolyLyapunov base;
    double x0 = 1.0;
    double x1 = 2.0;
    double k = 1.0;
};

// Logarithmic-scale function for the critical growth rate, defined for x > e:
// g(z) = log x - x^{-delta} + ratio * ||y||^2/(2x^2) * (1 + delta x^{-delta}) + 1
// with ratio = sigma1^2 / sigma2^2.
struct LogLyapunov {
    double delta = 0.25;
    double ratio = 1.0;
};

using LyapunovFunction = std::variant<PolyLyapunov, MollifiedLyapunov, LogLyapunov>;

// Shift constant 1 + sup_x (sqrt(|w(1-w)|) b(x) - x), located on a log grid
// of 2e4 points spanning [1e-6, 1e9] and refined by golden section around the
// grid argmax. Throws non_sublinear_error when the objective is still growing
// at the right edge.
double compute_k_w(const BoundaryFunction& b, double w);

// Smooth window m(x): 0 below x0, 1 above x1, strictly increasing between.
double mollifier(double x, double x0, double x1);
double mollifier_deriv(double x, double x0, double x1);

// Point evaluation; when `dom` is given, points outside the domain (beyond
// the boundary tolerance) raise geometry_error. The logarithmic function
// raises domain_error for x <= e.
double lyapunov_eval(const LyapunovFunction& f, std::span<const double> z,
                     const DomainGeometry* dom = nullptr);

// Closed-form gradient, continuously extended to the boundary.
Point lyapunov_grad(const LyapunovFunction& f, std::span<const double> z,
                    const DomainGeometry* dom = nullptr);

// Sigma-Laplacian Tr(Sigma H(f)) with the Hessian by central finite
// differences at step 1e-5 (1 + ||z||).
double sigma_laplacian(const LyapunovFunction& f, const CovarianceField& sigma,
                       std::span<const double> z, int d);

// <grad f(z), phi(z)> for z on the lateral boundary.
double boundary_drift(const LyapunovFunction& f, const Model& m, std::span<const double> z);

// Sign stabilisation report for the polynomial family: (i) smallest grid x
// beyond which the boundary drift sign matches sign(gamma (s0 beta/c0 - 1 + w))
// in every sampled direction, (ii) deviation of the Sigma-Laplacian from its
// large-x form gamma f^{gamma-2} (sigma1^2 (gamma-1) + sigma2^2 (1-w)) on the
// top two grid decades, (iii) the measured constant C in
// ||grad f||^2 <= C (x+k_w)^{2(gamma-1)}.
struct SignReport {
    double w = 0.0, gamma = 0.0, k_w = 1.0;
    int expected_sign = 0;
    bool conclusive = false;
    double stabilization_x = 0.0;  // meaningful when conclusive
    double tail_max_rel_dev = 0.0;
    double tail_max_abs_dev = 0.0;
    double asymptote_coeff = 0.0;  // sigma1^2 (gamma-1) + sigma2^2 (1-w)
    double grad_bound_C = 0.0;
    std::string note;
    std::string to_json() const;
};

SignReport verify_drift_asymptotics(const Model& m, double w, double gamma,
                                    const std::vector<double>& x_grid);

enum class Regime { Recurrent, Transient, ReturnUpper, ReturnLower, StationaryDrift };

// Midpoints of the admissible open parameter intervals for each analysis
// regime; aux carries the interval endpoints and regime-specific constants.
struct ParameterChoice {
    Regime regime = Regime::Recurrent;
    double w = 0.0;
    double gamma = 0.0;  // for ReturnLower this is the submartingale power p
    std::map<std::string, double> aux;
};

ParameterChoice choose_parameters(const Model& m, Regime regime);

// Numerical certificate for the stationary-regime drift inequality
//   1/2 Laplacian_Sigma F_{w,gamma} + C1 F_{w,gamma-2} <= C2 1{x <= x2}
// together with <grad F, phi> <= 0 on the boundary. Margins are recorded for
// every grid point; found = false carries a witness instead.
struct DriftCertificate {
    bool found = false;
    double w = 0.0, gamma = 0.0, k_w = 1.0;
    double x0 = 0.0, x1 = 0.0, k = 0.0;
    double x2 = 0.0, C1 = 0.0, C2 = 0.0;
    double min_interior_margin = 0.0;  // min of C2 1{x<=x2} - LHS over the grid
    double min_boundary_margin = 0.0;  // min of -<grad F, phi> over boundary samples
    std::size_t grid_points = 0;
    std::size_t boundary_samples = 0;
    Point witness;  // populated when found = false
    std::string note;
    std::string to_json() const;
};

struct DriftCertificateOptions {
    std::optional<double> x2_override;
    std::optional<double> C2_override;
    double x_grid_max = 1e6;
    std::size_t min_grid_points = 10000;
    std::size_t boundary_samples = 64;
};

DriftCertificate find_drift_certificate(const Model& m, double gamma,
                                        const DriftCertificateOptions& opts = {});

}  // namespace prbm
