#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace prbm {

// Points live in R^{d+1}; index 0 is the axial coordinate x, indices 1..d the
// transverse block y.
using Point = std::vector<double>;

inline double y_norm_sq(std::span<const double> z) {
    double s = 0.0;
    for (std::size_t i = 1; i < z.size(); ++i) s += z[i] * z[i];
    return s;
}

inline double y_norm(std::span<const double> z) { return std::sqrt(y_norm_sq(z)); }

inline double norm(std::span<const double> z) {
    return std::sqrt(z[0] * z[0] + y_norm_sq(z));
}

// Boundary profile b of the tube domain together with its first two
// derivatives. Built-in families are C^2 on (0, inf) with b(0) = 0.
//
// PowerBlend keeps a sqrt core near the origin (which realises the positive
// liminf of b*b' required at the cusp), switches to the pure power a*x^beta
// at x_b, and bridges the two with a quintic that matches value and two
// derivatives at both ends, so the tail is exact for every x >= x_b.
class BoundaryFunction {
public:
    enum class Family { PowerBlend, Oscillating, Custom };

    struct Triple {
        double value, first, second;
    };

    using Callback = std::function<double(double)>;
    // max |b'| over an interval [lo, hi]
    using IntervalBound = std::function<double(double, double)>;

    static BoundaryFunction power_blend(double a, double beta, double x_b);
    static BoundaryFunction oscillating();
    static BoundaryFunction custom(Callback value, Callback first, Callback second,
                                   std::optional<double> analytic_beta = std::nullopt,
                                   IntervalBound slope_bound = nullptr);

    double value(double x) const;
    Triple eval(double x) const;  // throws domain_error for x <= 0

    // Closed form of the oscillating profile as a function of u = log log x;
    // lets tests evaluate at abscissas far beyond double range.
    static double oscillating_profile_loglog(double u);

    Family family() const { return family_; }
    std::optional<double> analytic_beta() const { return analytic_beta_; }
    double amplitude() const { return a_; }
    double tail_exponent() const { return beta_; }
    double blend_point() const { return x_b_; }

    // Upper bound for |b'| on [lo, hi]; nullopt when no bound is available
    // (then the simulator always evaluates the profile exactly).
    std::optional<double> max_abs_slope(double lo, double hi) const;

private:
    BoundaryFunction() = default;

    Family family_ = Family::Custom;
    double a_ = 1.0, beta_ = 0.5, x_b_ = 0.0;

    // blend window [blend_lo_, blend_hi_] and quintic coefficients in
    // t = (x - blend_lo_) / (blend_hi_ - blend_lo_)
    double blend_lo_ = 0.0, blend_hi_ = 0.0;
    std::array<double, 6> blend_coef_{};
    double core_scale_ = 1.0;
    double blend_max_slope_ = 0.0;

    Callback value_cb_, first_cb_, second_cb_;
    IntervalBound slope_bound_cb_;
    std::optional<double> analytic_beta_;

    Triple eval_power_blend(double x) const;
    Triple eval_oscillating(double x) const;
    Triple eval_blend(double x) const;
    void build_blend(double lo, const Triple& at_lo, double hi, const Triple& at_hi);
};

struct DomainGeometry {
    int d = 1;  // transverse dimension; ambient dimension is d + 1
    BoundaryFunction boundary;

    DomainGeometry(int dim, BoundaryFunction b);

    int ambient_dim() const { return d + 1; }

    bool inside(std::span<const double> z) const;
    // b(x) - ||y||; throws geometry_error when x < 0.
    double signed_gap(std::span<const double> z) const;
    // Inward unit normal at a lateral boundary point.
    Point inward_normal(std::span<const double> z) const;

    bool on_boundary(std::span<const double> z) const;

    // (x, b(x) * yhat); yhat defaults to the first transverse axis.
    Point boundary_point(double x, std::span<const double> yhat = {}) const;
};

// Tolerance band for "on the boundary": signed_gap within
// [-1e-12 * (1+||z||), 1e-9 * (1+||z||)]. The scheme projects onto the
// boundary up to roundoff, so the outside slack is tighter than the inside.
inline constexpr double kGapLowerScale = -1e-12;
inline constexpr double kGapUpperScale = 1e-9;

struct AssumptionCheck {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    std::string note;
};

struct AssumptionReport {
    std::string level;
    bool pass = false;
    std::vector<AssumptionCheck> checks;
    std::vector<double> grid;
    std::string to_json() const;
};

enum class DomainAssumptionLevel { D1, D2, D2plus };

// Grid-based trend checks of the boundary regularity and growth assumptions.
// Advisory: pass means the sampled trend is consistent with the limit at the
// grid scale, never a proof.
AssumptionReport check_domain_assumptions(const BoundaryFunction& b, DomainAssumptionLevel level,
                                          const std::vector<double>& grid);

}  // namespace prbm
