#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prbm/geometry.hpp"

namespace prbm {

// Square matrices are stored row-major with dimension (d+1).
using Matrix = std::vector<double>;

// Instantaneous covariance field Sigma(z). The built-in kind is a constant
// diagonal diag(sigma1^2, sigma2^2/d, ..., sigma2^2/d), which realises the
// axial/transverse limit variances exactly. A custom field supplies a
// callback returning the full matrix; positive definiteness is checked where
// it is evaluated.
class CovarianceField {
public:
    enum class Kind { ConstantDiagonal, Custom };

    using MatrixCallback = std::function<Matrix(std::span<const double> z)>;

    static CovarianceField constant_diagonal(double sigma1_sq, double sigma2_sq);
    static CovarianceField custom(MatrixCallback cb, double sigma1_sq_limit,
                                  double sigma2_sq_limit, double lipschitz_bound);

    Kind kind() const { return kind_; }
    double sigma1_sq() const { return sigma1_sq_; }
    double sigma2_sq() const { return sigma2_sq_; }
    double ellipticity_floor() const { return ellipticity_floor_; }

    Matrix matrix(std::span<const double> z, int d) const;

private:
    Kind kind_ = Kind::ConstantDiagonal;
    double sigma1_sq_ = 1.0, sigma2_sq_ = 1.0;
    double ellipticity_floor_ = 1.0;
    double lipschitz_bound_ = 0.0;
    MatrixCallback cb_;
};

// Symmetric square root of Sigma(z); for the constant diagonal this is the
// entrywise root, otherwise a symmetric eigendecomposition. Throws
// spectral_error when the smallest eigenvalue is not positive.
Matrix eval_sigma_sqrt(const CovarianceField& f, std::span<const double> z, int d);

// Reflection vector field on the lateral boundary. ScaledNormal is the
// cleanest representative of asymptotically normal reflection: its axial
// component is s0*b'(x) exactly and its inward transverse component is c0
// exactly. UnitNormal is the inward unit normal itself (s0 = c0 = 1 limits).
class ReflectionField {
public:
    enum class Kind { UnitNormal, ScaledNormal, Custom };

    using VectorCallback = std::function<Point(std::span<const double> z)>;

    static ReflectionField unit_normal();
    static ReflectionField scaled_normal(double s0, double c0);
    static ReflectionField custom(VectorCallback cb, double s0_limit, double c0_limit);

    Kind kind() const { return kind_; }
    double s0() const { return s0_; }
    double c0() const { return c0_; }
    const VectorCallback& callback() const { return cb_; }

private:
    Kind kind_ = Kind::UnitNormal;
    double s0_ = 1.0, c0_ = 1.0;
    VectorCallback cb_;
};

// phi(z) for z on the lateral boundary (within tolerance, ||y|| > 0).
Point eval_phi(const ReflectionField& f, const DomainGeometry& dom, std::span<const double> z);

// Full model: domain, covariance, reflection. Constructing one validates the
// parameter signs and dimensional consistency.
struct Model {
    DomainGeometry dom;
    CovarianceField sigma;
    ReflectionField phi;

    Model(DomainGeometry g, CovarianceField s, ReflectionField p);

    int dim() const { return dom.ambient_dim(); }
    double beta() const;  // analytic growth exponent; throws if unknown
    double beta_c() const;
};

enum class FieldAssumptionLevel { C1V1, C2V2, C2V2plus };

// Measures the covariance/reflection limits along boundary points
// (x, b(x) yhat) for x in the grid and reports deviations from the declared
// limit constants plus the V1 positivity margin min <phi, n>.
AssumptionReport check_field_assumptions(const Model& m, FieldAssumptionLevel level,
                                         const std::vector<double>& boundary_grid);

}  // namespace prbm
