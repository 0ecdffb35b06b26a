#pragma once

// Internal single-path integrator. Not installed; estimate.cpp drives it
// directly for per-step observables.
//
// Cost layout per step: one Philox call + Box-Muller pair for the noise, a
// sufficient-condition membership test against a cached linear minorant of b
// (no profile evaluation on the fast path), and for reflecting steps two
// bracketed root solves against a quadratic Taylor model of b built from one
// exact triple, with a final exact membership check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "prbm/errors.hpp"
#include "prbm/fields.hpp"
#include "prbm/rng.hpp"
#include "prbm/simulate.hpp"

namespace prbm::detail {

class Stepper {
public:
    Stepper(const Model& m, const SimConfig& cfg, std::span<const double> start,
            std::uint64_t path_id)
        : m_(&m),
          cfg_(cfg),
          stream_(cfg.master_seed, path_id),
          dim_(m.dom.ambient_dim()),
          sqrt_dt_(std::sqrt(cfg.dt)) {
        cfg_.validate();
        if (start.size() != static_cast<std::size_t>(dim_))
            throw geometry_error("start point has wrong dimension");
        z_.assign(start.begin(), start.end());
        if (!m_->dom.inside(z_)) throw geometry_error("start point outside the domain");
        zs_.assign(dim_, 0.0);
        noise_.assign(static_cast<std::size_t>(dim_) + 1, 0.0);
        zb_buf_.assign(dim_, 0.0);
        phi_buf_.assign(dim_, 0.0);
        zs_try_.assign(dim_, 0.0);
        const_diag_ = m_->sigma.kind() == CovarianceField::Kind::ConstantDiagonal;
        if (const_diag_) {
            scale_.assign(dim_, 0.0);
            scale_[0] = std::sqrt(m_->sigma.sigma1_sq()) * sqrt_dt_;
            const double sy = std::sqrt(m_->sigma.sigma2_sq() / m_->dom.d) * sqrt_dt_;
            for (int i = 1; i < dim_; ++i) scale_[i] = sy;
        }
        refresh_anchor(z_[0]);
    }

    // One Euler step; returns true while the path is healthy.
    bool advance() {
        if (status_ != PathStatus::Running) return false;
        if (forced_noise_) {
            forced_noise_ = false;
        } else {
            rng::fill_normals(stream_, nstep_, noise_.data(), dim_);
        }
        if (const_diag_) {
            for (int i = 0; i < dim_; ++i) zs_[i] = z_[i] + scale_[i] * noise_[i];
        } else {
            const Matrix s = eval_sigma_sqrt(m_->sigma, z_, m_->dom.d);
            for (int i = 0; i < dim_; ++i) {
                double acc = 0.0;
                for (int j = 0; j < dim_; ++j)
                    acc += s[static_cast<std::size_t>(i) * dim_ + j] * noise_[j];
                zs_[i] = z_[i] + sqrt_dt_ * acc;
            }
        }
        bool finite = true;
        for (int i = 0; i < dim_; ++i) finite = finite && std::isfinite(zs_[i]);
        if (!finite) {
            status_ = PathStatus::NumericalOverflow;
            ++nstep_;
            ++diag_.steps;
            return false;
        }

        if (quick_inside()) {
            std::swap(z_, zs_);
        } else {
            const int cls = taylor_classify();
            if (cls > 0) {
                std::swap(z_, zs_);
            } else if (cls < 0) {
                reflect();
            } else if (!exact_accept()) {
                reflect();
            }
        }
        ++nstep_;
        ++diag_.steps;
        return true;
    }

    void force_noise(std::span<const double> noise) {
        for (int i = 0; i < dim_; ++i) noise_[i] = noise[i];
        forced_noise_ = true;
    }

    double t() const { return static_cast<double>(nstep_) * cfg_.dt; }
    const std::vector<double>& z() const { return z_; }
    double x() const { return z_[0]; }
    double local_time() const { return Lt_; }
    std::uint64_t steps() const { return nstep_; }
    PathStatus status() const { return status_; }
    void set_status(PathStatus s) { status_ = s; }
    const StepDiagnostics& diagnostics() const { return diag_; }
    int dim() const { return dim_; }

private:
    const Model* m_;
    SimConfig cfg_;
    rng::PathStream stream_;
    int dim_;
    double sqrt_dt_;
    bool const_diag_ = true;
    bool forced_noise_ = false;

    std::vector<double> z_, zs_, noise_, scale_;
    double Lt_ = 0.0;
    std::uint64_t nstep_ = 0;
    PathStatus status_ = PathStatus::Running;
    StepDiagnostics diag_;

    // linear minorant of b around anch_x_: b(x) >= anch_b_ - anch_L_ |x - anch_x_|
    double anch_x_ = 0.0, anch_b_ = -1.0, anch_R_ = 0.0, anch_L_ = 0.0;
    bool fast_path_ = true;

public:
    // test hook: force an exact membership evaluation on every step
    void disable_fast_path() {
        fast_path_ = false;
        anch_b_ = -1.0;
    }

private:
    void refresh_anchor(double x) {
        anch_b_ = -1.0;
        if (!fast_path_) return;
        if (!(x > 1e-3)) return;
        const double R = std::min(0.1 * (1.0 + x), 0.5 * x);
        const auto L = m_->dom.boundary.max_abs_slope(x - R, x + R);
        if (!L) return;
        anch_x_ = x;
        anch_R_ = R;
        anch_L_ = *L;
        anch_b_ = m_->dom.boundary.value(x);
    }

    bool quick_inside() const {
        if (anch_b_ <= 0.0) return false;
        const double xs = zs_[0];
        if (xs < 0.0) return false;
        const double dx = std::abs(xs - anch_x_);
        if (dx > anch_R_) return false;
        const double bound = anch_b_ - anch_L_ * dx;
        if (bound <= 0.0) return false;
        double y2 = 0.0;
        for (int i = 1; i < dim_; ++i) y2 += zs_[i] * zs_[i];
        return y2 <= bound * bound;
    }

    // exact membership; accepts, refreshes the anchor, and near the wall
    // also refreshes the local Taylor model
    bool exact_accept() {
        const double xs = zs_[0];
        if (xs < 0.0) return false;
        const double b = m_->dom.boundary.value(xs);
        double y2 = 0.0;
        for (int i = 1; i < dim_; ++i) y2 += zs_[i] * zs_[i];
        if (y2 > b * b) return false;
        z_ = zs_;
        if (std::abs(xs - anch_x_) > 0.5 * anch_R_ || anch_b_ <= 0.0) refresh_anchor(xs);
        if (y2 > 0.49 * b * b) ensure_taylor(xs, step_scale());
        return true;
    }

    // ---- reflection machinery ----------------------------------------

    struct TaylorB {
        double xa = 0.0, b = 0.0, bp = 0.0, bpp = 0.0, radius = -1.0, tol = 0.0;
        bool exact_mode = false;  // fall back to exact profile evaluations
    };

    TaylorB tl_;
    bool tl_valid_ = false;

    double step_scale() const {
        double s = 0.0;
        if (const_diag_) {
            for (int i = 0; i < dim_; ++i) s += scale_[i] * scale_[i];
            s = std::sqrt(s);
        } else {
            s = 4.0 * sqrt_dt_;
        }
        return s;
    }

    double taylor_value(const TaylorB& tb, double x) const {
        if (tb.exact_mode) return m_->dom.boundary.value(x);
        const double d = x - tb.xa;
        return tb.b + d * (tb.bp + 0.5 * d * tb.bpp);
    }

    TaylorB build_taylor(double xa, double radius) const {
        TaylorB tb;
        if (m_->dom.boundary.family() == BoundaryFunction::Family::Custom || xa <= 0.0) {
            tb.exact_mode = true;
            return tb;
        }
        const auto tr = m_->dom.boundary.eval(xa);
        tb.xa = xa;
        tb.b = tr.value;
        tb.bp = tr.first;
        tb.bpp = tr.second;
        radius = std::min(radius, 0.5 * xa);
        tb.tol = 2.5e-11 * (1.0 + xa);
        for (int attempt = 0; attempt < 4; ++attempt) {
            const double probe = xa + radius;
            if (std::abs(taylor_value(tb, probe) - m_->dom.boundary.value(probe)) <= tb.tol &&
                (xa - radius <= 0.0 ||
                 std::abs(taylor_value(tb, xa - radius) - m_->dom.boundary.value(xa - radius)) <=
                     tb.tol)) {
                tb.radius = radius;
                return tb;
            }
            radius *= 0.5;
        }
        tb.exact_mode = true;
        return tb;
    }

    // keep a Taylor model of b centred near x covering +- need
    void ensure_taylor(double x, double need) {
        if (tl_valid_ && !tl_.exact_mode && std::abs(x - tl_.xa) + need <= tl_.radius) return;
        tl_ = build_taylor(std::max(x, 1e-8), std::max(8.0 * need, 0.02 * (1.0 + x)));
        tl_valid_ = true;
    }

    // certify the proposal against the cached model: +1 inside, -1 outside,
    // 0 undecided (model missing, stale, or the margin is thinner than its
    // validated accuracy)
    int taylor_classify() const {
        if (!fast_path_ || !tl_valid_ || tl_.exact_mode) return 0;
        const double xs = zs_[0];
        if (xs < 0.0) return -1;
        if (std::abs(xs - tl_.xa) > tl_.radius) return 0;
        const double margin = 4.0 * tl_.tol;
        const double d = xs - tl_.xa;
        const double b = tl_.b + d * (tl_.bp + 0.5 * d * tl_.bpp);
        if (b <= margin) return 0;
        double y2 = 0.0;
        for (int i = 1; i < dim_; ++i) y2 += zs_[i] * zs_[i];
        const double lo = b - margin;
        if (y2 <= lo * lo) return 1;
        const double hi = b + margin;
        if (y2 > hi * hi) return -1;
        return 0;
    }

    // squared-gap along the proposal segment: b(x(t))^2 - ||y(t)||^2
    double seg_gap2(const TaylorB& tb, double t, double y2_0, double y_dy, double dy2,
                    double x0, double dx) const {
        const double x = x0 + t * dx;
        const double y2 = y2_0 + t * (2.0 * y_dy + t * dy2);
        if (x < 0.0) return -(1.0 + y2);  // rounding can push t_face a hair outside
        const double b = taylor_value(tb, x);
        if (b <= 0.0) return -(1.0 + y2);
        return b * b - y2;
    }

    void reflect() {
        ++diag_.reflections;
        const double x0 = z_[0];
        const double xs = zs_[0];
        const double dx = xs - x0;
        double y2_0 = 0.0, y_dy = 0.0, dy2 = 0.0;
        for (int i = 1; i < dim_; ++i) {
            const double yi = z_[i], di = zs_[i] - z_[i];
            y2_0 += yi * yi;
            y_dy += yi * di;
            dy2 += di * di;
        }

        double seg = std::abs(dx) + std::sqrt(dy2);
        TaylorB tb = build_taylor(std::max(x0, 1e-8), std::max(8.0 * seg, 1e-4 * (1.0 + x0)));

        // latest admissible t before leaving the halfspace
        double t_face = 2.0;
        if (xs < 0.0) t_face = x0 / (x0 - xs);

        // first lateral crossing on [0, min(1, t_face)]
        const double t_hi_cap = std::min(1.0, t_face);
        double t_lo = 0.0, t_hi = t_hi_cap;
        double g_lo = seg_gap2(tb, 0.0, y2_0, y_dy, dy2, x0, dx);
        double g_hi = seg_gap2(tb, t_hi, y2_0, y_dy, dy2, x0, dx);
        bool lateral = g_hi < 0.0;
        if (lateral && g_lo > 0.0) {
            // bracketed Illinois iteration, bisection-safeguarded
            double side = 0.0;
            for (int it = 0; it < 40 && (t_hi - t_lo) > 1e-14; ++it) {
                double tm = t_lo + g_lo * (t_hi - t_lo) / (g_lo - g_hi);
                if (!(tm > t_lo && tm < t_hi)) tm = 0.5 * (t_lo + t_hi);
                const double gm = seg_gap2(tb, tm, y2_0, y_dy, dy2, x0, dx);
                if (gm >= 0.0) {
                    t_lo = tm;
                    g_lo = gm;
                    if (side == 1.0) g_hi *= 0.5;
                    side = 1.0;
                } else {
                    t_hi = tm;
                    g_hi = gm;
                    if (side == -1.0) g_lo *= 0.5;
                    side = -1.0;
                }
            }
        }

        // boundary point (inside side of the bracket)
        const double t_b = lateral ? t_lo : std::max(0.0, t_face * (1.0 - 1e-12));
        std::vector<double>& zb = zb_buf_;
        zb.assign(dim_, 0.0);
        zb[0] = x0 + t_b * dx;
        for (int i = 1; i < dim_; ++i) zb[i] = z_[i] + t_b * (zs_[i] - z_[i]);

        if (xs < 0.0) {
            fallback(zb);
            return;
        }

        // reflection direction at the crossing point
        std::vector<double>& phi = phi_buf_;
        boundary_field(zb, phi);

        // normalised quadratic data for ||y* + a phi_y||^2
        double ys2 = 0.0, yphi = 0.0, phi2 = 0.0;
        for (int i = 1; i < dim_; ++i) {
            ys2 += zs_[i] * zs_[i];
            yphi += zs_[i] * phi[i];
            phi2 += phi[i] * phi[i];
        }
        const double phix = phi[0];

        auto gap2_alpha = [&](double a) {
            const double x = xs + a * phix;
            if (x < 0.0) return -1.0 - a;  // outside the halfspace
            const double b = taylor_value(tb, x);
            const double y2 = ys2 + a * (2.0 * yphi + a * phi2);
            if (b <= 0.0) return -(1.0 + y2);
            return b * b - y2;
        };

        const double ny = std::sqrt(ys2);
        const double bxs = taylor_value(tb, xs);
        const double pen = std::max(ny - bxs, 0.0);
        const double inward = ny > 0.0 ? -yphi / ny : 0.0;
        double a_hi = 2.0 * pen / std::max(inward, 1e-3) + 1e-15 * (1.0 + std::abs(xs));
        bool bracketed = false;
        for (int sub = 0; sub < cfg_.max_substeps; ++sub) {
            if (xs + a_hi * phix >= 0.0 &&
                std::abs(xs + a_hi * phix - tb.xa) <= (tb.exact_mode ? 1e300 : tb.radius) &&
                gap2_alpha(a_hi) >= 0.0) {
                bracketed = true;
                break;
            }
            a_hi *= 2.0;
        }
        if (!bracketed) {
            fallback(zb);
            return;
        }

        double a_lo = 0.0, ga_lo = gap2_alpha(0.0), ga_hi = gap2_alpha(a_hi);
        double side = 0.0;
        for (int it = 0; it < 60 && (a_hi - a_lo) > 1e-15 * (1.0 + a_hi); ++it) {
            double am = a_lo + (-ga_lo) * (a_hi - a_lo) / (ga_hi - ga_lo);
            if (!(am > a_lo && am < a_hi)) am = 0.5 * (a_lo + a_hi);
            const double gm = gap2_alpha(am);
            if (gm < 0.0) {
                a_lo = am;
                ga_lo = gm;
                if (side == -1.0) ga_hi *= 0.5;
                side = -1.0;
            } else {
                a_hi = am;
                ga_hi = gm;
                if (side == 1.0) ga_lo *= 0.5;
                side = 1.0;
            }
        }

        // land on the inside end of the bracket and verify against the exact
        // profile; the Taylor model is good to ~1e-10, so one or two nudges
        // suffice when the verification bites
        double alpha = a_hi;
        bool ok = false;
        for (int tries = 0; tries < 40; ++tries) {
            for (int i = 0; i < dim_; ++i) zs_try_[i] = zs_[i] + alpha * phi[i];
            if (exact_inside_tol(zs_try_)) {
                ok = true;
                break;
            }
            alpha += std::max(1e-15 * (1.0 + alpha), (a_hi - a_lo)) * (1 << std::min(tries, 20));
        }
        if (!ok) {
            fallback(zb);
            return;
        }
        for (int i = 0; i < dim_; ++i) z_[i] = zs_try_[i];
        Lt_ += alpha;
        if (std::abs(z_[0] - anch_x_) > 0.5 * anch_R_ || anch_b_ <= 0.0) refresh_anchor(z_[0]);
    }

    // membership with the accepted-state tolerance gap >= -1e-9 (1+||z||)
    bool exact_inside_tol(const std::vector<double>& z) const {
        if (z[0] < 0.0) return false;
        const double b = m_->dom.boundary.value(z[0]);
        double y2 = 0.0;
        for (int i = 1; i < dim_; ++i) y2 += z[i] * z[i];
        const double ny = std::sqrt(y2);
        double n2 = z[0] * z[0] + y2;
        return b - ny >= -1e-10 * (1.0 + std::sqrt(n2));
    }

    // reflection field at a crossing point, face-aware
    void boundary_field(const std::vector<double>& zb, std::vector<double>& phi) {
        phi.assign(dim_, 0.0);
        if (m_->phi.kind() == ReflectionField::Kind::Custom) {
            const Point p = m_->phi.callback()(zb);
            std::copy(p.begin(), p.end(), phi.begin());
            return;
        }
        double ny = 0.0;
        for (int i = 1; i < dim_; ++i) ny += zb[i] * zb[i];
        ny = std::sqrt(ny);
        const double xb = std::max(zb[0], 0.0);
        const double bv = m_->dom.boundary.value(xb);
        const bool face = ny <= 0.0 || ny < 0.5 * bv || xb < 1e-12;
        if (face) {
            phi[0] = 1.0;  // axial face: inward unit direction
            return;
        }
        const double bp = m_->dom.boundary.eval(xb).first;
        if (m_->phi.kind() == ReflectionField::Kind::ScaledNormal) {
            phi[0] = m_->phi.s0() * bp;
            for (int i = 1; i < dim_; ++i) phi[i] = -m_->phi.c0() * zb[i] / ny;
        } else {
            const double s = std::sqrt(1.0 + bp * bp);
            phi[0] = bp / s;
            for (int i = 1; i < dim_; ++i) phi[i] = -zb[i] / (ny * s);
        }
    }

    // nearest-point projection of the proposal onto the domain; local-time
    // increment is the correction length over <phi, n> at the crossing point
    void fallback(const std::vector<double>& zb) {
        ++diag_.fallbacks;
        const double xs = zs_[0];
        double ys2 = 0.0;
        for (int i = 1; i < dim_; ++i) ys2 += zs_[i] * zs_[i];
        const double ny = std::sqrt(ys2);

        auto dist2 = [&](double x) {
            const double b = m_->dom.boundary.value(x);
            const double dy = std::max(0.0, ny - b);
            return (x - xs) * (x - xs) + dy * dy;
        };
        double lo = 0.0;
        double hi = std::max({z_[0], xs, 0.0}) + 2.0 * (std::abs(xs - z_[0]) + ny) + 0.1;
        const double gr = 0.6180339887498949;
        double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
        double f1 = dist2(x1), f2 = dist2(x2);
        for (int it = 0; it < 120 && (hi - lo) > 1e-13 * (1.0 + hi); ++it) {
            if (f1 < f2) {
                hi = x2; x2 = x1; f2 = f1;
                x1 = hi - gr * (hi - lo); f1 = dist2(x1);
            } else {
                lo = x1; x1 = x2; f1 = f2;
                x2 = lo + gr * (hi - lo); f2 = dist2(x2);
            }
        }
        const double xp = std::max(0.0, 0.5 * (lo + hi));
        const double bp = m_->dom.boundary.value(xp);
        std::vector<double>& zp = zs_try_;
        zp[0] = xp;
        const double shrink = ny > bp ? (bp / ny) * (1.0 - 1e-14) : 1.0;
        for (int i = 1; i < dim_; ++i) zp[i] = zs_[i] * shrink;

        double corr = 0.0;
        for (int i = 0; i < dim_; ++i) corr += (zp[i] - zs_[i]) * (zp[i] - zs_[i]);
        corr = std::sqrt(corr);

        std::vector<double>& phi = phi_buf_;
        boundary_field(zb, phi);
        double den = face_normal_dot(zb, phi);
        Lt_ += corr / std::max(den, 0.05);
        z_ = zp;
        refresh_anchor(z_[0]);
    }

    double face_normal_dot(const std::vector<double>& zb, const std::vector<double>& phi) const {
        double ny = 0.0;
        for (int i = 1; i < dim_; ++i) ny += zb[i] * zb[i];
        ny = std::sqrt(ny);
        const double xb = std::max(zb[0], 0.0);
        const double bv = m_->dom.boundary.value(xb);
        if (ny <= 0.0 || ny < 0.5 * bv || xb < 1e-12) return phi[0];  // axial face, n = e_x
        const double bpv = m_->dom.boundary.eval(std::max(xb, 1e-300)).first;
        const double s = std::sqrt(1.0 + bpv * bpv);
        double dot = phi[0] * bpv / s;
        for (int i = 1; i < dim_; ++i) dot -= phi[i] * zb[i] / (ny * s);
        return dot;
    }

    std::vector<double> zb_buf_ = std::vector<double>(8, 0.0);
    std::vector<double> phi_buf_ = std::vector<double>(8, 0.0);
    std::vector<double> zs_try_ = std::vector<double>(8, 0.0);
};

}  // namespace prbm::detail
