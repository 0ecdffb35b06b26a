#include "prbm/exponents.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "prbm/errors.hpp"

namespace prbm {

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::PositiveRecurrent: return "PositiveRecurrent";
        case Phase::CriticalPosNull: return "CriticalPosNull";
        case Phase::NullRecurrent: return "NullRecurrent";
        case Phase::CriticalRecTrans: return "CriticalRecTrans";
        case Phase::Transient: return "Transient";
    }
    return "?";
}

ExponentReport classify(double beta, double sigma1_sq, double sigma2_sq, double s0, double c0,
                        bool critical_flag) {
    if (sigma1_sq <= 0.0 || sigma2_sq <= 0.0 || s0 <= 0.0 || c0 <= 0.0)
        throw config_error("classify: limit parameters must be positive");
    if (beta >= 1.0) throw assumption_error("classify: boundary growth exponent must be < 1");

    ExponentReport r;
    r.beta = beta;
    r.beta_c = c0 * sigma1_sq / (s0 * sigma2_sq);
    const double q = beta / r.beta_c;
    r.m_c = 0.5 * (1.0 - q);
    r.M_c = -0.5 * (1.0 + q);

    const double tol = 1e-12 * std::max(1.0, std::abs(beta));
    const bool at_upper = critical_flag ? std::abs(beta - r.beta_c) <= tol : beta == r.beta_c;
    const bool at_lower = critical_flag ? std::abs(beta + r.beta_c) <= tol : beta == -r.beta_c;

    if (at_upper) {
        r.phase = Phase::CriticalRecTrans;
    } else if (at_lower) {
        r.phase = Phase::CriticalPosNull;
    } else if (beta > r.beta_c) {
        r.phase = Phase::Transient;
    } else if (beta > -r.beta_c) {
        r.phase = Phase::NullRecurrent;
    } else {
        r.phase = Phase::PositiveRecurrent;
        r.invariant_tail = 2.0 * r.M_c;
        r.tv_rate = r.M_c;
    }
    return r;
}

ExponentReport normal_bm_exponents(int d, double beta, bool critical_flag) {
    if (d < 1) throw config_error("normal_bm_exponents: dimension must be >= 1");
    return classify(beta, 1.0, static_cast<double>(d), 1.0, 1.0, critical_flag);
}

double tv_lower_bound(const std::function<double(double)>& f,
                      const std::function<double(double, double)>& g, double u, double t) {
    // probe F(y) = y f(y) for strict growth on [1, 1e12]
    auto F = [&f](double y) { return y * f(y); };
    double prev = F(1.0);
    const double f1 = f(1.0);
    if (!(f1 > 0.0) || f1 > 1.0 + 1e-12)
        throw shape_error("tail function f must map [1,inf) into (0,1]");
    for (int i = 1; i <= 48; ++i) {
        const double y = std::pow(10.0, 12.0 * i / 48.0);
        const double cur = F(y);
        if (!(cur > prev)) throw shape_error("F(y) = y f(y) is not increasing on the probe grid");
        prev = cur;
    }

    const double target = 2.0 * g(u, t);
    if (!(target > 0.0) || !std::isfinite(target))
        throw shape_error("moment envelope g must be positive and finite");

    // bracket then bisect F(y) = target
    double lo = 1.0, hi = 2.0;
    while (F(hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) throw shape_error("F does not reach 2 g(u,t) before overflow");
    }
    if (F(lo) > target) lo = 1.0;
    for (int it = 0; it < 200 && (hi - lo) > 1e-10 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * f(0.5 * (lo + hi));
}

std::string ExponentReport::to_json() const {
    nlohmann::json j;
    j["beta"] = beta;
    j["beta_c"] = beta_c;
    j["m_c"] = m_c;
    j["M_c"] = M_c;
    j["phase"] = phase_name(phase);
    if (invariant_tail) j["invariant_tail"] = *invariant_tail;
    if (tv_rate) j["tv_rate"] = *tv_rate;
    return j.dump(2);
}

std::string ExponentReport::summary() const {
    std::string s = "phase=" + phase_name(phase) + ", beta=" + std::to_string(beta) +
                    ", beta_c=" + std::to_string(beta_c) + ", m_c=" + std::to_string(m_c) +
                    ", M_c=" + std::to_string(M_c);
    if (invariant_tail) s += ", invariant_tail=" + std::to_string(*invariant_tail);
    if (tv_rate) s += ", tv_rate=" + std::to_string(*tv_rate);
    return s;
}

}  // namespace prbm
