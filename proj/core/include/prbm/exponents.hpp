#pragma once

#include <functional>
#include <optional>
#include <string>

namespace prbm {

// Phases ordered by increasing boundary growth: raising beta never moves the
// phase left in this order.
enum class Phase {
    PositiveRecurrent,
    CriticalPosNull,
    NullRecurrent,
    CriticalRecTrans,
    Transient,
};

std::string phase_name(Phase p);

struct ExponentReport {
    double beta = 0.0;
    double beta_c = 1.0;  // c0 sigma1^2 / (s0 sigma2^2)
    double m_c = 0.5;     // (1 - beta/beta_c)/2, return-time tail exponent
    double M_c = -0.5;    // -(1 + beta/beta_c)/2, total-variation rate exponent
    Phase phase = Phase::NullRecurrent;
    std::optional<double> invariant_tail;  // 2*M_c when positive recurrent
    std::optional<double> tv_rate;         // M_c when positive recurrent

    std::string to_json() const;
    std::string summary() const;
};

// Closed-form phase classification. Equality with the critical growth rates
// is decided at 1e-12 relative tolerance; set `critical_flag` when a run is
// intentionally at a critical point so the measure-zero phases are opt-in.
ExponentReport classify(double beta, double sigma1_sq, double sigma2_sq, double s0, double c0,
                        bool critical_flag = false);

// Normally reflected Brownian motion in d+1 dimensions: sigma1^2 = 1,
// sigma2^2 = d, s0 = c0 = 1, so the critical growth rate is 1/d.
ExponentReport normal_bm_exponents(int d, double beta, bool critical_flag = false);

// Converts a nonincreasing stationary-tail bound f (through F(y) = y f(y))
// and a moment envelope g(start, t) into a lower bound on the distance to
// stationarity at time t: returns f(F^{-1}(2 g(u,t))) / 2. F^{-1} is found by
// bisection to relative 1e-10; the growth of F is probed by sampling.
double tv_lower_bound(const std::function<double(double)>& f,
                      const std::function<double(double, double)>& g, double u, double t);

}  // namespace prbm
