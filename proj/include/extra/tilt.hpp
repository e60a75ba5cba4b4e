#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "extra/discrete_population.hpp"
#include "extra/errors.hpp"
#include "extra/math.hpp"
#include "extra/sufficient_statistic.hpp"

namespace extra {

// Parameters of the per-class exponential tilt: the log-ratio of target to
// source joint density at (x,u) is theta_u . T(x) + alpha_u. While the
// optimizer runs the intercepts hold the pre-normalization beta values and
// `normalized` stays false; the returned fit carries alpha and sets it true.
struct TiltParams {
    std::vector<double> theta0;
    double alpha0 = 0.0;
    std::vector<double> theta1;
    double alpha1 = 0.0;
    bool normalized = false;

    static TiltParams zeros(std::size_t p, bool normalized = false) {
        TiltParams t;
        t.theta0.assign(p, 0.0);
        t.theta1.assign(p, 0.0);
        t.normalized = normalized;
        return t;
    }

    std::size_t dim() const { return theta0.size(); }

    std::span<const double> theta(int u) const { return u == 0 ? theta0 : theta1; }
    double alpha(int u) const { return u == 0 ? alpha0 : alpha1; }

    void validate() const {
        if (theta0.size() != theta1.size()) throw ShapeError("tilt parameter blocks disagree in length");
        auto finite = [](std::span<const double> v) {
            for (double x : v) {
                if (!std::isfinite(x)) return false;
            }
            return true;
        };
        if (!finite(theta0) || !finite(theta1) || !std::isfinite(alpha0) || !std::isfinite(alpha1)) {
            throw DomainError("non-finite tilt parameter");
        }
    }

    bool operator==(const TiltParams&) const = default;
};

// Exponents past this magnitude raise instead of silently saturating;
// weights feed risk estimates and silent infinities would corrupt them.
inline constexpr double kMaxTiltExponent = 700.0;

// theta_u . t + alpha_u
inline double tilt_exponent(const TiltParams& params, std::span<const double> t, int u) {
    if (t.size() != params.dim()) throw ShapeError("statistic length does not match tilt parameters");
    return dot(params.theta(u), t) + params.alpha(u);
}

// w(x,u) = exp(theta_u . T(x) + alpha_u), always positive.
inline double tilt_weight(const TiltParams& params, std::span<const double> t, int u) {
    const double e = tilt_exponent(params, t, u);
    if (!(std::abs(e) <= kMaxTiltExponent)) {
        throw NumericError("tilt exponent out of range: " + std::to_string(e), e);
    }
    return std::exp(e);
}

// Target feature marginal implied by the tilt on a discrete population:
// sum_u p(x,u) exp(theta_u . T(x) + alpha_u).
inline double target_marginal(const DiscretePopulation& pop, const TiltParams& params,
                              const SufficientStatistic& spec, std::span<const double> x) {
    const std::size_t k = pop.find(x);
    const auto t = spec(x);
    return pop.source_pmf[k][0] * tilt_weight(params, t, 0) +
           pop.source_pmf[k][1] * tilt_weight(params, t, 1);
}

}  // namespace extra
