#pragma once

// Shared oracle instances for the test suites. Both populations are
// hand-constructed so every expected value can be reproduced by direct
// arithmetic on the tables.

#include <cmath>
#include <cstdint>
#include <vector>

#include "extra/discrete_population.hpp"
#include "extra/tilt.hpp"
#include "extra/types.hpp"

namespace testsup {

// Four-point instance with anchor sets for both classes. Class 1 lives on
// {0,1}, class 0 on {2,3}, and the target is an exact exponential tilt of
// the source: theta1 = ln 2, alpha1 = 0, theta0 = ln 0.5, alpha0 = ln(32/9),
// giving weights 1, 2, 8/9, 4/9 on the support.
inline extra::DiscretePopulation anchor_population() {
    extra::DiscretePopulation pop;
    pop.alphabet = {{0.0}, {1.0}, {2.0}, {3.0}};
    pop.source_pmf = {{0.0, 0.2}, {0.0, 0.2}, {0.3, 0.0}, {0.3, 0.0}};
    pop.target_pmf = {{0.0, 0.2}, {0.0, 0.4}, {4.0 / 15.0, 0.0}, {2.0 / 15.0, 0.0}};
    pop.validate();
    return pop;
}

inline extra::TiltParams anchor_exact_params() {
    extra::TiltParams p;
    p.theta0 = {std::log(0.5)};
    p.alpha0 = std::log(32.0 / 9.0);
    p.theta1 = {std::log(2.0)};
    p.alpha1 = 0.0;
    p.normalized = true;
    return p;
}

// Two-point instance with full support; exact weights 0.5, 1.0, 4/3, 1.5.
inline extra::DiscretePopulation two_point_population() {
    extra::DiscretePopulation pop;
    pop.alphabet = {{0.0}, {1.0}};
    pop.source_pmf = {{0.4, 0.1}, {0.3, 0.2}};
    pop.target_pmf = {{0.2, 0.1}, {0.4, 0.3}};
    pop.validate();
    return pop;
}

// p = q: no shift at all.
inline extra::DiscretePopulation no_shift_population() {
    extra::DiscretePopulation pop;
    pop.alphabet = {{0.0}, {1.0}};
    pop.source_pmf = {{0.4, 0.1}, {0.3, 0.2}};
    pop.target_pmf = pop.source_pmf;
    pop.validate();
    return pop;
}

// Expands a pmf into an exact finite multiset: `multiplier` must turn every
// cell probability into an integer count (up to rounding noise).
inline extra::LabeledDataset expand_pmf(const extra::DiscretePopulation& pop,
                                        const std::vector<std::array<double, 2>>& pmf,
                                        std::size_t multiplier) {
    std::vector<std::vector<double>> points;
    std::vector<std::uint8_t> labels;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        for (int u = 0; u < 2; ++u) {
            const double exact = pmf[k][u] * static_cast<double>(multiplier);
            const auto count = static_cast<long long>(std::llround(exact));
            if (std::abs(exact - static_cast<double>(count)) > 1e-6) {
                throw std::logic_error("multiplier does not make the pmf integral");
            }
            for (long long c = 0; c < count; ++c) {
                points.push_back(pop.alphabet[k]);
                labels.push_back(static_cast<std::uint8_t>(u));
            }
        }
    }
    extra::LabeledDataset data;
    data.x = extra::FeatureMatrix(points.size(), pop.dim());
    data.u = labels;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < pop.dim(); ++j) data.x(i, j) = points[i][j];
    }
    return data;
}

inline extra::LabeledDataset expand_source(const extra::DiscretePopulation& pop,
                                           std::size_t multiplier) {
    return expand_pmf(pop, pop.source_pmf, multiplier);
}

inline extra::UnlabeledDataset expand_target(const extra::DiscretePopulation& pop,
                                             std::size_t multiplier) {
    auto labeled = expand_pmf(pop, pop.target_pmf, multiplier);
    return extra::UnlabeledDataset{std::move(labeled.x)};
}

}  // namespace testsup
