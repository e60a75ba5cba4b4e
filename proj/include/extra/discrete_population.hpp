#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extra/errors.hpp"
#include "extra/rng.hpp"
#include "extra/types.hpp"

namespace extra {

// Exact joint probability tables p(x,u) and q(x,u) over a finite feature
// alphabet. This is the brute-force oracle the sampled pipeline is validated
// against. Alphabet points compare by exact coordinate equality; these
// populations are constructed, not measured.
struct DiscretePopulation {
    std::vector<std::vector<double>> alphabet;
    std::vector<std::array<double, 2>> source_pmf;  // p(x,u), aligned to alphabet
    std::vector<std::array<double, 2>> target_pmf;  // q(x,u)

    std::size_t size() const { return alphabet.size(); }
    std::size_t dim() const { return alphabet.empty() ? 0 : alphabet.front().size(); }

    double source_marginal(std::size_t k) const { return source_pmf[k][0] + source_pmf[k][1]; }
    double target_marginal(std::size_t k) const { return target_pmf[k][0] + target_pmf[k][1]; }

    void validate() const {
        if (alphabet.empty()) throw ShapeError("population alphabet is empty");
        if (source_pmf.size() != alphabet.size() || target_pmf.size() != alphabet.size()) {
            throw ShapeError("pmf tables must align with the alphabet");
        }
        const std::size_t d = alphabet.front().size();
        for (const auto& x : alphabet) {
            if (x.size() != d) throw ShapeError("alphabet points must share one dimension");
            for (double v : x) {
                if (!std::isfinite(v)) throw DomainError("non-finite alphabet point");
            }
        }
        double ps = 0.0, qs = 0.0;
        for (std::size_t k = 0; k < alphabet.size(); ++k) {
            for (int u = 0; u < 2; ++u) {
                if (!(source_pmf[k][u] >= 0.0) || !(target_pmf[k][u] >= 0.0)) {
                    throw DomainError("pmf entries must be nonnegative");
                }
                ps += source_pmf[k][u];
                qs += target_pmf[k][u];
            }
        }
        if (std::abs(ps - 1.0) > 1e-12) throw DomainError("source pmf does not sum to 1");
        if (std::abs(qs - 1.0) > 1e-12) throw DomainError("target pmf does not sum to 1");
    }

    // Exact-equality lookup; throws DomainError when x is not in the alphabet.
    std::size_t find(std::span<const double> x) const {
        for (std::size_t k = 0; k < alphabet.size(); ++k) {
            const auto& a = alphabet[k];
            if (a.size() != x.size()) continue;
            bool eq = true;
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (a[j] != x[j]) {
                    eq = false;
                    break;
                }
            }
            if (eq) return k;
        }
        throw DomainError("feature point is not in the population alphabet");
    }
};

// Ratio table w(x,u) = q(x,u)/p(x,u); cells with p = q = 0 are absent.
struct ExactWeightTable {
    std::vector<std::array<std::optional<double>, 2>> w;

    double at(std::size_t k, int u) const {
        const auto& cell = w[k][static_cast<std::size_t>(u)];
        if (!cell) throw DomainError("weight requested for a cell outside the support");
        return *cell;
    }
};

// The true density ratio the tilt model approximates. Requires absolute
// continuity: q(x,u) > 0 forces p(x,u) > 0.
inline ExactWeightTable exact_weights(const DiscretePopulation& pop) {
    pop.validate();
    ExactWeightTable table;
    table.w.resize(pop.size());
    for (std::size_t k = 0; k < pop.size(); ++k) {
        for (int u = 0; u < 2; ++u) {
            const double p = pop.source_pmf[k][u];
            const double q = pop.target_pmf[k][u];
            if (p == 0.0) {
                if (q > 0.0) {
                    throw SupportViolation("q > 0 with p = 0 at alphabet index " +
                                           std::to_string(k) + ", u = " + std::to_string(u));
                }
                continue;  // absent
            }
            table.w[k][static_cast<std::size_t>(u)] = q / p;
        }
    }
    return table;
}

namespace detail {

// cumulative over cells in fixed (alphabet, u) order
inline std::vector<double> cell_cdf(const std::vector<std::array<double, 2>>& pmf) {
    std::vector<double> cdf;
    cdf.reserve(pmf.size() * 2);
    double acc = 0.0;
    for (const auto& cell : pmf) {
        for (int u = 0; u < 2; ++u) {
            acc += cell[u];
            cdf.push_back(acc);
        }
    }
    cdf.back() = 1.0;  // guard the last bucket against rounding
    return cdf;
}

inline std::size_t draw_cell(const std::vector<double>& cdf, double r) {
    std::size_t lo = 0, hi = cdf.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (cdf[mid] <= r) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    return lo;
}

inline LabeledDataset sample_joint(const DiscretePopulation& pop,
                                   const std::vector<std::array<double, 2>>& pmf,
                                   std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ShapeError("sample size must be positive");
    const auto cdf = cell_cdf(pmf);
    Rng rng(seed);
    LabeledDataset out;
    out.x = FeatureMatrix(n, pop.dim());
    out.u.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cell = draw_cell(cdf, rng.uniform());
        const std::size_t k = cell / 2;
        const auto& point = pop.alphabet[k];
        auto row = out.x.row(i);
        for (std::size_t j = 0; j < point.size(); ++j) row[j] = point[j];
        out.u[i] = static_cast<std::uint8_t>(cell % 2);
    }
    return out;
}

}  // namespace detail

// i.i.d. draws from the source table, labels kept.
inline LabeledDataset sample_source(const DiscretePopulation& pop, std::size_t n,
                                    std::uint64_t seed) {
    pop.validate();
    return detail::sample_joint(pop, pop.source_pmf, n, seed);
}

// i.i.d. draws from the target table, labels discarded.
inline UnlabeledDataset sample_target(const DiscretePopulation& pop, std::size_t n,
                                      std::uint64_t seed) {
    pop.validate();
    auto labeled = detail::sample_joint(pop, pop.target_pmf, n, seed);
    return UnlabeledDataset{std::move(labeled.x)};
}

// Labeled draws from the target table. Only for held-out evaluation in
// tests; the fitting path never sees target labels.
inline LabeledDataset sample_target_labeled(const DiscretePopulation& pop, std::size_t n,
                                            std::uint64_t seed) {
    pop.validate();
    return detail::sample_joint(pop, pop.target_pmf, n, seed);
}

}  // namespace extra
