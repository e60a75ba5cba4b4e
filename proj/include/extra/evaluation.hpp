#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extra/classifier.hpp"
#include "extra/discrete_population.hpp"
#include "extra/errors.hpp"
#include "extra/math.hpp"
#include "extra/sufficient_statistic.hpp"
#include "extra/tilt.hpp"
#include "extra/types.hpp"

namespace extra {

enum class Loss { zero_one, log_loss };

inline const char* loss_name(Loss loss) {
    return loss == Loss::zero_one ? "zero_one" : "log_loss";
}

// Pointwise loss of a probabilistic prediction p1 = P(U=1 | x) against a
// binary label. zero_one thresholds at 0.5; log_loss expects p1 already
// clipped away from {0,1}.
inline double point_loss(Loss loss, double p1, int label) {
    if (loss == Loss::zero_one) {
        return (p1 > 0.5 ? 1 : 0) == label ? 0.0 : 1.0;
    }
    return label == 1 ? -std::log(p1) : -std::log1p(-p1);
}

// (1/n) sum_j l(f(x_j), u_j) w_j, the reweighted empirical source risk that
// estimates the target risk.
inline double reweighted_risk(std::span<const double> predictions,
                              std::span<const std::uint8_t> labels,
                              std::span<const double> weights, Loss loss) {
    if (predictions.size() != labels.size() || predictions.size() != weights.size()) {
        throw ShapeError("predictions, labels and weights must have equal length");
    }
    if (predictions.empty()) throw ShapeError("reweighted_risk of empty sample");
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!(weights[i] > 0.0)) throw DomainError("weights must be positive");
        acc += point_loss(loss, predictions[i], labels[i]) * weights[i];
    }
    return acc / static_cast<double>(predictions.size());
}

// Population-expectation form on an exact oracle:
//   sum_{x,u} p(x,u) l(f(x), u) w(x,u)
// Predictor maps a feature point to p1.
template <class Predictor>
double population_reweighted_risk(const DiscretePopulation& pop, Predictor&& f,
                                  const ExactWeightTable& weights, Loss loss) {
    double acc = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const double p1 = f(std::span<const double>(pop.alphabet[k]));
        for (int u = 0; u < 2; ++u) {
            const double p = pop.source_pmf[k][u];
            if (p == 0.0) continue;
            acc += p * point_loss(loss, p1, u) * weights.at(k, u);
        }
    }
    return acc;
}

// True target risk on the oracle: sum_{x,u} q(x,u) l(f(x), u).
template <class Predictor>
double population_target_risk(const DiscretePopulation& pop, Predictor&& f, Loss loss) {
    double acc = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const double p1 = f(std::span<const double>(pop.alphabet[k]));
        for (int u = 0; u < 2; ++u) {
            acc += pop.target_pmf[k][u] * point_loss(loss, p1, u);
        }
    }
    return acc;
}

struct KlReport {
    double kl_fitted = 0.0;      // KL(q_X || normalized reweighted source marginal)
    double kl_unweighted = 0.0;  // same at zero parameters
};

namespace detail {

inline double kl_against_tilted_marginal(const DiscretePopulation& pop, const TiltParams& params,
                                         const SufficientStatistic& spec) {
    std::vector<double> m(pop.size());
    double total = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const auto t = spec(pop.alphabet[k]);
        m[k] = pop.source_pmf[k][0] * tilt_weight(params, t, 0) +
               pop.source_pmf[k][1] * tilt_weight(params, t, 1);
        total += m[k];
    }
    if (!(total > 0.0)) throw DomainError("reweighted source marginal has zero mass");
    double kl = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const double q = pop.target_marginal(k);
        if (q == 0.0) continue;
        const double ref = m[k] / total;
        if (!(ref > 0.0)) {
            throw SupportViolation("reweighted marginal vanishes at alphabet index " +
                                   std::to_string(k) + " where q_X > 0");
        }
        kl += q * std::log(q / ref);
    }
    return std::max(kl, 0.0);
}

}  // namespace detail

// KL divergence of the target feature marginal from the (normalized)
// reweighted source marginal, at the fitted parameters and at zero tilt.
// Restricted to discrete populations, where it is exact.
inline KlReport discrete_kl(const DiscretePopulation& pop, const TiltParams& params,
                            const SufficientStatistic& spec) {
    pop.validate();
    params.validate();
    KlReport r;
    r.kl_fitted = detail::kl_against_tilted_marginal(pop, params, spec);
    r.kl_unweighted =
        detail::kl_against_tilted_marginal(pop, TiltParams::zeros(spec.output_dim()), spec);
    return r;
}

// Anchor sets per class (cells where only that class has source mass) and
// the identifiability decision: both classes must have anchors whose
// statistic images span p+1 dimensions affinely, the +1 accounting for the
// intercept.
struct AnchorReport {
    std::array<std::vector<std::size_t>, 2> anchors;  // alphabet indices per class
    std::size_t statistic_rank = 0;  // min affine rank across classes
    bool identifiable = false;
};

namespace detail {

// rank of the row set {[t(x), 1]} by Gaussian elimination
inline std::size_t affine_rank(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return 0;
    const std::size_t ncol = rows.front().size();
    std::vector<std::vector<double>> m = rows;
    std::size_t rank = 0;
    for (std::size_t col = 0; col < ncol && rank < m.size(); ++col) {
        std::size_t pivot = rank;
        for (std::size_t r = rank + 1; r < m.size(); ++r) {
            if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
        }
        if (std::abs(m[pivot][col]) < 1e-9) continue;
        std::swap(m[rank], m[pivot]);
        for (std::size_t r = rank + 1; r < m.size(); ++r) {
            const double f = m[r][col] / m[rank][col];
            for (std::size_t c = col; c < ncol; ++c) m[r][c] -= f * m[rank][c];
        }
        ++rank;
    }
    return rank;
}

}  // namespace detail

inline AnchorReport anchor_sets(const DiscretePopulation& pop, const SufficientStatistic& spec) {
    pop.validate();
    AnchorReport report;
    const std::size_t p = spec.output_dim();
    std::size_t min_rank = p + 1;
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::vector<double>> images;
        for (std::size_t k = 0; k < pop.size(); ++k) {
            const double own = pop.source_pmf[k][cls];
            const double other = pop.source_pmf[k][1 - cls];
            if (own > 0.0 && other == 0.0) {
                report.anchors[static_cast<std::size_t>(cls)].push_back(k);
                auto t = spec(pop.alphabet[k]);
                t.push_back(1.0);
                images.push_back(std::move(t));
            }
        }
        min_rank = std::min(min_rank, detail::affine_rank(images));
    }
    report.statistic_rank = min_rank;
    report.identifiable = min_rank == p + 1;
    return report;
}

// (sum w)^2 / sum w^2, the usual importance-sampling degeneracy diagnostic:
// n when all weights are equal, near 1 when a single weight dominates.
inline double effective_sample_size(std::span<const double> weights) {
    if (weights.empty()) throw ShapeError("effective_sample_size of empty weights");
    double s = 0.0, s2 = 0.0;
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("weights must be positive and finite");
        s += w;
        s2 += w * w;
    }
    return s * s / s2;
}

// Weighted fine-tuning: retrains the logistic classifier under the fitted
// importance weights. Unit weights reproduce train_classifier exactly.
inline SourceClassifier fine_tune(const LabeledDataset& source, std::span<const double> weights,
                                  const TrainConfig& cfg, TrainDiagnostics* diag = nullptr) {
    if (weights.size() != source.size()) throw ShapeError("weight length must match source rows");
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("weights must be positive and finite");
    }
    return train_weighted(source, weights, cfg, diag);
}

struct RiskReport {
    double unweighted_source_risk = 0.0;
    double reweighted_risk = 0.0;
    std::optional<double> true_target_risk;  // absent without target labels
    Loss loss = Loss::zero_one;
};

// Assembles the risk report for a classifier: unweighted source risk,
// reweighted (target-estimating) risk, and the true target risk when a
// labeled target sample is available for evaluation.
template <ProbabilisticClassifier Classifier>
RiskReport evaluate_risk(const Classifier& clf, const LabeledDataset& source,
                         std::span<const double> weights, Loss loss,
                         const LabeledDataset* target_holdout = nullptr) {
    source.validate();
    std::vector<double> predictions(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        predictions[i] = clf.predict_proba(source.x.row(i))[1];
    }
    const std::vector<double> unit(source.size(), 1.0);
    RiskReport report;
    report.loss = loss;
    report.unweighted_source_risk = reweighted_risk(predictions, source.u, unit, loss);
    report.reweighted_risk = reweighted_risk(predictions, source.u, weights, loss);
    if (target_holdout != nullptr) {
        target_holdout->validate();
        std::vector<double> tp(target_holdout->size());
        for (std::size_t i = 0; i < target_holdout->size(); ++i) {
            tp[i] = clf.predict_proba(target_holdout->x.row(i))[1];
        }
        const std::vector<double> tu(target_holdout->size(), 1.0);
        report.true_target_risk = reweighted_risk(tp, target_holdout->u, tu, loss);
    }
    return report;
}

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
};

// Equal-width histogram over [min, max]; the last bin is right-closed.
inline std::vector<HistogramBin> weight_histogram(std::span<const double> weights,
                                                  std::size_t bins) {
    if (weights.empty()) throw ShapeError("histogram of empty weights");
    if (bins == 0) throw DomainError("histogram needs at least one bin");
    const auto [lo_it, hi_it] = std::minmax_element(weights.begin(), weights.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<HistogramBin> out(bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].left = lo + width * static_cast<double>(b);
        out[b].right = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (double w : weights) {
        std::size_t b =
            width > 0.0 ? static_cast<std::size_t>((w - lo) / width) : std::size_t{0};
        if (b >= bins) b = bins - 1;
        ++out[b].count;
    }
    return out;
}

}  // namespace extra
