#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "extra/classifier.hpp"
#include "extra/errors.hpp"
#include "extra/math.hpp"
#include "extra/rng.hpp"
#include "extra/sufficient_statistic.hpp"
#include "extra/tilt.hpp"
#include "extra/types.hpp"

namespace extra {

struct ExtraConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 256;
    double lambda = 1.0;
    std::size_t max_steps = 20000;
    double tol = 1e-6;
    std::size_t patience = 20;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw DomainError("learning_rate must be positive and finite");
        }
        if (batch_size == 0) throw DomainError("batch_size must be positive");
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw DomainError("lambda must be positive and finite");
        }
        if (max_steps == 0) throw DomainError("max_steps must be positive");
        if (!(tol > 0.0)) throw DomainError("tol must be positive");
        if (patience == 0) throw DomainError("patience must be positive");
    }
};

// Per-step optimization records plus the periodic full-data evaluations the
// convergence decision is based on.
struct FitTrace {
    std::vector<std::uint32_t> step;
    std::vector<double> objective;  // minibatch values
    std::vector<double> loss;
    std::vector<double> normalizer;

    std::vector<std::uint32_t> check_step;  // full-data checks, step 0 included
    std::vector<double> check_objective;
    std::vector<double> check_ema;  // EMA of improvement; 0 at step 0

    bool converged = false;
    std::size_t steps_taken = 0;

    bool operator==(const FitTrace&) const = default;
};

struct FitResult {
    TiltParams params;  // normalized: intercepts hold alpha
    FitTrace trace;
    // full-source normalizer at the pre-normalization iterate (the value
    // whose log was subtracted from the intercepts)
    double final_normalizer = 0.0;

    bool operator==(const FitResult&) const = default;
};

// Divergence with the partial trace attached so callers can still persist it.
struct FitDivergence : DivergenceError {
    FitTrace trace;
    FitDivergence(const std::string& msg, FitTrace t)
        : DivergenceError(msg), trace(std::move(t)) {}
};

// Gradient of the objective, laid out like the beta-form parameters.
struct ExtraGradient {
    std::vector<double> theta0;
    double beta0 = 0.0;
    std::vector<double> theta1;
    double beta1 = 0.0;

    double norm() const {
        double s = beta0 * beta0 + beta1 * beta1;
        for (double v : theta0) s += v * v;
        for (double v : theta1) s += v * v;
        return std::sqrt(s);
    }
};

namespace detail {

// Statistic images and classifier outputs precomputed once per fit; the
// batch reductions below run over row-index views of these arrays in a
// fixed left-to-right order, which keeps replays bit-identical.
struct FitData {
    FeatureMatrix source_t;  // n_W x p
    std::vector<std::uint8_t> source_u;
    FeatureMatrix target_t;     // n_T x p
    FeatureMatrix target_eta;   // n_T x 2
};

template <ProbabilisticClassifier Classifier>
FitData prepare_fit_data(const LabeledDataset& source, const UnlabeledDataset& target,
                         const Classifier& clf, const SufficientStatistic& spec) {
    const std::size_t p = spec.output_dim();
    FitData d;
    d.source_t = FeatureMatrix(source.size(), p);
    d.source_u = source.u;
    for (std::size_t i = 0; i < source.size(); ++i) {
        spec.apply(source.x.row(i), d.source_t.row(i));
    }
    d.target_t = FeatureMatrix(target.size(), p);
    d.target_eta = FeatureMatrix(target.size(), 2);
    for (std::size_t i = 0; i < target.size(); ++i) {
        spec.apply(target.x.row(i), d.target_t.row(i));
        const std::array<double, 2> eta = clf.predict_proba(target.x.row(i));
        d.target_eta(i, 0) = eta[0];
        d.target_eta(i, 1) = eta[1];
    }
    return d;
}

// (1/B) sum_j log sum_u eta_u(x_j) exp(theta_u . T(x_j) + beta_u), via
// log-sum-exp so near-zero clipped probabilities cannot underflow the sum.
inline double loss_on(const FitData& d, const TiltParams& params,
                      std::span<const std::size_t> rows) {
    double acc = 0.0;
    for (const std::size_t i : rows) {
        const auto t = d.target_t.row(i);
        const double a0 = std::log(d.target_eta(i, 0)) + dot(params.theta0, t) + params.alpha0;
        const double a1 = std::log(d.target_eta(i, 1)) + dot(params.theta1, t) + params.alpha1;
        const double v = log_sum_exp(a0, a1);
        if (!std::isfinite(v)) {
            throw NumericError("non-finite loss term at target row " + std::to_string(i), v);
        }
        acc += v;
    }
    return acc / static_cast<double>(rows.size());
}

// (1/B) sum_j exp(theta_{u_j} . T(x_j) + beta_{u_j})
inline double normalizer_on(const FitData& d, const TiltParams& params,
                            std::span<const std::size_t> rows) {
    double acc = 0.0;
    for (const std::size_t i : rows) {
        const double e = tilt_exponent(params, d.source_t.row(i), d.source_u[i]);
        if (!(std::abs(e) <= kMaxTiltExponent)) {
            throw NumericError("normalizer exponent out of range at source row " +
                                   std::to_string(i) + ": " + std::to_string(e),
                               e);
        }
        acc += std::exp(e);
    }
    return acc / static_cast<double>(rows.size());
}

// Analytic gradient of  -L + log N + lambda (N + 1/N)  at the current
// parameters; `normalizer` must be the value computed on source_rows.
inline ExtraGradient gradient_on(const FitData& d, const TiltParams& params,
                                 std::span<const std::size_t> source_rows,
                                 std::span<const std::size_t> target_rows, double lambda,
                                 double normalizer) {
    const std::size_t p = params.dim();
    ExtraGradient g;
    g.theta0.assign(p, 0.0);
    g.theta1.assign(p, 0.0);

    // loss part: responsibilities of each class inside the log
    const double inv_bt = 1.0 / static_cast<double>(target_rows.size());
    for (const std::size_t i : target_rows) {
        const auto t = d.target_t.row(i);
        const double a0 = std::log(d.target_eta(i, 0)) + dot(params.theta0, t) + params.alpha0;
        const double a1 = std::log(d.target_eta(i, 1)) + dot(params.theta1, t) + params.alpha1;
        const double m = log_sum_exp(a0, a1);
        const double r0 = std::exp(a0 - m);
        const double r1 = std::exp(a1 - m);
        for (std::size_t j = 0; j < p; ++j) {
            g.theta0[j] -= inv_bt * r0 * t[j];
            g.theta1[j] -= inv_bt * r1 * t[j];
        }
        g.beta0 -= inv_bt * r0;
        g.beta1 -= inv_bt * r1;
    }

    // normalizer part: d/dN of log N + lambda (N + 1/N)
    const double coeff = 1.0 / normalizer + lambda - lambda / (normalizer * normalizer);
    const double inv_bs = 1.0 / static_cast<double>(source_rows.size());
    for (const std::size_t i : source_rows) {
        const auto t = d.source_t.row(i);
        const double w = std::exp(tilt_exponent(params, t, d.source_u[i]));
        const double c = coeff * inv_bs * w;
        if (d.source_u[i] == 0) {
            for (std::size_t j = 0; j < p; ++j) g.theta0[j] += c * t[j];
            g.beta0 += c;
        } else {
            for (std::size_t j = 0; j < p; ++j) g.theta1[j] += c * t[j];
            g.beta1 += c;
        }
    }
    return g;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace detail

// Minibatch loss over a target batch.
template <ProbabilisticClassifier Classifier>
double batch_loss(const Classifier& clf, const TiltParams& params,
                  const SufficientStatistic& spec, const UnlabeledDataset& target_batch) {
    target_batch.validate();
    params.validate();
    double acc = 0.0;
    std::vector<double> t(spec.output_dim());
    for (std::size_t i = 0; i < target_batch.size(); ++i) {
        spec.apply(target_batch.x.row(i), t);
        const std::array<double, 2> eta = clf.predict_proba(target_batch.x.row(i));
        const double a0 = std::log(eta[0]) + dot(params.theta0, t) + params.alpha0;
        const double a1 = std::log(eta[1]) + dot(params.theta1, t) + params.alpha1;
        const double v = log_sum_exp(a0, a1);
        if (!std::isfinite(v)) {
            throw NumericError("non-finite loss term at target row " + std::to_string(i), v);
        }
        acc += v;
    }
    return acc / static_cast<double>(target_batch.size());
}

// Minibatch normalizer over a labeled source batch.
inline double batch_normalizer(const TiltParams& params, const SufficientStatistic& spec,
                               const LabeledDataset& source_batch) {
    source_batch.validate();
    params.validate();
    double acc = 0.0;
    std::vector<double> t(spec.output_dim());
    for (std::size_t i = 0; i < source_batch.size(); ++i) {
        spec.apply(source_batch.x.row(i), t);
        const double e = tilt_exponent(params, t, source_batch.u[i]);
        if (!(std::abs(e) <= kMaxTiltExponent)) {
            throw NumericError("normalizer exponent out of range at source row " +
                                   std::to_string(i) + ": " + std::to_string(e),
                               e);
        }
        acc += std::exp(e);
    }
    return acc / static_cast<double>(source_batch.size());
}

// O = -L + log N + lambda N + lambda / N
inline double objective(double loss, double normalizer, double lambda) {
    if (!(normalizer > 0.0)) throw DomainError("normalizer must be positive");
    return -loss + std::log(normalizer) + lambda * normalizer + lambda / normalizer;
}

// Analytic gradient of the objective over (theta0, beta0, theta1, beta1),
// assembled from the same pieces as batch_loss / batch_normalizer /
// objective.
template <ProbabilisticClassifier Classifier>
ExtraGradient gradient(const Classifier& clf, const TiltParams& params,
                       const SufficientStatistic& spec, const LabeledDataset& source_batch,
                       const UnlabeledDataset& target_batch, double lambda) {
    source_batch.validate();
    target_batch.validate();
    params.validate();
    const auto d = detail::prepare_fit_data(source_batch, target_batch, clf, spec);
    const auto src_rows = detail::all_rows(source_batch.size());
    const auto tgt_rows = detail::all_rows(target_batch.size());
    const double n = detail::normalizer_on(d, params, src_rows);
    return detail::gradient_on(d, params, src_rows, tgt_rows, lambda, n);
}

// Exponential tilt reweighting fit: starts at zero parameters (unit
// weights), runs plain SGD on minibatches resampled with replacement, checks
// the full-data objective every 100 steps, and stops once the exponentially
// smoothed improvement stays below tol for `patience` consecutive checks.
// The returned intercepts are normalized with the full-source normalizer.
template <ProbabilisticClassifier Classifier>
FitResult fit_extra(const LabeledDataset& source, const UnlabeledDataset& target,
                    const Classifier& clf, const SufficientStatistic& spec,
                    const ExtraConfig& cfg) {
    source.validate();
    target.validate();
    cfg.validate();
    if (source.dim() != target.dim()) {
        throw ShapeError("source and target dimensions disagree");
    }
    if (spec.input_dim() != source.dim()) {
        throw ShapeError("statistic input dimension does not match the data");
    }

    const auto data = detail::prepare_fit_data(source, target, clf, spec);
    const auto all_src = detail::all_rows(source.size());
    const auto all_tgt = detail::all_rows(target.size());
    const std::size_t p = spec.output_dim();

    TiltParams params = TiltParams::zeros(p);
    Rng rng(cfg.seed);
    FitTrace trace;

    auto full_objective = [&](const TiltParams& q) {
        return objective(detail::loss_on(data, q, all_tgt),
                         detail::normalizer_on(data, q, all_src), cfg.lambda);
    };

    double prev_full = full_objective(params);
    trace.check_step.push_back(0);
    trace.check_objective.push_back(prev_full);
    trace.check_ema.push_back(0.0);

    std::vector<std::size_t> batch_src(cfg.batch_size), batch_tgt(cfg.batch_size);
    double ema = 0.0;
    bool ema_started = false;
    std::size_t streak = 0;
    std::size_t step = 0;
    bool converged = false;

    try {
        while (step < cfg.max_steps) {
            ++step;
            for (auto& i : batch_src) i = rng.index(source.size());
            for (auto& i : batch_tgt) i = rng.index(target.size());

            const double loss = detail::loss_on(data, params, batch_tgt);
            const double normalizer = detail::normalizer_on(data, params, batch_src);
            const double obj = objective(loss, normalizer, cfg.lambda);
            if (!std::isfinite(obj)) {
                // keep the trace finite; the message names the bad step
                trace.steps_taken = step;
                throw FitDivergence("objective became non-finite at step " + std::to_string(step),
                                    trace);
            }
            trace.step.push_back(static_cast<std::uint32_t>(step));
            trace.loss.push_back(loss);
            trace.normalizer.push_back(normalizer);
            trace.objective.push_back(obj);

            const ExtraGradient g = detail::gradient_on(data, params, batch_src, batch_tgt,
                                                        cfg.lambda, normalizer);
            for (std::size_t j = 0; j < p; ++j) {
                params.theta0[j] -= cfg.learning_rate * g.theta0[j];
                params.theta1[j] -= cfg.learning_rate * g.theta1[j];
            }
            params.alpha0 -= cfg.learning_rate * g.beta0;
            params.alpha1 -= cfg.learning_rate * g.beta1;

            if (step % 100 == 0) {
                const double full = full_objective(params);
                if (!std::isfinite(full)) {
                    trace.steps_taken = step;
                    throw FitDivergence("full objective became non-finite at step " +
                                            std::to_string(step),
                                        trace);
                }
                const double improvement = prev_full - full;
                ema = ema_started ? 0.9 * ema + 0.1 * improvement : improvement;
                ema_started = true;
                prev_full = full;
                trace.check_step.push_back(static_cast<std::uint32_t>(step));
                trace.check_objective.push_back(full);
                trace.check_ema.push_back(ema);
                if (ema < cfg.tol) {
                    if (++streak >= cfg.patience) {
                        converged = true;
                        break;
                    }
                } else {
                    streak = 0;
                }
            }
        }
    } catch (const NumericError& e) {
        trace.steps_taken = step;
        throw FitDivergence(std::string("optimization diverged: ") + e.what(), trace);
    }

    trace.converged = converged;
    trace.steps_taken = step;

    // alpha_i <- beta_i - log N, with N over the full source set
    const double n_full = detail::normalizer_on(data, params, all_src);
    const double band = 1.0 + 10.0 * cfg.lambda;
    if (!std::isfinite(n_full) || n_full < 1.0 / band || n_full > band) {
        throw FitDivergence("final normalizer " + std::to_string(n_full) +
                                " is outside the sanity band",
                            trace);
    }
    const double log_n = std::log(n_full);
    params.alpha0 -= log_n;
    params.alpha1 -= log_n;
    params.normalized = true;

    return FitResult{std::move(params), std::move(trace), n_full};
}

// Per-row weights w_j = exp(theta_{u_j} . T(x_j) + alpha_{u_j}) under a
// normalized fit.
inline std::vector<double> weight_table(const FitResult& result, const SufficientStatistic& spec,
                                        const LabeledDataset& data) {
    if (!result.params.normalized) throw DomainError("weight_table needs a normalized fit result");
    data.validate();
    std::vector<double> w(data.size());
    std::vector<double> t(spec.output_dim());
    for (std::size_t i = 0; i < data.size(); ++i) {
        spec.apply(data.x.row(i), t);
        w[i] = tilt_weight(result.params, t, data.u[i]);
    }
    return w;
}

}  // namespace extra
