#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "extra/discrete_population.hpp"
#include "extra/errors.hpp"
#include "extra/math.hpp"
#include "extra/rng.hpp"
#include "extra/types.hpp"

namespace extra {

template <class C>
concept ProbabilisticClassifier = requires(const C& c, std::span<const double> x) {
    { c.predict_proba(x) } -> std::convertible_to<std::array<double, 2>>;
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    double l2_penalty = 1e-4;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw DomainError("learning_rate must be positive and finite");
        }
        if (epochs == 0) throw DomainError("epochs must be positive");
        if (batch_size == 0) throw DomainError("batch_size must be positive");
        if (!(l2_penalty >= 0.0) || !std::isfinite(l2_penalty)) {
            throw DomainError("l2_penalty must be nonnegative and finite");
        }
    }
};

// Probabilistic source classifier: logistic regression with probability
// clipping so downstream logarithms stay finite. Training standardizes
// features and bakes the constants back into the stored weights, so
// prediction runs on raw features; the constants are kept for serialization.
struct SourceClassifier {
    std::vector<double> weights;
    double bias = 0.0;
    double clip_epsilon = 1e-6;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;

    std::size_t dim() const { return weights.size(); }

    void validate() const {
        for (double w : weights) {
            if (!std::isfinite(w)) throw DomainError("non-finite classifier weight");
        }
        if (!std::isfinite(bias)) throw DomainError("non-finite classifier bias");
        if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) {
            throw DomainError("clip_epsilon must lie in (0, 0.5)");
        }
    }

    // (eta0, eta1) with eta1 = clip(sigmoid(w.x + b)); the pair sums to one.
    std::array<double, 2> predict_proba(std::span<const double> x) const {
        if (x.size() != weights.size()) throw ShapeError("feature dimension mismatch in predict_proba");
        double z = bias;
        for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
        const double p1 = std::clamp(sigmoid(z), clip_epsilon, 1.0 - clip_epsilon);
        return {1.0 - p1, p1};
    }

    // hard decision at the 0.5 boundary
    int predict(std::span<const double> x) const { return predict_proba(x)[1] > 0.5 ? 1 : 0; }
};

// Mean weighted logistic loss with an L2 penalty on the weights (bias
// unpenalized):
//   (1/n) sum_j c_j [softplus(z_j) - u_j z_j] + (l2/2) |w|^2,  z_j = w.x_j + b
inline double logistic_loss(std::span<const double> w, double bias, const LabeledDataset& data,
                            std::span<const double> row_weights, double l2) {
    if (row_weights.size() != data.size()) throw ShapeError("row weight length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double z = dot(w, data.x.row(i)) + bias;
        s += row_weights[i] * (softplus(z) - static_cast<double>(data.u[i]) * z);
    }
    s /= static_cast<double>(data.size());
    double penalty = 0.0;
    for (double v : w) penalty += v * v;
    return s + 0.5 * l2 * penalty;
}

// Analytic gradient of logistic_loss with respect to (w, bias).
inline void logistic_loss_gradient(std::span<const double> w, double bias,
                                   const LabeledDataset& data, std::span<const double> row_weights,
                                   double l2, std::span<double> grad_w, double& grad_b) {
    if (row_weights.size() != data.size()) throw ShapeError("row weight length mismatch");
    if (grad_w.size() != w.size()) throw ShapeError("gradient length mismatch");
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    grad_b = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.x.row(i);
        const double z = dot(w, x) + bias;
        const double r = row_weights[i] * (sigmoid(z) - static_cast<double>(data.u[i]));
        for (std::size_t j = 0; j < x.size(); ++j) grad_w[j] += r * x[j];
        grad_b += r;
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (std::size_t j = 0; j < w.size(); ++j) grad_w[j] = grad_w[j] * inv_n + l2 * w[j];
    grad_b *= inv_n;
}

// Full-batch loss after each epoch; entry 0 is the loss before training.
struct TrainDiagnostics {
    std::vector<double> epoch_loss;
};

// Minibatch gradient descent on the weighted logistic loss, deterministic
// for a given seed. Row weights scale each sample's contribution, so unit
// weights reduce to plain empirical risk minimization.
inline SourceClassifier train_weighted(const LabeledDataset& data,
                                       std::span<const double> row_weights,
                                       const TrainConfig& cfg,
                                       TrainDiagnostics* diag = nullptr) {
    data.validate();
    cfg.validate();
    if (row_weights.size() != data.size()) throw ShapeError("row weight length mismatch");
    for (double c : row_weights) {
        if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("row weights must be nonnegative and finite");
    }

    const std::size_t n = data.size();
    const std::size_t d = data.dim();

    // standardize; constant columns pass through unscaled
    std::vector<double> mu(d, 0.0), sd(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += data.x(i, j);
        m /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = data.x(i, j) - m;
            v += c * c;
        }
        v /= static_cast<double>(n);
        mu[j] = m;
        sd[j] = v > 1e-24 ? std::sqrt(v) : 1.0;
    }
    LabeledDataset std_data;
    std_data.x = FeatureMatrix(n, d);
    std_data.u = data.u;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            std_data.x(i, j) = (data.x(i, j) - mu[j]) / sd[j];
        }
    }

    std::vector<double> w(d, 0.0);
    double b = 0.0;
    if (diag) {
        diag->epoch_loss.clear();
        diag->epoch_loss.push_back(logistic_loss(w, b, std_data, row_weights, cfg.l2_penalty));
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(d);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, n);
            std::fill(grad.begin(), grad.end(), 0.0);
            double grad_b = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                const auto x = std_data.x.row(i);
                const double z = dot(w, x) + b;
                const double r = row_weights[i] * (sigmoid(z) - static_cast<double>(data.u[i]));
                for (std::size_t j = 0; j < d; ++j) grad[j] += r * x[j];
                grad_b += r;
            }
            const double inv_m = 1.0 / static_cast<double>(end - start);
            for (std::size_t j = 0; j < d; ++j) {
                w[j] -= cfg.learning_rate * (grad[j] * inv_m + cfg.l2_penalty * w[j]);
            }
            b -= cfg.learning_rate * grad_b * inv_m;
        }
        const double loss = logistic_loss(w, b, std_data, row_weights, cfg.l2_penalty);
        if (!std::isfinite(loss)) {
            throw DivergenceError("training loss became non-finite at epoch " +
                                  std::to_string(epoch + 1) + "; try a smaller learning_rate");
        }
        if (diag) diag->epoch_loss.push_back(loss);
    }

    // bake the standardization into the returned parameters
    SourceClassifier clf;
    clf.weights.resize(d);
    clf.bias = b;
    for (std::size_t j = 0; j < d; ++j) {
        clf.weights[j] = w[j] / sd[j];
        clf.bias -= w[j] * mu[j] / sd[j];
    }
    clf.feature_mean = std::move(mu);
    clf.feature_scale = std::move(sd);
    clf.validate();
    return clf;
}

inline SourceClassifier train_classifier(const LabeledDataset& data, const TrainConfig& cfg,
                                         TrainDiagnostics* diag = nullptr) {
    const std::vector<double> unit(data.size(), 1.0);
    return train_weighted(data, unit, cfg, diag);
}

// Exact conditional classifier read off a discrete population's source
// table: eta1(x) = p(x,1)/p_X(x), then clipped like any other classifier.
class TabulatedClassifier {
public:
    TabulatedClassifier(const DiscretePopulation& pop, double clip_epsilon = 1e-6)
        : alphabet_(pop.alphabet), clip_epsilon_(clip_epsilon) {
        pop.validate();
        if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) {
            throw DomainError("clip_epsilon must lie in (0, 0.5)");
        }
        eta1_.resize(pop.size());
        for (std::size_t k = 0; k < pop.size(); ++k) {
            const double marginal = pop.source_marginal(k);
            if (!(marginal > 0.0)) {
                throw DomainError("zero source marginal at alphabet index " + std::to_string(k));
            }
            eta1_[k] = std::clamp(pop.source_pmf[k][1] / marginal, clip_epsilon,
                                  1.0 - clip_epsilon);
        }
    }

    std::array<double, 2> predict_proba(std::span<const double> x) const {
        for (std::size_t k = 0; k < alphabet_.size(); ++k) {
            const auto& a = alphabet_[k];
            if (a.size() != x.size()) continue;
            bool eq = true;
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (a[j] != x[j]) {
                    eq = false;
                    break;
                }
            }
            if (eq) return {1.0 - eta1_[k], eta1_[k]};
        }
        throw DomainError("feature point is not in the tabulated alphabet");
    }

    double clip_epsilon() const { return clip_epsilon_; }

private:
    std::vector<std::vector<double>> alphabet_;
    std::vector<double> eta1_;
    double clip_epsilon_;
};

inline TabulatedClassifier oracle_classifier(const DiscretePopulation& pop,
                                             double clip_epsilon = 1e-6) {
    return TabulatedClassifier(pop, clip_epsilon);
}

}  // namespace extra
