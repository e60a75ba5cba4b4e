#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "extra/discrete_population.hpp"
#include "extra/errors.hpp"
#include "extra/math.hpp"
#include "extra/rng.hpp"
#include "extra/types.hpp"

namespace extra {

// Generative model of a bid-opportunity stream. Features are standard
// normal (optionally quantized to equal-mass levels per coordinate), utility
// is a logistic function of the features, and the market price is lognormal
// with its log-location shifted by price_coupling when utility is 1. A
// fixed bid decides wins, so the winners' joint distribution of (x, u) is a
// selection-biased version of the full stream's.
struct MarketModel {
    std::size_t feature_dim = 1;
    std::vector<double> utility_weights;    // length feature_dim
    double utility_bias = 0.0;              // controls the base utility rate
    std::vector<double> price_loc_weights;  // length feature_dim
    double price_coupling = 0.0;            // log-price shift when u = 1
    double price_scale = 1.0;               // sigma of the log-price
    double bid = 1.0;
    std::size_t feature_levels = 0;  // 0 = continuous; k > 0 quantizes each coordinate

    void validate() const {
        if (feature_dim == 0) throw DomainError("feature_dim must be positive");
        if (utility_weights.size() != feature_dim || price_loc_weights.size() != feature_dim) {
            throw ShapeError("weight vectors must match feature_dim");
        }
        auto finite = [](std::span<const double> v) {
            for (double x : v) {
                if (!std::isfinite(x)) return false;
            }
            return true;
        };
        if (!finite(utility_weights) || !finite(price_loc_weights) ||
            !std::isfinite(utility_bias) || !std::isfinite(price_coupling)) {
            throw DomainError("non-finite market model parameter");
        }
        if (!(price_scale > 0.0) || !std::isfinite(price_scale)) {
            throw DomainError("price_scale must be positive");
        }
        if (!(bid > 0.0) || !std::isfinite(bid)) throw DomainError("bid must be positive");
        if (feature_levels == 1) throw DomainError("feature_levels must be 0 or at least 2");
    }

    double utility_prob(std::span<const double> x) const {
        return sigmoid(dot(utility_weights, x) + utility_bias);
    }

    double price_location(std::span<const double> x, int u) const {
        return dot(price_loc_weights, x) + price_coupling * static_cast<double>(u);
    }

    // P(M < bid | x, u) from the lognormal cdf
    double win_prob(std::span<const double> x, int u) const {
        return normal_cdf((std::log(bid) - price_location(x, u)) / price_scale);
    }

    bool operator==(const MarketModel&) const = default;
};

// One simulated bid opportunity.
struct AuctionRecord {
    std::vector<double> features;
    std::uint8_t utility = 0;
    double market_price = 0.0;
    bool won = false;

    bool operator==(const AuctionRecord&) const = default;
};

struct AuctionStream {
    std::vector<AuctionRecord> records;
    MarketModel model;
    std::uint64_t seed = 0;

    std::size_t size() const { return records.size(); }

    FeatureMatrix feature_matrix() const {
        FeatureMatrix m(records.size(), model.feature_dim);
        for (std::size_t i = 0; i < records.size(); ++i) {
            auto row = m.row(i);
            for (std::size_t j = 0; j < model.feature_dim; ++j) row[j] = records[i].features[j];
        }
        return m;
    }

    bool operator==(const AuctionStream&) const = default;
};

namespace detail {

// Boundaries and conditional means of K equal-mass cells of N(0,1).
struct LevelGrid {
    std::vector<double> boundaries;  // K-1 interior quantiles
    std::vector<double> midpoints;   // conditional mean within each cell
};

inline LevelGrid level_grid(std::size_t levels) {
    if (levels < 2) throw DomainError("quantization needs at least two levels");
    LevelGrid grid;
    const double k = static_cast<double>(levels);
    grid.boundaries.resize(levels - 1);
    for (std::size_t i = 1; i < levels; ++i) {
        grid.boundaries[i - 1] = normal_quantile(static_cast<double>(i) / k);
    }
    grid.midpoints.resize(levels);
    for (std::size_t c = 0; c < levels; ++c) {
        // E[Z | a < Z < b] = (pdf(a) - pdf(b)) / (1/K)
        const double pdf_lo = c == 0 ? 0.0 : normal_pdf(grid.boundaries[c - 1]);
        const double pdf_hi = c + 1 == levels ? 0.0 : normal_pdf(grid.boundaries[c]);
        grid.midpoints[c] = (pdf_lo - pdf_hi) * k;
    }
    return grid;
}

inline std::size_t level_of(double z, const LevelGrid& grid) {
    std::size_t c = 0;
    while (c < grid.boundaries.size() && z >= grid.boundaries[c]) ++c;
    return c;
}

}  // namespace detail

// Simulates n auctions. Per record: features first, then the utility draw,
// then the price draw, so the consumed random sequence is fixed.
inline AuctionStream simulate_auctions(const MarketModel& model, std::size_t n,
                                       std::uint64_t seed) {
    model.validate();
    if (n == 0) throw ShapeError("stream size must be positive");
    detail::LevelGrid grid;
    if (model.feature_levels > 0) grid = detail::level_grid(model.feature_levels);

    Rng rng(seed);
    AuctionStream stream;
    stream.model = model;
    stream.seed = seed;
    stream.records.resize(n);
    for (auto& rec : stream.records) {
        rec.features.resize(model.feature_dim);
        for (auto& f : rec.features) {
            const double z = rng.normal();
            f = model.feature_levels > 0 ? grid.midpoints[detail::level_of(z, grid)] : z;
        }
        rec.utility = rng.bernoulli(model.utility_prob(rec.features)) ? 1 : 0;
        const double log_price =
            model.price_location(rec.features, rec.utility) + model.price_scale * rng.normal();
        rec.market_price = std::exp(log_price);
        rec.won = rec.market_price < model.bid;
    }
    return stream;
}

// Source = winning records with labels; target = every record, unlabeled.
// The overload taking an explicit feature matrix supports streams whose
// features were augmented after simulation.
inline std::pair<LabeledDataset, UnlabeledDataset> split_domains(const AuctionStream& stream,
                                                                 const FeatureMatrix& features) {
    if (stream.records.empty()) throw ShapeError("auction stream is empty");
    if (features.rows != stream.size()) throw ShapeError("feature matrix does not match stream");
    std::size_t wins = 0;
    for (const auto& rec : stream.records) wins += rec.won ? 1 : 0;
    if (wins == 0) throw DomainError("no winning records; the source domain is empty");

    LabeledDataset source;
    source.x = FeatureMatrix(wins, features.cols);
    source.u.resize(wins);
    UnlabeledDataset target;
    target.x = features;

    std::size_t w = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (!stream.records[i].won) continue;
        auto dst = source.x.row(w);
        const auto src = features.row(i);
        for (std::size_t j = 0; j < features.cols; ++j) dst[j] = src[j];
        source.u[w] = stream.records[i].utility;
        ++w;
    }
    return {std::move(source), std::move(target)};
}

inline std::pair<LabeledDataset, UnlabeledDataset> split_domains(const AuctionStream& stream) {
    return split_domains(stream, stream.feature_matrix());
}

// Labels for every record. Held-out evaluation only; fitting never sees
// target labels.
inline LabeledDataset labeled_target(const AuctionStream& stream,
                                     const FeatureMatrix& features) {
    if (features.rows != stream.size()) throw ShapeError("feature matrix does not match stream");
    LabeledDataset all;
    all.x = features;
    all.u.resize(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) all.u[i] = stream.records[i].utility;
    return all;
}

inline LabeledDataset labeled_target(const AuctionStream& stream) {
    return labeled_target(stream, stream.feature_matrix());
}

// Monte-Carlo estimates of the win-conditional utility rate and of the
// pieces it decomposes into: p = pi F1(b) / ((1-pi) F0(b) + pi F1(b)).
struct WinRateReport {
    double win_conditional_utility = 0.0;  // P(U=1 | won)
    double pi = 0.0;                       // P(U=1)
    double f0_at_bid = 0.0;                // P(M < b | U=0)
    double f1_at_bid = 0.0;                // P(M < b | U=1)
    double win_rate = 0.0;
    double rhs = 0.0;  // identity right-hand side assembled from the estimates
    std::size_t n = 0;
    std::size_t win_count = 0;
    std::size_t utility_count = 0;
};

inline WinRateReport win_conditional_rate(const MarketModel& model, std::size_t mc_n,
                                          std::uint64_t seed) {
    const AuctionStream stream = simulate_auctions(model, mc_n, seed);
    std::size_t wins = 0, u1 = 0, won_u1 = 0, won_u0 = 0;
    for (const auto& rec : stream.records) {
        wins += rec.won ? 1 : 0;
        u1 += rec.utility;
        if (rec.won) (rec.utility ? won_u1 : won_u0) += 1;
    }
    if (wins == 0) throw DomainError("no wins in the Monte-Carlo stream; raise the bid or mc_n");
    if (u1 == 0 || u1 == mc_n) {
        throw DomainError("degenerate utility draw; both classes are needed to estimate F0 and F1");
    }
    WinRateReport r;
    r.n = mc_n;
    r.win_count = wins;
    r.utility_count = u1;
    const double n = static_cast<double>(mc_n);
    r.win_conditional_utility = static_cast<double>(won_u1) / static_cast<double>(wins);
    r.pi = static_cast<double>(u1) / n;
    r.f1_at_bid = static_cast<double>(won_u1) / static_cast<double>(u1);
    r.f0_at_bid = static_cast<double>(won_u0) / static_cast<double>(mc_n - u1);
    r.win_rate = static_cast<double>(wins) / n;
    const double f = (1.0 - r.pi) * r.f0_at_bid + r.pi * r.f1_at_bid;
    r.rhs = r.pi * r.f1_at_bid / f;
    return r;
}

// Appends the analytic conditional mean and standard deviation of the
// market price given x (marginalized over u) as two extra feature columns.
// Closed form from the two-component lognormal mixture.
inline FeatureMatrix market_stat_features(const MarketModel& model, const AuctionStream& stream) {
    model.validate();
    const double s2 = model.price_scale * model.price_scale;
    FeatureMatrix out(stream.size(), model.feature_dim + 2);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& rec = stream.records[i];
        auto row = out.row(i);
        for (std::size_t j = 0; j < model.feature_dim; ++j) row[j] = rec.features[j];
        const double p1 = model.utility_prob(rec.features);
        double m1 = 0.0, m2 = 0.0;  // first and second mixture moments
        for (int u = 0; u < 2; ++u) {
            const double loc = model.price_location(rec.features, u);
            const double pu = u == 1 ? p1 : 1.0 - p1;
            m1 += pu * std::exp(loc + 0.5 * s2);
            m2 += pu * std::exp(2.0 * loc + 2.0 * s2);
        }
        row[model.feature_dim] = m1;
        row[model.feature_dim + 1] = std::sqrt(std::max(m2 - m1 * m1, 0.0));
    }
    return out;
}

// Exact joint tables of (quantized x, u) for the winners (source) and the
// full stream (target). Requires quantized features so the populations are
// finite; every probability comes from the model in closed form.
inline DiscretePopulation quantized_population(const MarketModel& model) {
    model.validate();
    if (model.feature_levels < 2) {
        throw DomainError("quantized_population needs feature_levels >= 2");
    }
    double cells_est = 1.0;
    for (std::size_t j = 0; j < model.feature_dim; ++j) {
        cells_est *= static_cast<double>(model.feature_levels);
    }
    if (cells_est > 65536.0) throw DomainError("quantized feature grid is too large");

    const auto grid = detail::level_grid(model.feature_levels);
    const std::size_t cells = static_cast<std::size_t>(cells_est);
    const double cell_mass = 1.0 / cells_est;

    DiscretePopulation pop;
    pop.alphabet.resize(cells);
    pop.source_pmf.resize(cells);
    pop.target_pmf.resize(cells);

    double win_mass = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        std::vector<double> x(model.feature_dim);
        std::size_t rem = c;
        for (std::size_t j = 0; j < model.feature_dim; ++j) {
            x[j] = grid.midpoints[rem % model.feature_levels];
            rem /= model.feature_levels;
        }
        const double p1 = model.utility_prob(x);
        for (int u = 0; u < 2; ++u) {
            const double joint = cell_mass * (u == 1 ? p1 : 1.0 - p1);
            pop.target_pmf[c][u] = joint;
            pop.source_pmf[c][u] = joint * model.win_prob(x, u);
            win_mass += pop.source_pmf[c][u];
        }
        pop.alphabet[c] = std::move(x);
    }
    if (!(win_mass > 0.0)) throw DomainError("the model never wins; source population is empty");

    // normalize away accumulated rounding so validate()'s 1e-12 band holds
    double target_mass = 0.0;
    for (const auto& cell : pop.target_pmf) target_mass += cell[0] + cell[1];
    for (std::size_t c = 0; c < cells; ++c) {
        for (int u = 0; u < 2; ++u) {
            pop.source_pmf[c][u] /= win_mass;
            pop.target_pmf[c][u] /= target_mass;
        }
    }
    pop.validate();
    return pop;
}

}  // namespace extra
