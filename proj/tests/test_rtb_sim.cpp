#include <cmath>
#include <vector>

#include "doctest.h"

#include "extra/math.hpp"
#include "extra/rtb_sim.hpp"

using namespace extra;

namespace {

MarketModel flat_model(std::size_t d = 1) {
    MarketModel m;
    m.feature_dim = d;
    m.utility_weights.assign(d, 0.0);
    m.price_loc_weights.assign(d, 0.0);
    return m;
}

// pi = 0.1, F0(b) = 0.4, F1(b) = 0.8: bid at the 0.4 quantile of the u=0
// price and couple the u=1 price down so its cdf at the bid is 0.8
MarketModel eq3_model() {
    MarketModel m = flat_model();
    m.utility_bias = logit(0.1);
    m.price_scale = 1.0;
    const double log_bid = normal_quantile(0.4);
    m.bid = std::exp(log_bid);
    m.price_coupling = log_bid - normal_quantile(0.8);
    return m;
}

}  // namespace

TEST_CASE("simulate: win rate matches the lognormal cdf when price ignores features") {
    MarketModel m = flat_model();
    m.price_scale = 0.8;
    m.bid = 1.5;
    const std::size_t n = 100000;
    const auto stream = simulate_auctions(m, n, 3);
    std::size_t wins = 0;
    for (const auto& rec : stream.records) wins += rec.won ? 1 : 0;
    const double expected = normal_cdf(std::log(m.bid) / m.price_scale);
    const double se = std::sqrt(expected * (1.0 - expected) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(wins) / static_cast<double>(n) - expected) < 3.0 * se);
}

TEST_CASE("simulate: an enormous bid wins everything") {
    MarketModel m = flat_model();
    m.bid = 1e12;
    const auto stream = simulate_auctions(m, 5000, 4);
    for (const auto& rec : stream.records) CHECK(rec.won);
}

TEST_CASE("simulate: utility base rate follows the logistic intercept") {
    MarketModel m = flat_model();
    m.utility_bias = -3.0;
    const std::size_t n = 100000;
    const auto stream = simulate_auctions(m, n, 5);
    std::size_t u1 = 0;
    for (const auto& rec : stream.records) u1 += rec.utility;
    const double expected = sigmoid(-3.0);
    const double se = std::sqrt(expected * (1.0 - expected) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(u1) / static_cast<double>(n) - expected) < 3.0 * se);
}

TEST_CASE("simulate: won holds exactly when the price is below the bid") {
    MarketModel m = flat_model(2);
    m.utility_weights = {0.5, -0.5};
    m.price_loc_weights = {0.3, 0.1};
    m.price_coupling = 0.7;
    m.bid = 1.2;
    const auto stream = simulate_auctions(m, 20000, 6);
    for (const auto& rec : stream.records) {
        CHECK(rec.won == (rec.market_price < m.bid));
    }
}

TEST_CASE("simulate: identical seeds reproduce the stream") {
    MarketModel m = flat_model(3);
    m.utility_weights = {1.0, 0.0, -1.0};
    m.price_loc_weights = {0.2, 0.2, 0.2};
    m.price_coupling = 0.5;
    CHECK(simulate_auctions(m, 10000, 7) == simulate_auctions(m, 10000, 7));
}

TEST_CASE("simulate: no coupling means no selection bias") {
    MarketModel m = flat_model(1);
    m.utility_weights = {0.8};
    m.price_loc_weights = {0.0};
    m.price_coupling = 0.0;
    m.bid = 1.0;
    const std::size_t n = 200000;
    const auto stream = simulate_auctions(m, n, 8);

    double u_all = 0.0, x_all = 0.0;
    double u_win = 0.0, x_win = 0.0;
    std::size_t wins = 0;
    for (const auto& rec : stream.records) {
        u_all += rec.utility;
        x_all += rec.features[0];
        if (rec.won) {
            u_win += rec.utility;
            x_win += rec.features[0];
            ++wins;
        }
    }
    u_all /= static_cast<double>(n);
    x_all /= static_cast<double>(n);
    u_win /= static_cast<double>(wins);
    x_win /= static_cast<double>(wins);

    const double se_u = std::sqrt(0.25 / static_cast<double>(wins));
    const double se_x = 1.0 / std::sqrt(static_cast<double>(wins));
    CHECK(std::abs(u_win - u_all) < 3.0 * se_u);
    CHECK(std::abs(x_win - x_all) < 3.0 * se_x);
}

TEST_CASE("simulate: positive coupling depresses the winners' utility rate") {
    MarketModel m = flat_model(1);
    m.utility_weights = {0.0};
    m.utility_bias = 0.0;  // pi = 0.5 for a clear signal
    m.price_coupling = 1.0;
    m.bid = 1.0;
    const std::size_t n = 200000;
    const auto stream = simulate_auctions(m, n, 9);
    double u_all = 0.0, u_win = 0.0;
    std::size_t wins = 0;
    for (const auto& rec : stream.records) {
        u_all += rec.utility;
        if (rec.won) {
            u_win += rec.utility;
            ++wins;
        }
    }
    CHECK(u_win / static_cast<double>(wins) < u_all / static_cast<double>(n) - 0.05);
}

TEST_CASE("split_domains: all-won streams mirror the target") {
    MarketModel m = flat_model();
    m.bid = 1e12;
    const auto stream = simulate_auctions(m, 1000, 10);
    const auto [source, target] = split_domains(stream);
    CHECK(source.size() == 1000);
    CHECK(target.size() == 1000);
    CHECK(source.x == target.x);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        CHECK(source.u[i] == stream.records[i].utility);
    }
}

TEST_CASE("split_domains: counting wins in a hand-built stream") {
    AuctionStream stream;
    stream.model = flat_model();
    for (int i = 0; i < 10; ++i) {
        AuctionRecord rec;
        rec.features = {static_cast<double>(i)};
        rec.utility = static_cast<std::uint8_t>(i % 2);
        rec.won = i < 4;
        rec.market_price = rec.won ? 0.5 : 2.0;
        stream.records.push_back(rec);
    }
    const auto [source, target] = split_domains(stream);
    CHECK(source.size() == 4);
    CHECK(target.size() == 10);
}

TEST_CASE("split_domains: zero wins is an error") {
    AuctionStream stream;
    stream.model = flat_model();
    AuctionRecord rec;
    rec.features = {0.0};
    rec.market_price = 2.0;
    rec.won = false;
    stream.records = {rec, rec};
    CHECK_THROWS_AS(split_domains(stream), DomainError);
}

TEST_CASE("win_conditional_rate: the tuned instance hits pi F1 / F") {
    const MarketModel m = eq3_model();
    const auto r = win_conditional_rate(m, 200000, 11);

    // the assembled right-hand side is the same counts rearranged
    CHECK(std::abs(r.rhs - r.win_conditional_utility) < 1e-12);

    const double truth = 0.1 * 0.8 / (0.9 * 0.4 + 0.1 * 0.8);  // 2/11
    const double se = std::sqrt(truth * (1.0 - truth) / static_cast<double>(r.win_count));
    CHECK(std::abs(r.win_conditional_utility - truth) < 3.0 * se);

    // the tuned quantities themselves land where they were aimed
    CHECK(std::abs(r.pi - 0.1) < 0.005);
    CHECK(std::abs(r.f0_at_bid - 0.4) < 0.005);
    CHECK(std::abs(r.f1_at_bid - 0.8) < 0.01);
}

TEST_CASE("win_conditional_rate: p equals pi without coupling") {
    MarketModel m = eq3_model();
    m.price_coupling = 0.0;
    const auto r = win_conditional_rate(m, 200000, 12);
    const double se =
        std::sqrt(r.win_conditional_utility * (1.0 - r.win_conditional_utility) /
                  static_cast<double>(r.win_count));
    CHECK(std::abs(r.win_conditional_utility - 0.1) < 3.0 * se);
}

TEST_CASE("win_conditional_rate: p converges to pi as the bid explodes") {
    MarketModel m = eq3_model();
    m.bid = 1e12;
    const auto r = win_conditional_rate(m, 200000, 13);
    CHECK(r.win_rate == 1.0);
    CHECK(r.win_conditional_utility == r.pi);  // every record is won
    const double se = std::sqrt(0.1 * 0.9 / static_cast<double>(r.n));
    CHECK(std::abs(r.win_conditional_utility - 0.1) < 3.0 * se);
}

TEST_CASE("market_stat_features: flat price model appends constants") {
    MarketModel m = flat_model();
    m.price_scale = 1.0;
    const auto stream = simulate_auctions(m, 500, 14);
    const auto features = market_stat_features(m, stream);
    REQUIRE(features.cols == 3);
    const double mu = std::exp(0.5);
    const double sd = std::sqrt(std::exp(2.0) - std::exp(1.0));
    for (std::size_t i = 0; i < features.rows; ++i) {
        CHECK(features(i, 1) == doctest::Approx(mu).epsilon(1e-12));
        CHECK(features(i, 2) == doctest::Approx(sd).epsilon(1e-12));
    }
}

TEST_CASE("market_stat_features: identical rows get identical columns") {
    AuctionStream stream;
    stream.model = flat_model();
    stream.model.utility_weights = {1.0};
    stream.model.price_loc_weights = {0.4};
    stream.model.price_coupling = 0.6;
    AuctionRecord a;
    a.features = {0.75};
    a.utility = 1;
    a.market_price = 1.0;
    AuctionRecord b = a;
    b.utility = 0;  // the analytic stats depend on x only
    stream.records = {a, b};
    const auto features = market_stat_features(stream.model, stream);
    CHECK(features(0, 1) == features(1, 1));
    CHECK(features(0, 2) == features(1, 2));
}

TEST_CASE("market_stat_features: coupling makes the mean grow with utility probability") {
    MarketModel m = flat_model();
    m.utility_weights = {2.0};  // higher x, higher utility probability
    m.price_coupling = 0.8;
    AuctionStream stream;
    stream.model = m;
    AuctionRecord lo, hi;
    lo.features = {-1.0};
    hi.features = {1.0};
    stream.records = {lo, hi};
    const auto features = market_stat_features(m, stream);
    CHECK(features(1, 1) > features(0, 1));
}

TEST_CASE("quantized features take the cell-mean values with equal mass") {
    MarketModel m = flat_model();
    m.feature_levels = 4;
    const std::size_t n = 100000;
    const auto stream = simulate_auctions(m, n, 15);
    const auto grid = detail::level_grid(4);

    std::vector<std::size_t> counts(4, 0);
    for (const auto& rec : stream.records) {
        bool found = false;
        for (std::size_t c = 0; c < 4; ++c) {
            if (rec.features[0] == grid.midpoints[c]) {
                ++counts[c];
                found = true;
                break;
            }
        }
        CHECK(found);
    }
    for (const auto c : counts) {
        CHECK(std::abs(static_cast<double>(c) / static_cast<double>(n) - 0.25) < 0.01);
    }
    // symmetric grid, zero mean
    CHECK(grid.midpoints[0] == doctest::Approx(-grid.midpoints[3]).epsilon(1e-9));
    CHECK(grid.midpoints[1] == doctest::Approx(-grid.midpoints[2]).epsilon(1e-9));
}

TEST_CASE("quantized_population matches simulated frequencies") {
    MarketModel m = flat_model();
    m.feature_levels = 4;
    m.utility_weights = {1.2};
    m.utility_bias = -1.0;
    m.price_loc_weights = {0.3};
    m.price_coupling = 0.9;
    m.price_scale = 0.7;
    m.bid = 1.1;

    const auto pop = quantized_population(m);
    REQUIRE(pop.size() == 4);

    const std::size_t n = 200000;
    const auto stream = simulate_auctions(m, n, 16);
    std::vector<std::array<double, 2>> target_freq(4, {0.0, 0.0});
    std::vector<std::array<double, 2>> source_freq(4, {0.0, 0.0});
    std::size_t wins = 0;
    for (const auto& rec : stream.records) wins += rec.won ? 1 : 0;
    for (const auto& rec : stream.records) {
        const std::size_t k = pop.find(rec.features);
        target_freq[k][rec.utility] += 1.0 / static_cast<double>(n);
        if (rec.won) source_freq[k][rec.utility] += 1.0 / static_cast<double>(wins);
    }
    for (std::size_t k = 0; k < 4; ++k) {
        for (int u = 0; u < 2; ++u) {
            CHECK(std::abs(target_freq[k][u] - pop.target_pmf[k][u]) < 0.01);
            CHECK(std::abs(source_freq[k][u] - pop.source_pmf[k][u]) < 0.01);
        }
    }
}
