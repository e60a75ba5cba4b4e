#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "extra/classifier.hpp"
#include "extra/discrete_population.hpp"
#include "extra/errors.hpp"
#include "extra/evaluation.hpp"
#include "extra/extra_fit.hpp"
#include "extra/rtb_sim.hpp"
#include "extra/sufficient_statistic.hpp"
#include "extra/tilt.hpp"
#include "extra/types.hpp"
#include "extra/version.hpp"

namespace extra {

// Doubles are serialized with 17 significant digits so CSV round-trips
// reproduce them exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace csv {

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& field, const std::string& file, std::size_t line,
                           const std::string& column) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw SchemaError(file + ":" + std::to_string(line) + ": column '" + column +
                          "' is not a number: '" + field + "'");
    }
    return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path + ": cannot open file");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    if (lines.empty()) throw SchemaError(path + ": file is empty");
    return lines;
}

inline std::string feature_header(std::size_t d) {
    std::string h;
    for (std::size_t j = 0; j < d; ++j) {
        if (j > 0) h += ',';
        h += "f" + std::to_string(j);
    }
    return h;
}

// checks that fields[0..d) are exactly f0..f{d-1}, then the named extras
inline std::size_t check_header(const std::vector<std::string>& fields,
                                const std::vector<std::string>& extras,
                                const std::string& path) {
    if (fields.size() < extras.size() + 1) {
        if (!extras.empty()) {
            throw SchemaError(path + ":1: missing column '" + extras.back() + "'");
        }
        throw SchemaError(path + ":1: header has too few columns");
    }
    const std::size_t d = fields.size() - extras.size();
    for (std::size_t j = 0; j < d; ++j) {
        if (fields[j] != "f" + std::to_string(j)) {
            throw SchemaError(path + ":1: expected column 'f" + std::to_string(j) + "', found '" +
                              fields[j] + "'");
        }
    }
    for (std::size_t e = 0; e < extras.size(); ++e) {
        if (fields[d + e] != extras[e]) {
            throw SchemaError(path + ":1: missing column '" + extras[e] + "' (found '" +
                              fields[d + e] + "')");
        }
    }
    return d;
}

}  // namespace csv

// ---- CSV writers/readers (schemas are part of the interface) ----

// source.csv: f0..f{d-1},u
inline void write_source_csv(const std::string& path, const LabeledDataset& data) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << csv::feature_header(data.dim()) << ",u\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dim(); ++j) out << format_double(data.x(i, j)) << ',';
        out << static_cast<int>(data.u[i]) << '\n';
    }
}

inline LabeledDataset read_source_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    const auto header = csv::split(lines[0]);
    const std::size_t d = csv::check_header(header, {"u"}, path);
    LabeledDataset data;
    data.x = FeatureMatrix(lines.size() - 1, d);
    data.u.resize(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = csv::split(lines[i]);
        if (fields.size() != d + 1) {
            throw SchemaError(path + ":" + std::to_string(i + 1) + ": expected " +
                              std::to_string(d + 1) + " columns, found " +
                              std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < d; ++j) {
            data.x(i - 1, j) = csv::parse_double(fields[j], path, i + 1, "f" + std::to_string(j));
        }
        if (fields[d] == "0") {
            data.u[i - 1] = 0;
        } else if (fields[d] == "1") {
            data.u[i - 1] = 1;
        } else {
            throw SchemaError(path + ":" + std::to_string(i + 1) +
                              ": column 'u' must be 0 or 1, found '" + fields[d] + "'");
        }
    }
    data.validate();
    return data;
}

// target.csv: f0..f{d-1}
inline void write_target_csv(const std::string& path, const UnlabeledDataset& data) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << csv::feature_header(data.dim()) << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dim(); ++j) {
            if (j > 0) out << ',';
            out << format_double(data.x(i, j));
        }
        out << '\n';
    }
}

inline UnlabeledDataset read_target_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    const auto header = csv::split(lines[0]);
    const std::size_t d = csv::check_header(header, {}, path);
    UnlabeledDataset data;
    data.x = FeatureMatrix(lines.size() - 1, d);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = csv::split(lines[i]);
        if (fields.size() != d) {
            throw SchemaError(path + ":" + std::to_string(i + 1) + ": expected " +
                              std::to_string(d) + " columns, found " +
                              std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < d; ++j) {
            data.x(i - 1, j) = csv::parse_double(fields[j], path, i + 1, "f" + std::to_string(j));
        }
    }
    data.validate();
    return data;
}

// weights.csv: row,weight
inline void write_weights_csv(const std::string& path, std::span<const double> weights) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << "row,weight\n";
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out << i << ',' << format_double(weights[i]) << '\n';
    }
}

inline std::vector<double> read_weights_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (csv::split(lines[0]) != std::vector<std::string>{"row", "weight"}) {
        throw SchemaError(path + ":1: expected header 'row,weight'");
    }
    std::vector<double> weights(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = csv::split(lines[i]);
        if (fields.size() != 2) {
            throw SchemaError(path + ":" + std::to_string(i + 1) + ": expected 2 columns");
        }
        if (fields[0] != std::to_string(i - 1)) {
            throw SchemaError(path + ":" + std::to_string(i + 1) + ": column 'row' must equal " +
                              std::to_string(i - 1));
        }
        weights[i - 1] = csv::parse_double(fields[1], path, i + 1, "weight");
    }
    return weights;
}

// stream.csv: f0..f{d-1},u,m,won
inline void write_stream_csv(const std::string& path, const AuctionStream& stream) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << csv::feature_header(stream.model.feature_dim) << ",u,m,won\n";
    for (const auto& rec : stream.records) {
        for (const double f : rec.features) out << format_double(f) << ',';
        out << static_cast<int>(rec.utility) << ',' << format_double(rec.market_price) << ','
            << (rec.won ? 1 : 0) << '\n';
    }
}

// trace.csv: step,objective (full-data objective at every 100-step check)
inline void write_trace_csv(const std::string& path, const FitTrace& trace) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << "step,objective\n";
    for (std::size_t i = 0; i < trace.check_step.size(); ++i) {
        out << trace.check_step[i] << ',' << format_double(trace.check_objective[i]) << '\n';
    }
}

// hist.csv: bin_left,bin_right,count
inline void write_histogram_csv(const std::string& path, std::span<const HistogramBin> bins) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << "bin_left,bin_right,count\n";
    for (const auto& b : bins) {
        out << format_double(b.left) << ',' << format_double(b.right) << ',' << b.count << '\n';
    }
}

// ---- JSON ----

using json = nlohmann::json;

// Declarative statistic description from a config file; bound to a concrete
// input dimension once the data dimension is known.
struct StatisticSpec {
    std::string kind = "identity";  // identity | subset | affine
    std::vector<std::size_t> indices;
    std::vector<std::vector<double>> matrix;  // p rows of length d
    std::vector<double> offset;

    SufficientStatistic bind(std::size_t input_dim) const {
        if (kind == "identity") return SufficientStatistic::identity(input_dim);
        if (kind == "subset") return SufficientStatistic::subset(input_dim, indices);
        if (kind == "affine") {
            if (matrix.empty()) throw SchemaError("affine statistic needs a matrix");
            FeatureMatrix a(matrix.size(), matrix.front().size());
            for (std::size_t i = 0; i < matrix.size(); ++i) {
                if (matrix[i].size() != a.cols) {
                    throw SchemaError("affine statistic matrix rows differ in length");
                }
                for (std::size_t j = 0; j < a.cols; ++j) a(i, j) = matrix[i][j];
            }
            if (a.cols != input_dim) {
                throw ShapeError("affine statistic matrix does not match the data dimension");
            }
            return SufficientStatistic::affine(std::move(a), offset);
        }
        throw SchemaError("unknown statistic kind '" + kind + "'");
    }

    json to_json() const {
        json j{{"kind", kind}};
        if (kind == "subset") j["indices"] = indices;
        if (kind == "affine") {
            j["matrix"] = matrix;
            j["offset"] = offset;
        }
        return j;
    }

    static StatisticSpec from_json(const json& j) {
        StatisticSpec s;
        s.kind = j.value("kind", "identity");
        s.indices = j.value("indices", std::vector<std::size_t>{});
        s.matrix = j.value("matrix", std::vector<std::vector<double>>{});
        s.offset = j.value("offset", std::vector<double>{});
        return s;
    }
};

inline json to_json(const MarketModel& m) {
    return json{{"feature_dim", m.feature_dim},
                {"utility_weights", m.utility_weights},
                {"utility_bias", m.utility_bias},
                {"price_loc_weights", m.price_loc_weights},
                {"price_coupling", m.price_coupling},
                {"price_scale", m.price_scale},
                {"bid", m.bid},
                {"feature_levels", m.feature_levels}};
}

inline MarketModel market_from_json(const json& j) {
    MarketModel m;
    m.feature_dim = j.value("feature_dim", std::size_t{1});
    m.utility_weights = j.value("utility_weights", std::vector<double>(m.feature_dim, 0.0));
    m.utility_bias = j.value("utility_bias", 0.0);
    m.price_loc_weights = j.value("price_loc_weights", std::vector<double>(m.feature_dim, 0.0));
    m.price_coupling = j.value("price_coupling", 0.0);
    m.price_scale = j.value("price_scale", 1.0);
    m.bid = j.value("bid", 1.0);
    m.feature_levels = j.value("feature_levels", std::size_t{0});
    return m;
}

inline json to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"l2_penalty", c.l2_penalty},
                {"seed", c.seed}};
}

inline TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.l2_penalty = j.value("l2_penalty", c.l2_penalty);
    c.seed = j.value("seed", c.seed);
    return c;
}

inline json to_json(const ExtraConfig& c) {
    return json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                {"lambda", c.lambda},               {"max_steps", c.max_steps},
                {"tol", c.tol},                     {"patience", c.patience},
                {"seed", c.seed}};
}

inline ExtraConfig extra_from_json(const json& j) {
    ExtraConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda = j.value("lambda", c.lambda);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.tol = j.value("tol", c.tol);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    return c;
}

// One document driving a reproducible run: simulator, classifier training,
// tilt fitting, statistic choice, sample sizes and the master seed.
struct RunConfig {
    static constexpr int kSchemaVersion = 1;

    std::uint64_t seed = 0;
    MarketModel market;
    TrainConfig train;
    ExtraConfig extra;
    StatisticSpec statistic;
    std::size_t n_stream = 10000;
    std::size_t n_oracle = 10000;
    bool append_market_stats = false;
    Loss loss = Loss::zero_one;
    std::optional<std::string> out_dir;

    void validate() const {
        market.validate();
        train.validate();
        extra.validate();
        if (n_stream == 0) throw DomainError("n_stream must be positive");
        if (n_oracle == 0) throw DomainError("n_oracle must be positive");
        // bind against the effective data dimension to surface bad indices early
        const std::size_t d = market.feature_dim + (append_market_stats ? 2 : 0);
        (void)statistic.bind(d);
    }

    std::size_t data_dim() const { return market.feature_dim + (append_market_stats ? 2 : 0); }

    // Resolved semantic configuration; excludes the output directory, which
    // is an I/O disposition rather than a run parameter.
    json echo() const {
        return json{{"schema_version", kSchemaVersion},
                    {"seed", seed},
                    {"market", to_json(market)},
                    {"train", to_json(train)},
                    {"extra", to_json(extra)},
                    {"statistic", statistic.to_json()},
                    {"n_stream", n_stream},
                    {"n_oracle", n_oracle},
                    {"append_market_stats", append_market_stats},
                    {"loss", loss_name(loss)}};
    }
};

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    try {
        c.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("market")) c.market = market_from_json(j.at("market"));
        if (j.contains("train")) c.train = train_from_json(j.at("train"));
        if (j.contains("extra")) c.extra = extra_from_json(j.at("extra"));
        if (j.contains("statistic")) c.statistic = StatisticSpec::from_json(j.at("statistic"));
        c.n_stream = j.value("n_stream", c.n_stream);
        c.n_oracle = j.value("n_oracle", c.n_oracle);
        c.append_market_stats = j.value("append_market_stats", false);
        const std::string loss = j.value("loss", "zero_one");
        if (loss == "zero_one") {
            c.loss = Loss::zero_one;
        } else if (loss == "log_loss") {
            c.loss = Loss::log_loss;
        } else {
            throw SchemaError("config: unknown loss '" + loss + "'");
        }
        if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path + ": cannot open file");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw SchemaError(path + ": cannot open for writing");
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path + ": cannot open file");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return j;
}

// classifier.json
inline void write_classifier_json(const std::string& path, const SourceClassifier& clf,
                                  const json& config_echo) {
    write_json_file(path, json{{"schema_version", RunConfig::kSchemaVersion},
                               {"version", kVersion},
                               {"config", config_echo},
                               {"weights", clf.weights},
                               {"bias", clf.bias},
                               {"clip_epsilon", clf.clip_epsilon},
                               {"standardization",
                                json{{"mean", clf.feature_mean}, {"scale", clf.feature_scale}}}});
}

inline SourceClassifier read_classifier_json(const std::string& path) {
    const json j = read_json_file(path);
    SourceClassifier clf;
    try {
        clf.weights = j.at("weights").get<std::vector<double>>();
        clf.bias = j.at("bias").get<double>();
        clf.clip_epsilon = j.value("clip_epsilon", 1e-6);
        if (j.contains("standardization")) {
            clf.feature_mean = j["standardization"].value("mean", std::vector<double>{});
            clf.feature_scale = j["standardization"].value("scale", std::vector<double>{});
        }
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    clf.validate();
    return clf;
}

// params.json
inline void write_params_json(const std::string& path, const FitResult& result,
                              const json& config_echo) {
    const auto& t = result.trace;
    write_json_file(
        path,
        json{{"schema_version", RunConfig::kSchemaVersion},
             {"version", kVersion},
             {"config", config_echo},
             {"theta0", result.params.theta0},
             {"alpha0", result.params.alpha0},
             {"theta1", result.params.theta1},
             {"alpha1", result.params.alpha1},
             {"normalized", result.params.normalized},
             {"converged", t.converged},
             {"steps", t.steps_taken},
             {"final_normalizer", result.final_normalizer},
             {"trace_summary",
              json{{"checks", t.check_step.size()},
                   {"initial_objective", t.check_objective.empty() ? 0.0 : t.check_objective.front()},
                   {"final_objective", t.check_objective.empty() ? 0.0 : t.check_objective.back()}}}});
}

inline TiltParams read_params_json(const std::string& path) {
    const json j = read_json_file(path);
    TiltParams p;
    try {
        p.theta0 = j.at("theta0").get<std::vector<double>>();
        p.alpha0 = j.at("alpha0").get<double>();
        p.theta1 = j.at("theta1").get<std::vector<double>>();
        p.alpha1 = j.at("alpha1").get<double>();
        p.normalized = j.value("normalized", true);
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    p.validate();
    return p;
}

// population.json
inline void write_population_json(const std::string& path, const DiscretePopulation& pop) {
    json src = json::array(), tgt = json::array();
    for (std::size_t k = 0; k < pop.size(); ++k) {
        src.push_back(std::vector<double>{pop.source_pmf[k][0], pop.source_pmf[k][1]});
        tgt.push_back(std::vector<double>{pop.target_pmf[k][0], pop.target_pmf[k][1]});
    }
    write_json_file(path, json{{"schema_version", RunConfig::kSchemaVersion},
                               {"version", kVersion},
                               {"alphabet", pop.alphabet},
                               {"source_pmf", src},
                               {"target_pmf", tgt}});
}

inline DiscretePopulation read_population_json(const std::string& path) {
    const json j = read_json_file(path);
    DiscretePopulation pop;
    try {
        pop.alphabet = j.at("alphabet").get<std::vector<std::vector<double>>>();
        const auto src = j.at("source_pmf").get<std::vector<std::vector<double>>>();
        const auto tgt = j.at("target_pmf").get<std::vector<std::vector<double>>>();
        if (src.size() != pop.alphabet.size() || tgt.size() != pop.alphabet.size()) {
            throw SchemaError(path + ": pmf tables must align with the alphabet");
        }
        for (std::size_t k = 0; k < src.size(); ++k) {
            if (src[k].size() != 2 || tgt[k].size() != 2) {
                throw SchemaError(path + ": pmf rows must have two entries");
            }
            pop.source_pmf.push_back({src[k][0], src[k][1]});
            pop.target_pmf.push_back({tgt[k][0], tgt[k][1]});
        }
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    pop.validate();
    return pop;
}

}  // namespace extra
