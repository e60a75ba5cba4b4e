// Command-line front end: simulate an auction stream into source/target
// domains, fit the tilt weights, and evaluate reweighted risk, with stable
// on-disk formats so runs are scriptable and reproducible.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "extra/classifier.hpp"
#include "extra/errors.hpp"
#include "extra/evaluation.hpp"
#include "extra/extra_fit.hpp"
#include "extra/io.hpp"
#include "extra/rtb_sim.hpp"
#include "extra/version.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::int64_t> seed;
};

extra::RunConfig load_config(const CommonArgs& args) {
    extra::RunConfig cfg = extra::load_run_config(args.config_path);
    if (args.seed) cfg.seed = static_cast<std::uint64_t>(*args.seed);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    cfg.validate();
    if (!cfg.out_dir) throw extra::SchemaError("no output directory: pass --out or set out_dir");
    fs::create_directories(*cfg.out_dir);
    return cfg;
}

std::string out_path(const extra::RunConfig& cfg, const std::string& name) {
    return (fs::path(*cfg.out_dir) / name).string();
}

int cmd_simulate(const CommonArgs& args) {
    const extra::RunConfig cfg = load_config(args);
    const extra::AuctionStream stream =
        extra::simulate_auctions(cfg.market, cfg.n_stream, cfg.seed);
    const extra::FeatureMatrix features = cfg.append_market_stats
                                              ? extra::market_stat_features(cfg.market, stream)
                                              : stream.feature_matrix();
    auto [source, target] = extra::split_domains(stream, features);

    extra::write_stream_csv(out_path(cfg, "stream.csv"), stream);
    extra::write_source_csv(out_path(cfg, "source.csv"), source);
    extra::write_target_csv(out_path(cfg, "target.csv"), target);

    // empirical stream statistics; fields that need both classes or any win
    // are omitted when undefined
    std::size_t wins = 0, u1 = 0, won_u1 = 0;
    for (const auto& rec : stream.records) {
        wins += rec.won ? 1 : 0;
        u1 += rec.utility;
        won_u1 += (rec.won && rec.utility) ? 1 : 0;
    }
    const double n = static_cast<double>(stream.size());
    extra::json truth{{"schema_version", extra::RunConfig::kSchemaVersion},
                      {"version", extra::kVersion},
                      {"config", cfg.echo()},
                      {"n_stream", stream.size()},
                      {"win_rate", static_cast<double>(wins) / n},
                      {"pi", static_cast<double>(u1) / n}};
    if (u1 > 0) truth["f1_at_bid"] = static_cast<double>(won_u1) / static_cast<double>(u1);
    if (u1 < stream.size()) {
        truth["f0_at_bid"] =
            static_cast<double>(wins - won_u1) / static_cast<double>(stream.size() - u1);
    }
    if (wins > 0) {
        truth["win_conditional_utility"] =
            static_cast<double>(won_u1) / static_cast<double>(wins);
    }
    extra::write_json_file(out_path(cfg, "truth.json"), truth);

    std::cout << "simulate: wrote " << stream.size() << " records (" << wins << " won) to "
              << *cfg.out_dir << "\n";
    return 0;
}

int cmd_fit(const CommonArgs& args, const std::string& source_path,
            const std::string& target_path, const std::string& classifier_path) {
    const extra::RunConfig cfg = load_config(args);
    const extra::LabeledDataset source = extra::read_source_csv(source_path);
    const extra::UnlabeledDataset target = extra::read_target_csv(target_path);
    if (source.dim() != target.dim()) {
        throw extra::ShapeError("source and target feature dimensions disagree");
    }

    extra::SourceClassifier clf;
    if (!classifier_path.empty()) {
        clf = extra::read_classifier_json(classifier_path);
        if (clf.dim() != source.dim()) {
            throw extra::ShapeError("classifier dimension does not match the data");
        }
    } else {
        clf = extra::train_classifier(source, cfg.train);
        extra::write_classifier_json(out_path(cfg, "classifier.json"), clf, cfg.echo());
    }

    const extra::SufficientStatistic spec = cfg.statistic.bind(source.dim());
    extra::FitResult result;
    try {
        result = extra::fit_extra(source, target, clf, spec, cfg.extra);
    } catch (const extra::FitDivergence& e) {
        extra::write_trace_csv(out_path(cfg, "trace.csv"), e.trace);
        throw;
    }

    extra::write_params_json(out_path(cfg, "params.json"), result, cfg.echo());
    extra::write_weights_csv(out_path(cfg, "weights.csv"),
                             extra::weight_table(result, spec, source));
    extra::write_trace_csv(out_path(cfg, "trace.csv"), result.trace);

    std::cout << "fit: " << (result.trace.converged ? "converged" : "max steps reached") << " after "
              << result.trace.steps_taken << " steps, final normalizer "
              << result.final_normalizer << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& source_path,
                 const std::string& weights_path, const std::string& classifier_path,
                 const std::string& params_path, const std::string& labeled_target_path) {
    const extra::RunConfig cfg = load_config(args);
    const extra::LabeledDataset source = extra::read_source_csv(source_path);
    const std::vector<double> weights = extra::read_weights_csv(weights_path);
    if (weights.size() != source.size()) {
        throw extra::ShapeError("weights.csv rows do not align with source.csv");
    }
    const extra::SourceClassifier clf = extra::read_classifier_json(classifier_path);
    if (clf.dim() != source.dim()) {
        throw extra::ShapeError("classifier dimension does not match the data");
    }

    std::optional<extra::LabeledDataset> holdout;
    if (!labeled_target_path.empty()) holdout = extra::read_source_csv(labeled_target_path);

    const extra::RiskReport risk = extra::evaluate_risk(
        clf, source, weights, cfg.loss, holdout ? &*holdout : nullptr);

    extra::json report{{"schema_version", extra::RunConfig::kSchemaVersion},
                       {"version", extra::kVersion},
                       {"config", cfg.echo()},
                       {"loss", extra::loss_name(risk.loss)},
                       {"unweighted_source_risk", risk.unweighted_source_risk},
                       {"reweighted_risk", risk.reweighted_risk},
                       {"effective_sample_size", extra::effective_sample_size(weights)},
                       {"n_source", source.size()}};
    if (risk.true_target_risk) report["true_target_risk"] = *risk.true_target_risk;
    if (!params_path.empty()) {
        const extra::TiltParams params = extra::read_params_json(params_path);
        report["params"] = extra::json{{"theta0", params.theta0},
                                       {"alpha0", params.alpha0},
                                       {"theta1", params.theta1},
                                       {"alpha1", params.alpha1}};
    }
    extra::write_json_file(out_path(cfg, "report.json"), report);
    extra::write_histogram_csv(out_path(cfg, "hist.csv"),
                               extra::weight_histogram(weights, 50));

    std::cout << "evaluate: reweighted risk " << risk.reweighted_risk << " (unweighted "
              << risk.unweighted_source_risk << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"exponential tilt importance weighting for selection-biased auction data"};
    app.set_version_flag("--version", extra::kVersion);
    app.require_subcommand(1);

    CommonArgs common;
    std::string source_path, target_path, classifier_path, params_path, weights_path,
        labeled_target_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "run configuration JSON")->required();
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "override the config seed");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate an auction stream and split domains");
    add_common(sim);

    CLI::App* fit = app.add_subcommand("fit", "fit tilt weights from source/target CSVs");
    add_common(fit);
    fit->add_option("--source", source_path, "source.csv (labeled winners)")->required();
    fit->add_option("--target", target_path, "target.csv (all opportunities)")->required();
    fit->add_option("--classifier", classifier_path,
                    "classifier.json; trained from the source when absent");

    CLI::App* eval = app.add_subcommand("evaluate", "report reweighted source risk");
    add_common(eval);
    eval->add_option("--source", source_path, "source.csv")->required();
    eval->add_option("--weights", weights_path, "weights.csv from fit")->required();
    eval->add_option("--classifier", classifier_path, "classifier.json")->required();
    eval->add_option("--params", params_path, "params.json to echo into the report");
    eval->add_option("--labeled-target", labeled_target_path,
                     "labeled target CSV for held-out true risk");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(common);
        if (fit->parsed()) return cmd_fit(common, source_path, target_path, classifier_path);
        if (eval->parsed()) {
            return cmd_evaluate(common, source_path, weights_path, classifier_path, params_path,
                                labeled_target_path);
        }
    } catch (const extra::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const extra::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const extra::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
