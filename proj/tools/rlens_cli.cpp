#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "rlens/runner.hpp"

namespace {

rlens::RunConfig load_config(const std::string& config_path, const std::string& out_override,
                             long seed_override, const std::string& strategy_override,
                             const std::string& feedback_override) {
    rlens::RunConfig cfg = rlens::RunConfig::from_file(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
    if (!strategy_override.empty()) cfg.strategy = strategy_override;
    if (!feedback_override.empty()) {
        if (feedback_override == "true-value")
            cfg.feedback = rlens::FeedbackMode::TrueValue;
        else if (feedback_override == "proxy")
            cfg.feedback = rlens::FeedbackMode::Proxy;
        else
            throw rlens::ValidationError("--feedback must be true-value or proxy");
    }
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RL-weighted ensemble forecaster"};
    app.require_subcommand(1);

    std::string config_path, out_dir, strategy, feedback;
    long seed = -1;
    app.add_option("--config", config_path, "JSON config file")->required();
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--seed", seed, "single seed (overrides config seed list)");
    app.add_option("--strategy", strategy, "forecast strategy (overrides config)");
    app.add_option("--feedback", feedback, "test-time error feedback: true-value or proxy");

    auto* synth = app.add_subcommand("synth", "generate a synthetic series CSV");
    auto* train = app.add_subcommand("train", "fit forecasters and train the RL policy");
    auto* forecast = app.add_subcommand("forecast", "predict the test indices from artifacts");
    auto* compare = app.add_subcommand("compare", "run all strategies and write the report");

    CLI11_PARSE(app, argc, argv);

    try {
        rlens::RunConfig cfg = load_config(config_path, out_dir, seed, strategy, feedback);
        if (synth->parsed())
            rlens::run_synth(cfg);
        else if (train->parsed())
            rlens::run_train(cfg);
        else if (forecast->parsed())
            rlens::run_forecast(cfg);
        else if (compare->parsed())
            rlens::run_compare(cfg);
        return 0;
    } catch (const rlens::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const rlens::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 2;
    } catch (const rlens::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const rlens::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
