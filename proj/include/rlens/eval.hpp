#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rlens/baselines.hpp"
#include "rlens/rl.hpp"

namespace rlens {

// Eq.-(7)-style normalized mean squared error over the test samples.
double nmse(std::span<const double> predictions, std::span<const double> truth);

// Centered moving average of per-episode total rewards, edges truncated
// to the available span.
std::vector<double> reward_curve(const std::vector<EpisodeLog>& logs, int smoothing_window);

struct BandDominance {
    IndexRange band;
    int model = 0;
    std::string model_name;
    double share = 0.0;                 // dominant model's normalized weight share
    std::vector<double> shares;         // all models, summing to 1
};

// Per-band summed weight shares over the step logs; dominant model is the
// argmax with lowest-index tie-break. Bands are consecutive chunks of
// band_size logged steps.
std::vector<BandDominance> band_dominance(const std::vector<StepRecord>& steps,
                                          long band_size,
                                          const std::vector<std::string>& model_names);

struct StrategyResult {
    std::string name;
    std::vector<double> nmse_per_seed;
    double nmse_mean = 0.0, nmse_min = 0.0, nmse_max = 0.0;
    double seconds_per_step = 0.0;
    bool failed = false;
    std::string error;
};

struct EvalReport {
    std::vector<StrategyResult> strategies;
    std::vector<double> episode_rewards;          // last seed's RL run
    std::vector<double> smoothed_rewards;
    std::vector<BandDominance> bands;             // last seed's RL run, full-series pass
    std::vector<long> test_indices;
    std::vector<double> test_truth;
    std::map<std::string, std::vector<double>> test_predictions;  // strategy -> aligned preds

    const StrategyResult* find(const std::string& name) const;
};

struct CompareConfig {
    std::vector<ForecasterSpec> forecaster_specs;
    std::vector<std::string> strategies;  // from {rl, online-nn, static, uniform, single:<model>}
    std::vector<std::uint64_t> seeds;
    PolicyModel rl_template;              // hyperparameters; logits/critic reset per seed
    long rl_episodes = 100;
    double nn_learning_rate = 0.01;
    // true: frozen net maps each test column to weights; false: the final
    // training-step weight vector is reused unchanged
    bool nn_per_sample_weights = true;
    FeedbackMode feedback = FeedbackMode::TrueValue;
    long band_size = 1000;
    int smoothing_window = 5;
};

// Runs every strategy on identical per-seed panels and reports NMSE
// statistics, reward curves, and the band-dominance table.
EvalReport compare_strategies(const TimeSeries& series, const SplitPlan& plan,
                              const CompareConfig& config);

void write_report_json(const EvalReport& report, const std::string& path);
void write_report_text(const EvalReport& report, const std::string& path);
void write_reward_curve_csv(const EvalReport& report, const std::string& path);
void write_predictions_csv(const EvalReport& report, const std::string& path);

// Minimal static SVG line plot (one polyline per labeled curve).
void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<std::pair<std::string, std::vector<double>>>& curves);

}  // namespace rlens
