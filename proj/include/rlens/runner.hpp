#pragma once

#include <string>
#include <vector>

#include "rlens/eval.hpp"

namespace rlens {

// Fully validated run configuration; every field is checked against the
// owning module's preconditions before any work starts and unknown JSON
// keys are rejected.
struct RunConfig {
    // data source: exactly one of csv_path / synth_segments
    std::string csv_path;
    MissingPolicy missing_policy = MissingPolicy::EmptyCell;
    std::string sentinel = "NA";
    std::vector<SegmentSpec> synth_segments;
    std::uint64_t synth_seed = 0;
    bool cats_layout = false;  // annotate the 5 CATS blocks on synthetic data

    enum class SplitMode { Cats, Ratio } split_mode = SplitMode::Ratio;
    double train_frac = 0.8;
    int split_episodes = 5;

    std::vector<ForecasterSpec> forecasters;

    int rl_buckets = 10;
    double rl_gamma = 0.9;
    double rl_actor_lr = 0.05;
    double rl_critic_lr = 0.1;
    double rl_sigma0 = 0.5;
    double rl_sigma_decay = 0.97;
    long rl_episodes = 100;

    double nn_learning_rate = 0.01;
    bool nn_per_sample_weights = true;

    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "out";
    FeedbackMode feedback = FeedbackMode::TrueValue;
    std::string strategy = "rl";
    std::vector<std::string> compare_strategies;
    long band_size = 1000;
    int smoothing_window = 5;

    std::string raw_json;  // normalized config text, recorded in the manifest

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    void validate() const;

    TimeSeries load_series() const;
    SplitPlan make_plan(const TimeSeries& series) const;
    PolicyModel rl_template() const;
};

struct RunArtifacts {
    std::vector<std::string> files;  // paths relative to out_dir
};

RunArtifacts run_train(const RunConfig& config);
RunArtifacts run_forecast(const RunConfig& config);
RunArtifacts run_compare(const RunConfig& config);
RunArtifacts run_synth(const RunConfig& config);

// Manifest: config text, seeds, version, FNV-1a hash per artifact.
void write_manifest(const RunConfig& config, const RunArtifacts& artifacts,
                    const std::string& path);

}  // namespace rlens
