#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlens/ensemble.hpp"
#include "rlens/forecasters.hpp"
#include "rlens/series.hpp"

namespace rlens {

// Normalized squared prediction error as a percentage, clamped to
// [0,100], with its discretization bucket. bucket = floor(raw/(100/n)),
// raw = 100 landing in the top bucket.
struct ErrorState {
    double raw = 0.0;
    int bucket = 0;
    double bucket_lb = 0.0;
};

ErrorState make_error_state(double raw, int n_buckets);

struct DegenerateDenominator : NumericError {
    using NumericError::NumericError;
};

// raw = clamp(((y - sum_i w_i p_i)^2 / y^2) * 100, 0, 100).
// Throws DegenerateDenominator when |true_value| < eps_y.
ErrorState compute_state(double true_value, const WeightVector& weights,
                         std::span<const double> preds, int n_buckets, double eps_y = 1e-8);

// Fallback at zero crossings: squared absolute error scaled by the series
// variance. Sets used_fallback when taken.
ErrorState compute_state_with_fallback(double true_value, const WeightVector& weights,
                                       std::span<const double> preds, int n_buckets,
                                       double series_variance, bool* used_fallback = nullptr,
                                       double eps_y = 1e-8);

double compute_reward(const ErrorState& prev, const ErrorState& curr);

// Discounted return sum_k gamma^k * rewards[k] over the given horizon.
double compute_return(std::span<const double> rewards, double discount);

enum class ActionMode { Explore, Exploit };

// Tabular actor-critic over the finite error-state set: per-bucket actor
// logits with Gaussian exploration in logit space, per-bucket critic.
struct PolicyModel {
    int n_buckets = 10;
    int n_models = 0;
    std::vector<double> actor_logits;  // n_buckets x n_models, row-major
    std::vector<double> critic_values; // n_buckets
    double exploration_std = 0.5;
    double sigma0 = 0.5;
    double sigma_decay = 0.97;
    double actor_lr = 0.05;
    double critic_lr = 0.1;
    double discount = 0.9;
    long episodes_trained = 0;

    static PolicyModel make(int n_buckets, int n_models);
    void validate() const;

    std::span<const double> logits_for(int bucket) const;

    std::string to_json() const;
    static PolicyModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static PolicyModel load(const std::string& path);
};

struct ActionRecord {
    WeightVector weights;
    std::vector<double> noise;  // logit-space Gaussian perturbation (empty in exploit mode)
    double sigma = 0.0;
};

ActionRecord select_action(const PolicyModel& policy, const ErrorState& state, ActionMode mode,
                           Rng& rng);

struct Transition {
    int state_bucket = 0;
    std::vector<double> noise;
    double sigma = 0.0;
    double reward = 0.0;
    int next_bucket = 0;
    bool terminal = false;
};

// One-step TD update: delta = r + gamma*V[s'](non-terminal) - V[s];
// critic moves by critic_lr*delta, actor logits by the score-function
// term actor_lr*delta*g/sigma^2. sigma = 0 means critic-only.
void td_update(PolicyModel& policy, const Transition& transition);

struct StepRecord {
    long time_index = 0;
    ErrorState state;
    WeightVector weights;
    double reward = 0.0;
    double prediction = 0.0;
    bool used_fallback = false;
};

struct EpisodeLog {
    long episode_index = 0;
    double initial_state_raw = 0.0;  // prev-state at episode start, for telescoping checks
    std::vector<StepRecord> steps;
    double total_reward = 0.0;
};

void export_episode_logs_csv(const std::vector<EpisodeLog>& logs,
                             const std::vector<std::string>& model_names, const std::string& path);

struct TrainResult {
    PolicyModel policy;
    std::vector<EpisodeLog> logs;
};

// Episodic training (explore mode) round-robin over the plan's training
// segments; sigma decays by sigma_decay after every episode. The panel
// must cover each segment's trainable indices (segment start + lag
// onwards).
TrainResult train_episodic(const PolicyModel& policy, const ForecastPanel& panel,
                           const TimeSeries& truth, const SplitPlan& plan, long total_episodes,
                           Rng& rng);

enum class FeedbackMode { TrueValue, Proxy };
enum class LagFeedMode { PerModel, Ensemble };

struct InferOptions {
    FeedbackMode feedback = FeedbackMode::TrueValue;
    LagFeedMode lag_feed = LagFeedMode::PerModel;
};

struct InferResult {
    std::vector<long> time_indices;
    std::vector<double> predictions;
    PolicyModel policy;
    std::vector<StepRecord> steps;
    double seconds_per_step = 0.0;  // weight computation + update only
};

// Online test-time loop: exploit action, combine, then a TD update once
// the step's error signal is known (realized value, or the panel-mean
// proxy when the truth is genuinely missing).
InferResult infer_online(const PolicyModel& policy, const std::vector<const Forecaster*>& models,
                         const TimeSeries& series, const std::vector<IndexRange>& test_ranges,
                         const InferOptions& options = {});

}  // namespace rlens
