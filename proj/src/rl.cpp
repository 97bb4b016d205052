#include "rlens/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rlens {

ErrorState make_error_state(double raw, int n_buckets) {
    if (n_buckets < 1) throw ValidationError("bucket count must be >= 1");
    if (!(raw >= 0.0 && raw <= 100.0)) throw ValidationError("error state raw outside [0,100]");
    double width = 100.0 / n_buckets;
    int bucket = std::min(static_cast<int>(raw / width), n_buckets - 1);
    return {raw, bucket, bucket * width};
}

ErrorState compute_state(double true_value, const WeightVector& weights,
                         std::span<const double> preds, int n_buckets, double eps_y) {
    if (std::abs(true_value) < eps_y)
        throw DegenerateDenominator("compute_state: |true value| below " + std::to_string(eps_y));
    double err = true_value - combine(weights, preds);
    double raw = (err * err) / (true_value * true_value) * 100.0;
    raw = std::clamp(raw, 0.0, 100.0);
    return make_error_state(raw, n_buckets);
}

ErrorState compute_state_with_fallback(double true_value, const WeightVector& weights,
                                       std::span<const double> preds, int n_buckets,
                                       double series_variance, bool* used_fallback, double eps_y) {
    if (used_fallback) *used_fallback = false;
    if (std::abs(true_value) >= eps_y)
        return compute_state(true_value, weights, preds, n_buckets, eps_y);
    if (used_fallback) *used_fallback = true;
    double err = true_value - combine(weights, preds);
    double scale = series_variance > 0.0 ? series_variance : 1.0;
    double raw = std::clamp(err * err / scale * 100.0, 0.0, 100.0);
    return make_error_state(raw, n_buckets);
}

double compute_reward(const ErrorState& prev, const ErrorState& curr) {
    return prev.raw - curr.raw;
}

double compute_return(std::span<const double> rewards, double discount) {
    if (discount < 0.0 || discount > 1.0) throw ValidationError("discount must be in [0,1]");
    double g = 0.0, factor = 1.0;
    for (double r : rewards) {
        if (!std::isfinite(r)) throw ValidationError("non-finite reward");
        g += factor * r;
        factor *= discount;
    }
    return g;
}

PolicyModel PolicyModel::make(int n_buckets, int n_models) {
    if (n_buckets < 1) throw ValidationError("policy needs >= 1 bucket");
    if (n_models < 2) throw ValidationError("policy needs >= 2 models");
    PolicyModel p;
    p.n_buckets = n_buckets;
    p.n_models = n_models;
    p.actor_logits.assign(static_cast<std::size_t>(n_buckets) * n_models, 0.0);
    p.critic_values.assign(static_cast<std::size_t>(n_buckets), 0.0);
    return p;
}

void PolicyModel::validate() const {
    if (actor_logits.size() != static_cast<std::size_t>(n_buckets) * n_models)
        throw ValidationError("policy logit matrix shape mismatch");
    if (critic_values.size() != static_cast<std::size_t>(n_buckets))
        throw ValidationError("policy critic vector shape mismatch");
    if (!all_finite(actor_logits) || !all_finite(critic_values))
        throw ValidationError("non-finite policy parameter");
    // zero is allowed so a policy can be run frozen
    if (actor_lr < 0.0 || actor_lr > 1.0 || critic_lr < 0.0 || critic_lr > 1.0)
        throw ValidationError("learning rates must be in [0,1]");
    if (exploration_std < 0.0) throw ValidationError("exploration std must be >= 0");
    if (discount < 0.0 || discount > 1.0) throw ValidationError("discount must be in [0,1]");
}

std::span<const double> PolicyModel::logits_for(int bucket) const {
    if (bucket < 0 || bucket >= n_buckets) throw ValidationError("bucket out of range");
    return {actor_logits.data() + static_cast<std::size_t>(bucket) * n_models,
            static_cast<std::size_t>(n_models)};
}

std::string PolicyModel::to_json() const {
    nlohmann::json j;
    j["n_buckets"] = n_buckets;
    j["n_models"] = n_models;
    j["actor_logits"] = actor_logits;
    j["critic_values"] = critic_values;
    j["exploration_std"] = exploration_std;
    j["sigma0"] = sigma0;
    j["sigma_decay"] = sigma_decay;
    j["actor_lr"] = actor_lr;
    j["critic_lr"] = critic_lr;
    j["discount"] = discount;
    j["episodes_trained"] = episodes_trained;
    return j.dump(2);
}

PolicyModel PolicyModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    PolicyModel p;
    p.n_buckets = j.at("n_buckets").get<int>();
    p.n_models = j.at("n_models").get<int>();
    p.actor_logits = j.at("actor_logits").get<std::vector<double>>();
    p.critic_values = j.at("critic_values").get<std::vector<double>>();
    p.exploration_std = j.at("exploration_std").get<double>();
    p.sigma0 = j.at("sigma0").get<double>();
    p.sigma_decay = j.at("sigma_decay").get<double>();
    p.actor_lr = j.at("actor_lr").get<double>();
    p.critic_lr = j.at("critic_lr").get<double>();
    p.discount = j.at("discount").get<double>();
    p.episodes_trained = j.at("episodes_trained").get<long>();
    p.validate();
    return p;
}

void PolicyModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json() << '\n';
    if (!out) throw IoError("write failed for " + path);
}

PolicyModel PolicyModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

ActionRecord select_action(const PolicyModel& policy, const ErrorState& state, ActionMode mode,
                           Rng& rng) {
    auto base = policy.logits_for(state.bucket);
    ActionRecord rec;
    if (mode == ActionMode::Exploit || policy.exploration_std == 0.0) {
        if (mode == ActionMode::Explore) rec.sigma = 0.0;
        rec.weights = WeightVector::from_logits(base);
        if (mode == ActionMode::Explore) rec.noise.assign(base.size(), 0.0);
        return rec;
    }
    rec.sigma = policy.exploration_std;
    std::normal_distribution<double> gauss(0.0, rec.sigma);
    std::vector<double> perturbed(base.begin(), base.end());
    rec.noise.resize(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        rec.noise[i] = gauss(rng);
        perturbed[i] += rec.noise[i];
    }
    rec.weights = WeightVector::from_logits(perturbed);
    return rec;
}

void td_update(PolicyModel& policy, const Transition& tr) {
    if (tr.state_bucket < 0 || tr.state_bucket >= policy.n_buckets ||
        tr.next_bucket < 0 || tr.next_bucket >= policy.n_buckets)
        throw ValidationError("td_update: bucket out of range");
    if (!std::isfinite(tr.reward)) throw ValidationError("td_update: non-finite reward");

    double v_next = tr.terminal ? 0.0 : policy.critic_values[static_cast<std::size_t>(tr.next_bucket)];
    double delta = tr.reward + policy.discount * v_next -
                   policy.critic_values[static_cast<std::size_t>(tr.state_bucket)];
    policy.critic_values[static_cast<std::size_t>(tr.state_bucket)] += policy.critic_lr * delta;

    if (tr.noise.empty() || tr.sigma <= 0.0) return;  // exploit step: critic-only
    if (tr.noise.size() != static_cast<std::size_t>(policy.n_models))
        throw ValidationError("td_update: noise dimension mismatch");
    double* row = policy.actor_logits.data() +
                  static_cast<std::size_t>(tr.state_bucket) * policy.n_models;
    double s2 = tr.sigma * tr.sigma;
    for (int i = 0; i < policy.n_models; ++i)
        row[i] += policy.actor_lr * delta * tr.noise[static_cast<std::size_t>(i)] / s2;
}

namespace {

// Panel column positions falling inside a segment.
std::pair<std::size_t, std::size_t> segment_positions(const ForecastPanel& panel,
                                                      const IndexRange& seg) {
    auto lo = std::lower_bound(panel.time_indices.begin(), panel.time_indices.end(), seg.first);
    auto hi = std::upper_bound(panel.time_indices.begin(), panel.time_indices.end(), seg.last);
    return {static_cast<std::size_t>(lo - panel.time_indices.begin()),
            static_cast<std::size_t>(hi - panel.time_indices.begin())};
}

}  // namespace

TrainResult train_episodic(const PolicyModel& start, const ForecastPanel& panel,
                           const TimeSeries& truth, const SplitPlan& plan, long total_episodes,
                           Rng& rng) {
    if (total_episodes <= 0) throw ValidationError("total_episodes must be positive");
    if (plan.train_segments.empty()) throw ValidationError("plan has no train segments");
    start.validate();

    TrainResult result;
    result.policy = start;
    PolicyModel& policy = result.policy;
    policy.exploration_std = policy.sigma0 * std::pow(policy.sigma_decay,
                                                      static_cast<double>(policy.episodes_trained));
    double var = truth.known_variance();

    for (long e = 0; e < total_episodes; ++e) {
        const auto& seg = plan.train_segments[static_cast<std::size_t>(
            (policy.episodes_trained) % static_cast<long>(plan.train_segments.size()))];
        auto [pos0, pos1] = segment_positions(panel, seg);
        if (pos1 - pos0 < 2)
            throw ValidationError("panel does not cover train segment " + std::to_string(seg.first) +
                                  "-" + std::to_string(seg.last));

        EpisodeLog log;
        log.episode_index = policy.episodes_trained;

        // episode reset: prev-state from the exploit action on the first sample
        auto col0 = panel.column(pos0);
        ActionRecord boot = select_action(policy, make_error_state(0.0, policy.n_buckets),
                                          ActionMode::Exploit, rng);
        ErrorState prev = compute_state_with_fallback(truth.at(panel.time_indices[pos0]),
                                                      boot.weights, col0, policy.n_buckets, var);
        log.initial_state_raw = prev.raw;

        for (std::size_t pos = pos0 + 1; pos < pos1; ++pos) {
            auto col = panel.column(pos);
            ActionRecord act = select_action(policy, prev, ActionMode::Explore, rng);
            act.weights.validate();
            double pred = combine(act.weights, col);
            bool fell_back = false;
            ErrorState curr = compute_state_with_fallback(truth.at(panel.time_indices[pos]),
                                                          act.weights, col, policy.n_buckets, var,
                                                          &fell_back);
            double r = compute_reward(prev, curr);
            td_update(policy, {prev.bucket, act.noise, act.sigma, r, curr.bucket, pos + 1 == pos1});
            log.steps.push_back({panel.time_indices[pos], curr, act.weights, r, pred, fell_back});
            log.total_reward += r;
            prev = curr;
        }
        policy.episodes_trained += 1;
        policy.exploration_std = policy.sigma0 *
                                 std::pow(policy.sigma_decay, static_cast<double>(policy.episodes_trained));
        result.logs.push_back(std::move(log));
    }
    policy.validate();
    return result;
}

InferResult infer_online(const PolicyModel& start, const std::vector<const Forecaster*>& models,
                         const TimeSeries& series, const std::vector<IndexRange>& test_ranges,
                         const InferOptions& options) {
    start.validate();
    if (static_cast<int>(models.size()) != start.n_models)
        throw ValidationError("model count does not match policy");

    InferResult result;
    result.policy = start;
    PolicyModel& policy = result.policy;
    Rng rng(0);  // exploit mode draws nothing
    double var = series.known_variance();

    std::chrono::duration<double> controller_time{0.0};
    long controller_steps = 0;

    for (const auto& range : test_ranges) {
        std::vector<std::deque<double>> hist(models.size());
        for (std::size_t i = 0; i < models.size(); ++i) {
            int lag = models[i]->lag_order();
            for (long t = range.first - lag; t < range.first; ++t) hist[i].push_back(series.at(t));
        }

        std::optional<ErrorState> prev;
        for (long t = range.first; t <= range.last; ++t) {
            std::vector<double> col(models.size());
            for (std::size_t i = 0; i < models.size(); ++i) {
                std::vector<double> window(hist[i].begin(), hist[i].end());
                col[i] = models[i]->predict_next(window);
                if (!std::isfinite(col[i]))
                    throw NumericError(models[i]->name() + ": non-finite prediction at index " +
                                       std::to_string(t));
            }

            auto t0 = std::chrono::steady_clock::now();
            ErrorState at_state = prev.value_or(make_error_state(0.0, policy.n_buckets));
            ActionRecord act = select_action(policy, at_state, ActionMode::Exploit, rng);
            act.weights.validate();
            double pred = combine(act.weights, col);
            result.time_indices.push_back(t);
            result.predictions.push_back(pred);

            // a masked index still counts as known when the underlying
            // value was retained (synthetic benchmarks score the blocks)
            bool truth_known = series.in_range(t) && std::isfinite(series.raw_at(t));
            double signal;
            if (options.feedback == FeedbackMode::TrueValue) {
                if (!truth_known)
                    throw ValidationError("true-value feedback requested but index " +
                                          std::to_string(t) + " is missing; use proxy feedback");
                signal = series.raw_at(t);
            } else {
                // self-consistency proxy: the panel column mean stands in
                // for the unavailable truth
                double m = 0.0;
                for (double p : col) m += p;
                signal = m / static_cast<double>(col.size());
            }

            bool fell_back = false;
            ErrorState curr = compute_state_with_fallback(signal, act.weights, col,
                                                          policy.n_buckets, var, &fell_back);
            double r = prev ? compute_reward(*prev, curr) : 0.0;
            if (prev)
                td_update(policy, {prev->bucket, {}, 0.0, r, curr.bucket, false});
            auto t1 = std::chrono::steady_clock::now();
            controller_time += t1 - t0;
            ++controller_steps;

            result.steps.push_back({t, curr, act.weights, r, pred, fell_back});
            prev = curr;

            for (std::size_t i = 0; i < models.size(); ++i) {
                double next;
                if (truth_known)
                    next = series.raw_at(t);
                else
                    next = options.lag_feed == LagFeedMode::PerModel ? col[i] : pred;
                hist[i].pop_front();
                hist[i].push_back(next);
            }
        }
    }
    if (controller_steps > 0)
        result.seconds_per_step = controller_time.count() / static_cast<double>(controller_steps);
    policy.validate();
    return result;
}

void export_episode_logs_csv(const std::vector<EpisodeLog>& logs,
                             const std::vector<std::string>& model_names, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "episode,step,time_index,raw_state,bucket,reward";
    for (std::size_t i = 0; i < model_names.size(); ++i) out << ",w_" << (i + 1);
    out << '\n';
    out.precision(17);
    for (const auto& log : logs) {
        long step = 0;
        for (const auto& s : log.steps) {
            out << log.episode_index << ',' << step++ << ',' << s.time_index << ',' << s.state.raw
                << ',' << s.state.bucket << ',' << s.reward;
            for (double w : s.weights.w) out << ',' << w;
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace rlens
