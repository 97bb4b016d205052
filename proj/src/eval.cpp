#include "rlens/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace rlens {

double nmse(std::span<const double> predictions, std::span<const double> truth) {
    if (predictions.size() != truth.size() || truth.empty())
        throw ValidationError("nmse: length mismatch or empty input");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        double d = truth[i] - predictions[i];
        num += d * d;
        den += truth[i] * truth[i];
    }
    if (den <= 0.0) throw ValidationError("nmse undefined for all-zero truth");
    return num / den;
}

std::vector<double> reward_curve(const std::vector<EpisodeLog>& logs, int smoothing_window) {
    if (smoothing_window < 1) throw ValidationError("smoothing window must be >= 1");
    std::vector<double> totals;
    totals.reserve(logs.size());
    for (const auto& l : logs) totals.push_back(l.total_reward);
    std::vector<double> out(totals.size());
    long half = smoothing_window / 2;
    for (long i = 0; i < static_cast<long>(totals.size()); ++i) {
        long lo = std::max(0L, i - half);
        long hi = std::min(static_cast<long>(totals.size()) - 1, i + half);
        double s = 0.0;
        for (long j = lo; j <= hi; ++j) s += totals[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

std::vector<BandDominance> band_dominance(const std::vector<StepRecord>& steps, long band_size,
                                          const std::vector<std::string>& model_names) {
    if (band_size < 1) throw ValidationError("band_size must be >= 1");
    std::vector<BandDominance> out;
    const std::size_t M = model_names.size();
    for (std::size_t begin = 0; begin < steps.size(); begin += static_cast<std::size_t>(band_size)) {
        std::size_t end = std::min(steps.size(), begin + static_cast<std::size_t>(band_size));
        std::vector<double> sums(M, 0.0);
        for (std::size_t k = begin; k < end; ++k) {
            if (steps[k].weights.size() != M)
                throw ValidationError("band_dominance: weight dimension mismatch");
            for (std::size_t i = 0; i < M; ++i) sums[i] += steps[k].weights[i];
        }
        double total = std::accumulate(sums.begin(), sums.end(), 0.0);
        BandDominance band;
        band.band = {steps[begin].time_index, steps[end - 1].time_index};
        band.shares.resize(M);
        int best = 0;
        for (std::size_t i = 0; i < M; ++i) {
            band.shares[i] = sums[i] / total;
            if (band.shares[i] > band.shares[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
        }
        band.model = best;
        band.model_name = model_names[static_cast<std::size_t>(best)];
        band.share = band.shares[static_cast<std::size_t>(best)];
        out.push_back(std::move(band));
    }
    return out;
}

const StrategyResult* EvalReport::find(const std::string& name) const {
    for (const auto& s : strategies)
        if (s.name == name) return &s;
    return nullptr;
}

namespace {

void finalize(StrategyResult& r) {
    if (r.nmse_per_seed.empty()) return;
    r.nmse_mean = std::accumulate(r.nmse_per_seed.begin(), r.nmse_per_seed.end(), 0.0) /
                  static_cast<double>(r.nmse_per_seed.size());
    r.nmse_min = *std::min_element(r.nmse_per_seed.begin(), r.nmse_per_seed.end());
    r.nmse_max = *std::max_element(r.nmse_per_seed.begin(), r.nmse_per_seed.end());
}

std::vector<double> panel_truth(const TimeSeries& series, const ForecastPanel& panel) {
    std::vector<double> y;
    y.reserve(panel.steps());
    for (long t : panel.time_indices) {
        // masked indices with retained values are scoreable
        double v = series.raw_at(t);
        if (!std::isfinite(v))
            throw ValidationError("no ground truth available at index " + std::to_string(t));
        y.push_back(v);
    }
    return y;
}

std::vector<double> combine_over_panel(const ForecastPanel& panel, const WeightVector& w) {
    std::vector<double> out;
    out.reserve(panel.steps());
    for (std::size_t t = 0; t < panel.steps(); ++t) out.push_back(combine(w, panel.column(t)));
    return out;
}

}  // namespace

EvalReport compare_strategies(const TimeSeries& series, const SplitPlan& plan,
                              const CompareConfig& config) {
    if (config.seeds.empty()) throw ValidationError("compare needs at least one seed");
    if (config.forecaster_specs.size() < 2) throw ValidationError("compare needs >= 2 forecasters");
    plan.validate();

    int max_lag = 0;
    for (const auto& s : config.forecaster_specs) max_lag = std::max(max_lag, s.lag_order);

    std::vector<IndexRange> train_ranges;
    for (const auto& seg : plan.train_segments)
        train_ranges.push_back({seg.first + max_lag, seg.last});

    EvalReport report;
    std::map<std::string, StrategyResult> results;
    auto& strategy_list = config.strategies;

    for (std::uint64_t run_seed : config.seeds) {
        // identical panels for every strategy under this seed
        std::vector<std::unique_ptr<Forecaster>> owned;
        std::vector<const Forecaster*> models;
        for (std::size_t i = 0; i < config.forecaster_specs.size(); ++i) {
            ForecasterSpec spec = config.forecaster_specs[i];
            spec.seed = sub_seed(run_seed, "forecaster/" + std::to_string(i));
            owned.push_back(fit(spec, series, plan.train_segments));
            models.push_back(owned.back().get());
        }
        ForecastPanel train_panel = build_panel(models, series, train_ranges);
        ForecastPanel test_panel = build_panel(models, series, plan.test_segments);
        std::vector<double> train_truth = panel_truth(series, train_panel);
        std::vector<double> test_truth = panel_truth(series, test_panel);

        bool last_seed = run_seed == config.seeds.back();
        if (last_seed) {
            report.test_indices = test_panel.time_indices;
            report.test_truth = test_truth;
        }

        for (const auto& strat : strategy_list) {
            auto& res = results[strat];
            res.name = strat;
            if (res.failed) continue;
            try {
                std::vector<double> preds;
                double sec_per_step = 0.0;

                if (strat == "rl") {
                    PolicyModel policy = config.rl_template;
                    PolicyModel fresh = PolicyModel::make(policy.n_buckets,
                                                          static_cast<int>(models.size()));
                    fresh.sigma0 = policy.sigma0;
                    fresh.sigma_decay = policy.sigma_decay;
                    fresh.exploration_std = policy.sigma0;
                    fresh.actor_lr = policy.actor_lr;
                    fresh.critic_lr = policy.critic_lr;
                    fresh.discount = policy.discount;
                    Rng rng(sub_seed(run_seed, "rl-train"));
                    TrainResult tr = train_episodic(fresh, train_panel, series, plan,
                                                    config.rl_episodes, rng);
                    InferOptions opts;
                    opts.feedback = config.feedback;
                    InferResult inf = infer_online(tr.policy, models, series, plan.test_segments, opts);
                    preds = inf.predictions;
                    sec_per_step = inf.seconds_per_step;

                    if (last_seed) {
                        for (const auto& log : tr.logs) report.episode_rewards.push_back(log.total_reward);
                        report.smoothed_rewards = reward_curve(tr.logs, config.smoothing_window);
                        // dominance over the final full pass plus the test steps
                        std::vector<StepRecord> band_steps;
                        std::size_t passes = plan.train_segments.size();
                        std::size_t from = tr.logs.size() >= passes ? tr.logs.size() - passes : 0;
                        for (std::size_t e = from; e < tr.logs.size(); ++e)
                            band_steps.insert(band_steps.end(), tr.logs[e].steps.begin(),
                                              tr.logs[e].steps.end());
                        band_steps.insert(band_steps.end(), inf.steps.begin(), inf.steps.end());
                        std::sort(band_steps.begin(), band_steps.end(),
                                  [](const StepRecord& a, const StepRecord& b) {
                                      return a.time_index < b.time_index;
                                  });
                        report.bands = band_dominance(band_steps, config.band_size,
                                                      test_panel.model_names);
                    }
                } else if (strat == "online-nn") {
                    OnlineNNWeighter nn(static_cast<int>(models.size()), config.nn_learning_rate,
                                        sub_seed(run_seed, "online-nn"));
                    for (std::size_t t = 0; t < train_panel.steps(); ++t)
                        nn.step(train_panel.column(t), train_truth[t]);
                    WeightVector final_w = nn.infer(train_panel.column(train_panel.steps() - 1));
                    auto t0 = std::chrono::steady_clock::now();
                    for (std::size_t t = 0; t < test_panel.steps(); ++t) {
                        WeightVector w = config.nn_per_sample_weights
                                             ? nn.infer(test_panel.column(t))
                                             : final_w;
                        preds.push_back(combine(w, test_panel.column(t)));
                    }
                    auto t1 = std::chrono::steady_clock::now();
                    sec_per_step = std::chrono::duration<double>(t1 - t0).count() /
                                   static_cast<double>(test_panel.steps());
                } else if (strat == "static") {
                    StaticFitResult fitres = fit_static_weights(train_panel, train_truth);
                    if (!fitres.converged)
                        throw NumericError("static weight fit did not converge");
                    preds = combine_over_panel(test_panel, fitres.weights);
                } else if (strat == "uniform") {
                    preds = combine_over_panel(test_panel, WeightVector::uniform(models.size()));
                } else if (strat.rfind("single:", 0) == 0) {
                    std::string want = strat.substr(7);
                    std::size_t row = static_cast<std::size_t>(-1);
                    for (std::size_t i = 0; i < test_panel.models(); ++i)
                        if (test_panel.model_names[i] == want) row = i;
                    if (row == static_cast<std::size_t>(-1))
                        throw ValidationError("unknown model in strategy \"" + strat + "\"");
                    preds = test_panel.predictions[row];
                } else {
                    throw ValidationError("unknown strategy \"" + strat + "\"");
                }

                res.nmse_per_seed.push_back(nmse(preds, test_truth));
                res.seconds_per_step = sec_per_step;
                if (last_seed) report.test_predictions[strat] = preds;
            } catch (const std::exception& ex) {
                res.failed = true;
                res.error = ex.what();
            }
        }
    }

    for (const auto& strat : strategy_list) {
        auto& res = results[strat];
        finalize(res);
        report.strategies.push_back(res);
    }
    return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    for (const auto& s : report.strategies) {
        nlohmann::json js;
        js["name"] = s.name;
        js["failed"] = s.failed;
        if (s.failed) js["error"] = s.error;
        js["nmse_per_seed"] = s.nmse_per_seed;
        js["nmse_mean"] = s.nmse_mean;
        js["nmse_min"] = s.nmse_min;
        js["nmse_max"] = s.nmse_max;
        // timings go to a separate artifact so the report is reproducible
        j["strategies"].push_back(js);
    }
    j["episode_rewards"] = report.episode_rewards;
    j["smoothed_rewards"] = report.smoothed_rewards;
    for (const auto& b : report.bands) {
        nlohmann::json jb;
        jb["band_first"] = b.band.first;
        jb["band_last"] = b.band.last;
        jb["dominant_model"] = b.model_name;
        jb["share"] = b.share;
        jb["shares"] = b.shares;
        j["band_dominance"].push_back(jb);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

void write_report_text(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << std::left << std::setw(24) << "strategy" << std::right << std::setw(12) << "nmse_mean"
        << std::setw(12) << "nmse_min" << std::setw(12) << "nmse_max" << '\n';
    out << std::string(60, '-') << '\n';
    out << std::fixed << std::setprecision(5);
    for (const auto& s : report.strategies) {
        out << std::left << std::setw(24) << s.name;
        if (s.failed) {
            out << "  FAILED: " << s.error << '\n';
            continue;
        }
        out << std::right << std::setw(12) << s.nmse_mean << std::setw(12) << s.nmse_min
            << std::setw(12) << s.nmse_max << '\n';
    }
    if (!report.bands.empty()) {
        out << "\nband dominance\n";
        for (const auto& b : report.bands)
            out << "  [" << b.band.first << ", " << b.band.last << "]  " << b.model_name
                << "  share " << std::setprecision(3) << b.share << '\n';
    }
}

void write_reward_curve_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "episode,total_reward,smoothed\n";
    out.precision(17);
    for (std::size_t e = 0; e < report.episode_rewards.size(); ++e) {
        out << e << ',' << report.episode_rewards[e] << ',';
        if (e < report.smoothed_rewards.size()) out << report.smoothed_rewards[e];
        out << '\n';
    }
}

void write_predictions_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "index,truth";
    for (const auto& [name, _] : report.test_predictions) out << ',' << name;
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < report.test_indices.size(); ++i) {
        out << report.test_indices[i] << ',' << report.test_truth[i];
        for (const auto& [name, preds] : report.test_predictions)
            out << ',' << (i < preds.size() ? preds[i] : std::nan(""));
        out << '\n';
    }
}

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<std::pair<std::string, std::vector<double>>>& curves) {
    const double W = 860, H = 480, ml = 60, mr = 160, mt = 40, mb = 40;
    double lo = 0.0, hi = 1.0;
    std::size_t n = 0;
    bool first = true;
    for (const auto& [name, ys] : curves)
        for (double y : ys) {
            if (first) {
                lo = hi = y;
                first = false;
            }
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    for (const auto& [name, ys] : curves) n = std::max(n, ys.size());
    if (n < 2 || first) throw ValidationError("svg plot needs at least 2 points");
    if (hi - lo < 1e-12) hi = lo + 1.0;

    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
        << H - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << H - mb << "\" text-anchor=\"end\" font-size=\"11\">"
        << lo << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << mt + 10 << "\" text-anchor=\"end\" font-size=\"11\">"
        << hi << "</text>\n";

    int ci = 0;
    for (const auto& [name, ys] : curves) {
        const char* color = palette[ci % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            double x = ml + (W - ml - mr) * static_cast<double>(i) / static_cast<double>(n - 1);
            double y = H - mb - (H - mt - mb) * (ys[i] - lo) / (hi - lo);
            out << x << ',' << y << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << W - mr + 10 << "\" y=\"" << mt + 16 * (ci + 1)
            << "\" font-size=\"12\" fill=\"" << color << "\">" << name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

}  // namespace rlens
