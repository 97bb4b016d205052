#include "rlens/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rlens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "rlens 0.1.0";

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ValidationError("unknown key \"" + it.key() + "\" in " + where);
    }
}

std::vector<SegmentSpec> parse_segments(const json& jsegs) {
    std::vector<SegmentSpec> out;
    for (const auto& js : jsegs) {
        reject_unknown(js, {"kind", "length", "noise_std", "params"}, "synth segment");
        SegmentSpec s;
        s.kind = segment_kind_from_string(js.at("kind").get<std::string>());
        s.length = js.at("length").get<long>();
        s.noise_std = js.value("noise_std", 0.0);
        if (js.contains("params"))
            for (auto it = js["params"].begin(); it != js["params"].end(); ++it)
                s.params[it.key()] = it.value().get<double>();
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ForecasterSpec> default_zoo(int lag) {
    std::vector<ForecasterSpec> specs(4);
    specs[0].kind = ForecasterKind::ArLeastSquares;
    specs[1].kind = ForecasterKind::FeedforwardNet;
    specs[2].kind = ForecasterKind::RecurrentNet;
    specs[3].kind = ForecasterKind::BaggedTrees;
    for (auto& s : specs) s.lag_order = lag;
    return specs;
}

std::string file_hash_hex(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot hash " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::uint64_t h = fnv1a(ss.str());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j = json::parse(text);
    reject_unknown(j,
                   {"data", "split", "forecasters", "rl", "baseline", "seeds", "out", "feedback",
                    "strategy", "strategies", "band_size", "smoothing_window"},
                   "config");
    RunConfig c;
    c.raw_json = j.dump(2);

    const json& jd = j.at("data");
    reject_unknown(jd, {"csv", "missing", "sentinel", "synth"}, "data");
    if (jd.contains("csv") == jd.contains("synth"))
        throw ValidationError("data must give exactly one of \"csv\" or \"synth\"");
    if (jd.contains("csv")) {
        c.csv_path = jd.at("csv").get<std::string>();
        std::string mp = jd.value("missing", "empty-cell");
        if (mp == "empty-cell")
            c.missing_policy = MissingPolicy::EmptyCell;
        else if (mp == "sentinel")
            c.missing_policy = MissingPolicy::Sentinel;
        else
            throw ValidationError("missing policy must be empty-cell or sentinel");
        c.sentinel = jd.value("sentinel", "NA");
    } else {
        const json& js = jd.at("synth");
        reject_unknown(js, {"seed", "segments", "cats_layout"}, "synth");
        c.synth_seed = js.value("seed", 0ULL);
        c.synth_segments = parse_segments(js.at("segments"));
        c.cats_layout = js.value("cats_layout", false);
    }

    if (j.contains("split")) {
        const json& js = j.at("split");
        reject_unknown(js, {"mode", "train_frac", "episodes"}, "split");
        std::string mode = js.at("mode").get<std::string>();
        if (mode == "cats")
            c.split_mode = SplitMode::Cats;
        else if (mode == "ratio")
            c.split_mode = SplitMode::Ratio;
        else
            throw ValidationError("split mode must be cats or ratio");
        c.train_frac = js.value("train_frac", 0.8);
        c.split_episodes = js.value("episodes", 5);
    }

    if (j.contains("forecasters")) {
        for (const auto& jf : j.at("forecasters")) {
            reject_unknown(jf, {"kind", "lag", "hyper"}, "forecaster");
            ForecasterSpec s;
            s.kind = forecaster_kind_from_string(jf.at("kind").get<std::string>());
            s.lag_order = jf.value("lag", 5);
            if (jf.contains("hyper"))
                for (auto it = jf["hyper"].begin(); it != jf["hyper"].end(); ++it)
                    s.hyperparams[it.key()] = it.value().get<double>();
            c.forecasters.push_back(std::move(s));
        }
    } else {
        c.forecasters = default_zoo(5);
    }

    if (j.contains("rl")) {
        const json& jr = j.at("rl");
        reject_unknown(jr,
                       {"buckets", "gamma", "actor_lr", "critic_lr", "sigma0", "sigma_decay",
                        "episodes"},
                       "rl");
        c.rl_buckets = jr.value("buckets", 10);
        c.rl_gamma = jr.value("gamma", 0.9);
        c.rl_actor_lr = jr.value("actor_lr", 0.05);
        c.rl_critic_lr = jr.value("critic_lr", 0.1);
        c.rl_sigma0 = jr.value("sigma0", 0.5);
        c.rl_sigma_decay = jr.value("sigma_decay", 0.97);
        c.rl_episodes = jr.value("episodes", 100L);
    }
    if (j.contains("baseline")) {
        const json& jb = j.at("baseline");
        reject_unknown(jb, {"nn_learning_rate", "nn_per_sample_weights"}, "baseline");
        c.nn_learning_rate = jb.value("nn_learning_rate", 0.01);
        c.nn_per_sample_weights = jb.value("nn_per_sample_weights", true);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    if (j.contains("feedback")) {
        std::string f = j.at("feedback").get<std::string>();
        if (f == "true-value")
            c.feedback = FeedbackMode::TrueValue;
        else if (f == "proxy")
            c.feedback = FeedbackMode::Proxy;
        else
            throw ValidationError("feedback must be true-value or proxy");
    }
    if (j.contains("strategy")) c.strategy = j.at("strategy").get<std::string>();
    if (j.contains("strategies"))
        c.compare_strategies = j.at("strategies").get<std::vector<std::string>>();
    c.band_size = j.value("band_size", 1000L);
    c.smoothing_window = j.value("smoothing_window", 5);

    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return from_json_text(ss.str());
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void RunConfig::validate() const {
    if (seeds.empty()) throw ValidationError("at least one seed is required");
    if (forecasters.size() < 2) throw ValidationError("need at least 2 forecasters");
    for (const auto& f : forecasters) f.validate();
    if (rl_buckets < 1) throw ValidationError("rl.buckets must be >= 1");
    if (rl_gamma < 0.0 || rl_gamma > 1.0) throw ValidationError("rl.gamma must be in [0,1]");
    if (rl_actor_lr < 0.0 || rl_actor_lr > 1.0 || rl_critic_lr < 0.0 || rl_critic_lr > 1.0)
        throw ValidationError("rl learning rates must be in [0,1]");
    if (rl_sigma0 < 0.0) throw ValidationError("rl.sigma0 must be >= 0");
    if (rl_sigma_decay <= 0.0 || rl_sigma_decay > 1.0)
        throw ValidationError("rl.sigma_decay must be in (0,1]");
    if (rl_episodes < 1) throw ValidationError("rl.episodes must be >= 1");
    if (nn_learning_rate < 0.0) throw ValidationError("baseline.nn_learning_rate must be >= 0");
    if (band_size < 1) throw ValidationError("band_size must be >= 1");
    if (smoothing_window < 1) throw ValidationError("smoothing_window must be >= 1");
    if (!csv_path.empty() && !synth_segments.empty())
        throw ValidationError("config mixes csv and synth data sources");
    if (out_dir.empty()) throw ValidationError("out directory must be set");
}

TimeSeries RunConfig::load_series() const {
    TimeSeries ts;
    if (!csv_path.empty()) {
        ts = load_csv(csv_path, missing_policy, sentinel);
    } else {
        ts = synth_regimes(synth_segments, synth_seed);
        if (cats_layout) {
            if (ts.length() != 5000)
                throw ValidationError("cats_layout needs a synthetic series of length 5000");
            for (long k = 0; k < 5; ++k) ts.missing_blocks.push_back({981 + 1000 * k, 1000 + 1000 * k});
            ts.validate();
        }
    }
    return ts;
}

SplitPlan RunConfig::make_plan(const TimeSeries& series) const {
    if (split_mode == SplitMode::Cats) return cats_split(series);
    return ratio_split(series, train_frac, split_episodes);
}

PolicyModel RunConfig::rl_template() const {
    PolicyModel p = PolicyModel::make(rl_buckets, static_cast<int>(forecasters.size()));
    p.discount = rl_gamma;
    p.actor_lr = rl_actor_lr;
    p.critic_lr = rl_critic_lr;
    p.sigma0 = rl_sigma0;
    p.exploration_std = rl_sigma0;
    p.sigma_decay = rl_sigma_decay;
    return p;
}

namespace {

struct TrainedSet {
    std::vector<std::unique_ptr<Forecaster>> owned;
    std::vector<const Forecaster*> models;
    ForecastPanel train_panel;
    std::vector<IndexRange> train_ranges;
};

TrainedSet train_models(const RunConfig& config, const TimeSeries& series, const SplitPlan& plan,
                        std::uint64_t run_seed) {
    TrainedSet set;
    int max_lag = 0;
    for (const auto& s : config.forecasters) max_lag = std::max(max_lag, s.lag_order);
    for (const auto& seg : plan.train_segments)
        set.train_ranges.push_back({seg.first + max_lag, seg.last});
    for (std::size_t i = 0; i < config.forecasters.size(); ++i) {
        ForecasterSpec spec = config.forecasters[i];
        spec.seed = sub_seed(run_seed, "forecaster/" + std::to_string(i));
        set.owned.push_back(fit(spec, series, plan.train_segments));
        set.models.push_back(set.owned.back().get());
    }
    set.train_panel = build_panel(set.models, series, set.train_ranges);
    return set;
}

std::string model_filename(const Forecaster& m, std::size_t i) {
    return "model_" + std::to_string(i) + "_" + m.name() + ".json";
}

void write_predictions(const std::vector<long>& indices, const std::vector<double>& preds,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "index,prediction\n";
    out.precision(17);
    for (std::size_t i = 0; i < indices.size(); ++i) out << indices[i] << ',' << preds[i] << '\n';
}

}  // namespace

void write_manifest(const RunConfig& config, const RunArtifacts& artifacts,
                    const std::string& path) {
    json j;
    j["version"] = kVersion;
    j["config"] = json::parse(config.raw_json);
    j["seeds"] = config.seeds;
    json hashes = json::object();
    for (const auto& f : artifacts.files)
        hashes[f] = file_hash_hex(fs::path(config.out_dir) / f);
    j["artifact_hashes"] = hashes;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

RunArtifacts run_synth(const RunConfig& config) {
    if (config.synth_segments.empty()) throw ValidationError("synth subcommand needs synth data config");
    TimeSeries ts = config.load_series();
    fs::create_directories(config.out_dir);
    RunArtifacts art;

    save_csv(ts, (fs::path(config.out_dir) / "series.csv").string());
    art.files.push_back("series.csv");
    if (!ts.missing_blocks.empty()) {
        TimeSeries masked = ts;
        for (const auto& b : ts.missing_blocks)
            for (long t = b.first; t <= b.last; ++t)
                masked.values[static_cast<std::size_t>(t - ts.start_index)] = std::nan("");
        save_csv(masked, (fs::path(config.out_dir) / "series_masked.csv").string());
        art.files.push_back("series_masked.csv");
    }
    write_manifest(config, art, (fs::path(config.out_dir) / "manifest.json").string());
    art.files.push_back("manifest.json");
    return art;
}

RunArtifacts run_train(const RunConfig& config) {
    TimeSeries series = config.load_series();
    SplitPlan plan = config.make_plan(series);
    std::uint64_t run_seed = config.seeds.front();

    TrainedSet set = train_models(config, series, plan, run_seed);

    PolicyModel policy = config.rl_template();
    Rng rng(sub_seed(run_seed, "rl-train"));
    TrainResult tr = train_episodic(policy, set.train_panel, series, plan, config.rl_episodes, rng);

    fs::create_directories(config.out_dir);
    RunArtifacts art;
    for (std::size_t i = 0; i < set.models.size(); ++i) {
        std::string name = model_filename(*set.models[i], i);
        save_forecaster(*set.models[i], (fs::path(config.out_dir) / name).string());
        art.files.push_back(name);
    }
    tr.policy.save((fs::path(config.out_dir) / "policy.json").string());
    art.files.push_back("policy.json");
    export_episode_logs_csv(tr.logs, set.train_panel.model_names,
                            (fs::path(config.out_dir) / "episodes.csv").string());
    art.files.push_back("episodes.csv");
    write_manifest(config, art, (fs::path(config.out_dir) / "manifest.json").string());
    art.files.push_back("manifest.json");
    return art;
}

RunArtifacts run_forecast(const RunConfig& config) {
    TimeSeries series = config.load_series();
    SplitPlan plan = config.make_plan(series);
    std::uint64_t run_seed = config.seeds.front();
    fs::path out(config.out_dir);

    // reload the trained artifacts
    std::vector<std::unique_ptr<Forecaster>> owned;
    std::vector<const Forecaster*> models;
    for (std::size_t i = 0; i < config.forecasters.size(); ++i) {
        fs::path p;
        for (const auto& entry : fs::directory_iterator(out)) {
            std::string fn = entry.path().filename().string();
            if (fn.rfind("model_" + std::to_string(i) + "_", 0) == 0) p = entry.path();
        }
        if (p.empty())
            throw IoError("missing model artifact for forecaster " + std::to_string(i) + " in " +
                          out.string());
        owned.push_back(load_forecaster(p.string()));
        models.push_back(owned.back().get());
    }

    RunArtifacts art;
    std::vector<long> indices;
    std::vector<double> preds;

    if (config.strategy == "rl") {
        fs::path ppath = out / "policy.json";
        if (!fs::exists(ppath)) throw IoError("missing policy artifact " + ppath.string());
        PolicyModel policy = PolicyModel::load(ppath.string());
        InferOptions opts;
        opts.feedback = config.feedback;
        InferResult inf = infer_online(policy, models, series, plan.test_segments, opts);
        indices = inf.time_indices;
        preds = inf.predictions;
        inf.policy.save((out / "policy_after_forecast.json").string());
        art.files.push_back("policy_after_forecast.json");
    } else {
        ForecastPanel test_panel = build_panel(models, series, plan.test_segments);
        indices = test_panel.time_indices;
        if (config.strategy == "uniform") {
            WeightVector w = WeightVector::uniform(models.size());
            for (std::size_t t = 0; t < test_panel.steps(); ++t)
                preds.push_back(combine(w, test_panel.column(t)));
        } else if (config.strategy == "static" || config.strategy == "online-nn") {
            int max_lag = 0;
            for (const auto& s : config.forecasters) max_lag = std::max(max_lag, s.lag_order);
            std::vector<IndexRange> train_ranges;
            for (const auto& seg : plan.train_segments)
                train_ranges.push_back({seg.first + max_lag, seg.last});
            ForecastPanel train_panel = build_panel(models, series, train_ranges);
            std::vector<double> train_truth;
            for (long t : train_panel.time_indices) train_truth.push_back(series.at(t));
            if (config.strategy == "static") {
                StaticFitResult f = fit_static_weights(train_panel, train_truth);
                for (std::size_t t = 0; t < test_panel.steps(); ++t)
                    preds.push_back(combine(f.weights, test_panel.column(t)));
            } else {
                OnlineNNWeighter nn(static_cast<int>(models.size()), config.nn_learning_rate,
                                    sub_seed(run_seed, "online-nn"));
                for (std::size_t t = 0; t < train_panel.steps(); ++t)
                    nn.step(train_panel.column(t), train_truth[t]);
                WeightVector final_w = nn.infer(train_panel.column(train_panel.steps() - 1));
                for (std::size_t t = 0; t < test_panel.steps(); ++t) {
                    WeightVector w = config.nn_per_sample_weights ? nn.infer(test_panel.column(t))
                                                                  : final_w;
                    preds.push_back(combine(w, test_panel.column(t)));
                }
            }
        } else if (config.strategy.rfind("single:", 0) == 0) {
            std::string want = config.strategy.substr(7);
            std::size_t row = static_cast<std::size_t>(-1);
            for (std::size_t i = 0; i < test_panel.models(); ++i)
                if (test_panel.model_names[i] == want) row = i;
            if (row == static_cast<std::size_t>(-1))
                throw ValidationError("unknown model \"" + want + "\" for single strategy");
            preds = test_panel.predictions[row];
        } else {
            throw ValidationError("unknown strategy \"" + config.strategy + "\"");
        }
    }

    write_predictions(indices, preds, (out / "predictions.csv").string());
    art.files.push_back("predictions.csv");
    write_manifest(config, art, (out / "forecast_manifest.json").string());
    art.files.push_back("forecast_manifest.json");
    return art;
}

RunArtifacts run_compare(const RunConfig& config) {
    TimeSeries series = config.load_series();
    SplitPlan plan = config.make_plan(series);

    CompareConfig cc;
    cc.forecaster_specs = config.forecasters;
    cc.seeds = config.seeds;
    cc.rl_template = config.rl_template();
    cc.rl_episodes = config.rl_episodes;
    cc.nn_learning_rate = config.nn_learning_rate;
    cc.nn_per_sample_weights = config.nn_per_sample_weights;
    cc.feedback = config.feedback;
    cc.band_size = config.band_size;
    cc.smoothing_window = config.smoothing_window;
    if (!config.compare_strategies.empty()) {
        cc.strategies = config.compare_strategies;
    } else {
        cc.strategies = {"rl", "online-nn", "static", "uniform"};
        for (const auto& f : config.forecasters) cc.strategies.push_back("single:" + to_string(f.kind));
    }

    EvalReport report = compare_strategies(series, plan, cc);

    fs::path out(config.out_dir);
    fs::create_directories(out);
    RunArtifacts art;
    write_report_json(report, (out / "report.json").string());
    art.files.push_back("report.json");
    write_report_text(report, (out / "report.txt").string());
    art.files.push_back("report.txt");
    write_reward_curve_csv(report, (out / "reward_curve.csv").string());
    art.files.push_back("reward_curve.csv");
    write_predictions_csv(report, (out / "predictions.csv").string());
    art.files.push_back("predictions.csv");

    {
        json jt;
        for (const auto& s : report.strategies)
            if (!s.failed) jt[s.name] = s.seconds_per_step;
        std::ofstream tout(out / "timings.json");
        tout << jt.dump(2) << '\n';
    }

    if (!report.smoothed_rewards.empty()) {
        write_svg_lines((out / "reward_curve.svg").string(), "smoothed total reward per episode",
                        {{"smoothed reward", report.smoothed_rewards}});
        art.files.push_back("reward_curve.svg");
    }
    if (!report.test_truth.empty()) {
        std::vector<std::pair<std::string, std::vector<double>>> curves;
        curves.emplace_back("truth", report.test_truth);
        for (const auto& [name, preds] : report.test_predictions)
            if (name == "rl" || name == "online-nn") curves.emplace_back(name, preds);
        write_svg_lines((out / "predictions.svg").string(), "test predictions vs truth", curves);
        art.files.push_back("predictions.svg");
    }

    write_manifest(config, art, (out / "manifest.json").string());
    art.files.push_back("manifest.json");

    bool any_failed = false;
    for (const auto& s : report.strategies) any_failed |= s.failed;
    if (any_failed) throw NumericError("one or more strategies failed; see report");
    return art;
}

}  // namespace rlens
