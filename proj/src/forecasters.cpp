#include "rlens/forecasters.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rlens/models.hpp"

namespace rlens {

ForecasterKind forecaster_kind_from_string(const std::string& s) {
    if (s == "ar-least-squares") return ForecasterKind::ArLeastSquares;
    if (s == "feedforward-net") return ForecasterKind::FeedforwardNet;
    if (s == "recurrent-net") return ForecasterKind::RecurrentNet;
    if (s == "bagged-trees") return ForecasterKind::BaggedTrees;
    throw ValidationError("unknown forecaster kind \"" + s + "\"");
}

std::string to_string(ForecasterKind k) {
    switch (k) {
        case ForecasterKind::ArLeastSquares: return "ar-least-squares";
        case ForecasterKind::FeedforwardNet: return "feedforward-net";
        case ForecasterKind::RecurrentNet: return "recurrent-net";
        case ForecasterKind::BaggedTrees: return "bagged-trees";
    }
    return "?";
}

void ForecasterSpec::validate() const {
    if (lag_order < 1) throw ValidationError("lag_order must be >= 1");
    auto positive = [&](const std::string& key) {
        auto it = hyperparams.find(key);
        if (it != hyperparams.end() && it->second <= 0.0)
            throw ValidationError("hyperparameter " + key + " must be positive");
    };
    for (const char* key : {"hidden1", "hidden2", "hidden", "trees", "learning_rate", "epochs",
                            "min_leaf", "bptt_window"})
        positive(key);
    auto it = hyperparams.find("max_depth");
    if (it != hyperparams.end() && it->second < 0.0)
        throw ValidationError("hyperparameter max_depth must be nonnegative");
}

void Forecaster::check_history(std::span<const double> history) const {
    if (static_cast<int>(history.size()) != lag_order())
        throw ValidationError(name() + ": history length " + std::to_string(history.size()) +
                              " != lag order " + std::to_string(lag_order()));
    for (double v : history)
        if (!std::isfinite(v)) throw ValidationError(name() + ": non-finite history value");
}

LagDataset make_lag_dataset(const TimeSeries& series, const std::vector<IndexRange>& segments,
                            int lag_order) {
    LagDataset data;
    for (const auto& seg : segments) {
        for (long t = seg.first + lag_order; t <= seg.last; ++t) {
            std::vector<double> x(static_cast<std::size_t>(lag_order));
            for (int k = 0; k < lag_order; ++k)
                x[static_cast<std::size_t>(k)] = series.at(t - lag_order + k);
            data.inputs.push_back(std::move(x));
            data.targets.push_back(series.at(t));
        }
    }
    return data;
}

std::unique_ptr<Forecaster> fit(const ForecasterSpec& spec, const TimeSeries& series,
                                const std::vector<IndexRange>& train_segments) {
    spec.validate();
    LagDataset data = make_lag_dataset(series, train_segments, spec.lag_order);
    if (data.inputs.size() < 2)
        throw ValidationError("insufficient training data: need more than lag_order + 1 samples");
    switch (spec.kind) {
        case ForecasterKind::ArLeastSquares:
            return std::make_unique<ArForecaster>(ArForecaster::fit(spec, data));
        case ForecasterKind::FeedforwardNet:
            return std::make_unique<FeedforwardNet>(FeedforwardNet::fit(spec, data));
        case ForecasterKind::RecurrentNet:
            return std::make_unique<RecurrentNet>(RecurrentNet::fit(spec, data));
        case ForecasterKind::BaggedTrees:
            return std::make_unique<BaggedTrees>(BaggedTrees::fit(spec, data));
    }
    throw ValidationError("unreachable forecaster kind");
}

std::vector<double> ForecastPanel::column(std::size_t t) const {
    std::vector<double> col(models());
    for (std::size_t i = 0; i < models(); ++i) col[i] = predictions[i][t];
    return col;
}

std::size_t ForecastPanel::find_index(long time_index) const {
    auto it = std::lower_bound(time_indices.begin(), time_indices.end(), time_index);
    if (it == time_indices.end() || *it != time_index) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(it - time_indices.begin());
}

void ForecastPanel::validate() const {
    if (models() < 2) throw ValidationError("panel needs at least 2 models");
    if (model_names.size() != models()) throw ValidationError("panel name/row count mismatch");
    for (std::size_t t = 1; t < time_indices.size(); ++t)
        if (time_indices[t] <= time_indices[t - 1])
            throw ValidationError("panel time indices not strictly increasing");
    for (const auto& row : predictions) {
        if (row.size() != steps()) throw ValidationError("panel row length mismatch");
        if (!all_finite(row)) throw ValidationError("non-finite entry in panel");
    }
}

ForecastPanel build_panel(const std::vector<const Forecaster*>& models, const TimeSeries& series,
                          const std::vector<IndexRange>& indices) {
    if (models.size() < 2) throw ValidationError("build_panel needs at least 2 models");
    ForecastPanel panel;
    panel.predictions.resize(models.size());
    for (const auto* m : models) panel.model_names.push_back(m->name());

    for (const auto& range : indices) {
        // per-model rolling history; the model's own predictions stand in
        // for missing truth inside the range
        std::vector<std::deque<double>> hist(models.size());
        for (std::size_t i = 0; i < models.size(); ++i) {
            int lag = models[i]->lag_order();
            for (long t = range.first - lag; t < range.first; ++t) {
                if (!series.in_range(t) || series.is_missing(t))
                    throw ValidationError("index " + std::to_string(range.first) +
                                          " lacks " + std::to_string(lag) + " known preceding values");
                hist[i].push_back(series.at(t));
            }
        }
        for (long t = range.first; t <= range.last; ++t) {
            for (std::size_t i = 0; i < models.size(); ++i) {
                std::vector<double> window(hist[i].begin(), hist[i].end());
                double pred = models[i]->predict_next(window);
                if (!std::isfinite(pred))
                    throw NumericError(models[i]->name() + ": non-finite prediction at index " +
                                       std::to_string(t));
                panel.predictions[i].push_back(pred);
                // a masked index with a retained finite value still feeds
                // the lag window, matching the online inference loop
                double next = (series.in_range(t) && std::isfinite(series.raw_at(t)))
                                  ? series.raw_at(t)
                                  : pred;
                hist[i].pop_front();
                hist[i].push_back(next);
            }
            panel.time_indices.push_back(t);
        }
    }
    panel.validate();
    return panel;
}

std::unique_ptr<Forecaster> forecaster_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    std::string kind = j.at("kind").get<std::string>();
    int lag = j.at("lag").get<int>();

    if (kind == "ar-least-squares") {
        auto coeffs = j.at("coefficients").get<std::vector<double>>();
        return std::make_unique<ArForecaster>(lag, std::move(coeffs));
    }
    if (kind == "feedforward-net") {
        return std::make_unique<FeedforwardNet>(
            lag, j.at("hidden1").get<int>(), j.at("hidden2").get<int>(),
            j.at("mu").get<double>(), j.at("sigma").get<double>(),
            j.at("params").get<std::vector<double>>());
    }
    if (kind == "recurrent-net") {
        return std::make_unique<RecurrentNet>(lag, j.at("hidden").get<int>(),
                                              j.at("mu").get<double>(), j.at("sigma").get<double>(),
                                              j.at("params").get<std::vector<double>>());
    }
    if (kind == "bagged-trees") {
        std::vector<std::vector<TreeNode>> trees;
        for (const auto& jt : j.at("trees")) {
            std::vector<TreeNode> nodes;
            for (const auto& jn : jt) {
                TreeNode n;
                n.feature = jn.at("f").get<int>();
                if (n.feature >= 0) {
                    n.threshold = jn.at("t").get<double>();
                    n.left = jn.at("l").get<int>();
                    n.right = jn.at("r").get<int>();
                } else {
                    n.value = jn.at("v").get<double>();
                }
                nodes.push_back(n);
            }
            trees.push_back(std::move(nodes));
        }
        return std::make_unique<BaggedTrees>(lag, std::move(trees));
    }
    throw ParseError("unknown forecaster kind in JSON: " + kind);
}

void save_forecaster(const Forecaster& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << model.to_json() << '\n';
    if (!out) throw IoError("write failed for " + path);
}

std::unique_ptr<Forecaster> load_forecaster(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return forecaster_from_json(ss.str());
}

}  // namespace rlens
