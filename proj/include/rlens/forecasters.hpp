#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlens/common.hpp"
#include "rlens/series.hpp"

namespace rlens {

enum class ForecasterKind { ArLeastSquares, FeedforwardNet, RecurrentNet, BaggedTrees };

ForecasterKind forecaster_kind_from_string(const std::string& s);
std::string to_string(ForecasterKind k);

struct ForecasterSpec {
    ForecasterKind kind = ForecasterKind::ArLeastSquares;
    int lag_order = 5;
    std::map<std::string, double> hyperparams;
    std::uint64_t seed = 0;

    double hyper_or(const std::string& key, double fallback) const {
        auto it = hyperparams.find(key);
        return it == hyperparams.end() ? fallback : it->second;
    }
    void validate() const;
};

// One-step-ahead forecaster. Trained instances are immutable;
// predict_next is pure (history fed oldest -> newest, length = lag_order).
class Forecaster {
  public:
    virtual ~Forecaster() = default;
    virtual std::string name() const = 0;
    virtual int lag_order() const = 0;
    virtual double predict_next(std::span<const double> history) const = 0;
    virtual std::string to_json() const = 0;

  protected:
    void check_history(std::span<const double> history) const;
};

// Trains one forecaster on the given segments jointly; no lag window
// crosses a segment boundary. Deterministic given spec.seed.
std::unique_ptr<Forecaster> fit(const ForecasterSpec& spec, const TimeSeries& series,
                                const std::vector<IndexRange>& train_segments);

std::unique_ptr<Forecaster> forecaster_from_json(const std::string& json_text);
void save_forecaster(const Forecaster& model, const std::string& path);
std::unique_ptr<Forecaster> load_forecaster(const std::string& path);

struct ForecastPanel {
    std::vector<std::vector<double>> predictions;  // M rows x T columns
    std::vector<std::string> model_names;
    std::vector<long> time_indices;

    std::size_t models() const { return predictions.size(); }
    std::size_t steps() const { return time_indices.size(); }

    // Column t as a length-M vector.
    std::vector<double> column(std::size_t t) const;

    // Position of an absolute time index, or npos.
    std::size_t find_index(long time_index) const;

    void validate() const;
};

// Rolling one-step-ahead panel over `indices`. Known true values feed the
// lag windows; at indices whose lags are missing (or fall inside the range
// being predicted and are themselves missing), each model consumes its own
// prior predictions.
ForecastPanel build_panel(const std::vector<const Forecaster*>& models, const TimeSeries& series,
                          const std::vector<IndexRange>& indices);

// Training rows (lag window -> next value) that never cross a segment
// boundary. Shared by the lag-feature forecasters.
struct LagDataset {
    std::vector<std::vector<double>> inputs;  // each length L, oldest -> newest
    std::vector<double> targets;
};
LagDataset make_lag_dataset(const TimeSeries& series, const std::vector<IndexRange>& segments,
                            int lag_order);

}  // namespace rlens
