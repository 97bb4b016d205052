#pragma once

#include <span>
#include <string>
#include <vector>

#include "rlens/ensemble.hpp"
#include "rlens/forecasters.hpp"

namespace rlens {

// Online neural weighter: M -> 4 -> 4 -> M, tanh hidden, softmax output.
// One SGD step per arriving sample on (truth - combined prediction)^2.
class OnlineNNWeighter {
  public:
    OnlineNNWeighter(int n_models, double learning_rate, std::uint64_t seed);
    OnlineNNWeighter(int n_models, double learning_rate, std::vector<double> params);

    int n_models() const { return m_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    double learning_rate() const { return lr_; }

    // Pure forward pass (weights used for this sample's prediction).
    WeightVector infer(std::span<const double> preds) const;

    // Forward pass, then one gradient step. Returns the pre-update
    // weights. Rolls parameters back and throws on a non-finite loss.
    WeightVector step(std::span<const double> preds, double truth);

    // Squared prediction error at the current parameters; grad (if
    // non-null) receives d loss / d params.
    double loss(std::span<const double> preds, double truth,
                std::vector<double>* grad = nullptr) const;

    std::string to_json() const;
    static OnlineNNWeighter from_json(const std::string& text);
    void save(const std::string& path) const;
    static OnlineNNWeighter load(const std::string& path);

  private:
    std::vector<double> forward(std::span<const double> preds, std::vector<double>* cache) const;

    int m_;
    double lr_;
    std::vector<double> params_;
};

// Static simplex-constrained least squares over the whole panel,
// solved by gradient descent in softmax logit space.
struct StaticFitResult {
    WeightVector weights;
    double objective = 0.0;  // mean squared error at the returned weights
    bool converged = true;
    long iterations = 0;
};

StaticFitResult fit_static_weights(const ForecastPanel& panel, std::span<const double> truth,
                                   double grad_tol = 1e-8, long max_iters = 200000);

// Panel-wide mean squared error of a fixed weight vector (the objective
// fit_static_weights minimizes).
double static_objective(const ForecastPanel& panel, std::span<const double> truth,
                        const WeightVector& w);

}  // namespace rlens
