#pragma once

// Concrete forecaster implementations. Exposed (rather than hidden behind
// fit()) so the gradient-check and serialization tests can reach the
// parameter vectors directly.

#include <span>
#include <vector>

#include "rlens/forecasters.hpp"

namespace rlens {

// Least-squares solve of A x = b (n x m, n >= m) via Householder QR with
// column pivoting; rank-deficient columns get zero coefficients.
std::vector<double> solve_least_squares(const std::vector<std::vector<double>>& rows,
                                        const std::vector<double>& rhs, std::size_t m);

class ArForecaster final : public Forecaster {
  public:
    ArForecaster(int lag, std::vector<double> coeffs);
    static ArForecaster fit(const ForecasterSpec& spec, const LagDataset& data);

    std::string name() const override { return "ar-least-squares"; }
    int lag_order() const override { return lag_; }
    double predict_next(std::span<const double> history) const override;
    std::string to_json() const override;

    const std::vector<double>& coefficients() const { return coeffs_; }

  private:
    int lag_;
    std::vector<double> coeffs_;  // coeffs_[k] multiplies history[k] (oldest -> newest)
};

// Two-hidden-layer tanh net on the lag window, linear output, trained by
// SGD on (input,target) pairs in series units normalized by the training
// mean/std.
class FeedforwardNet final : public Forecaster {
  public:
    FeedforwardNet(int lag, int hidden1, int hidden2, double mu, double sigma,
                   std::vector<double> params);
    static FeedforwardNet fit(const ForecasterSpec& spec, const LagDataset& data);

    std::string name() const override { return "feedforward-net"; }
    int lag_order() const override { return lag_; }
    double predict_next(std::span<const double> history) const override;
    std::string to_json() const override;

    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // Half squared error in normalized units; grad (if non-null) receives
    // d loss / d params, overwritten.
    double loss(std::span<const double> history_raw, double target_raw,
                std::vector<double>* grad = nullptr) const;
    double mean_training_loss(const LagDataset& data) const;

  private:
    double forward_norm(std::span<const double> x_norm, std::vector<double>* cache) const;

    int lag_, h1_, h2_;
    double mu_ = 0.0, sigma_ = 1.0;
    std::vector<double> params_;
};

// Single-layer GRU over the lag window (scalar input per step, h0 = 0),
// linear readout from the final hidden state. Trained by backpropagation
// through the window, which is the truncation horizon.
class RecurrentNet final : public Forecaster {
  public:
    RecurrentNet(int lag, int hidden, double mu, double sigma, std::vector<double> params);
    static RecurrentNet fit(const ForecasterSpec& spec, const LagDataset& data);

    std::string name() const override { return "recurrent-net"; }
    int lag_order() const override { return lag_; }
    double predict_next(std::span<const double> history) const override;
    std::string to_json() const override;

    std::size_t param_count() const { return params_.size(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    int hidden_size() const { return hidden_; }

    double loss(std::span<const double> history_raw, double target_raw,
                std::vector<double>* grad = nullptr) const;

  private:
    double forward_norm(std::span<const double> x_norm) const;

    int lag_, hidden_;
    double mu_ = 0.0, sigma_ = 1.0;
    std::vector<double> params_;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
};

class BaggedTrees final : public Forecaster {
  public:
    BaggedTrees(int lag, std::vector<std::vector<TreeNode>> trees);
    static BaggedTrees fit(const ForecasterSpec& spec, const LagDataset& data);

    std::string name() const override { return "bagged-trees"; }
    int lag_order() const override { return lag_; }
    double predict_next(std::span<const double> history) const override;
    std::string to_json() const override;

    std::size_t tree_count() const { return trees_.size(); }

  private:
    int lag_;
    std::vector<std::vector<TreeNode>> trees_;
};

}  // namespace rlens
