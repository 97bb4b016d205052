#include "rlens/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace rlens {

namespace {
constexpr int kHidden = 4;

std::size_t nn_param_count(int m) {
    return static_cast<std::size_t>(kHidden * m + kHidden + kHidden * kHidden + kHidden +
                                    m * kHidden + m);
}
}  // namespace

OnlineNNWeighter::OnlineNNWeighter(int n_models, double learning_rate, std::uint64_t seed)
    : m_(n_models), lr_(learning_rate) {
    if (m_ < 2) throw ValidationError("online NN needs >= 2 models");
    if (lr_ < 0.0) throw ValidationError("learning rate must be >= 0");
    Rng rng(sub_seed(seed, "online-nn/init"));
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    params_.resize(nn_param_count(m_));
    for (double& p : params_) p = u(rng);
}

OnlineNNWeighter::OnlineNNWeighter(int n_models, double learning_rate, std::vector<double> params)
    : m_(n_models), lr_(learning_rate), params_(std::move(params)) {
    if (m_ < 2) throw ValidationError("online NN needs >= 2 models");
    if (params_.size() != nn_param_count(m_)) throw ValidationError("online NN parameter count mismatch");
}

// cache layout: [x(M), z1(4), z2(4), w(M)]
std::vector<double> OnlineNNWeighter::forward(std::span<const double> preds,
                                              std::vector<double>* cache) const {
    if (static_cast<int>(preds.size()) != m_) throw ValidationError("online NN input size mismatch");
    for (double p : preds)
        if (!std::isfinite(p)) throw ValidationError("non-finite prediction input");

    // per-sample standardization keeps the tanh layers in range whatever
    // the series scale
    double mean = std::accumulate(preds.begin(), preds.end(), 0.0) / m_;
    double var = 0.0;
    for (double p : preds) var += (p - mean) * (p - mean);
    double sd = std::sqrt(var / m_) + 1e-8;
    std::vector<double> x(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) x[i] = (preds[i] - mean) / sd;

    const double* W1 = params_.data();
    const double* b1 = W1 + kHidden * m_;
    const double* W2 = b1 + kHidden;
    const double* b2 = W2 + kHidden * kHidden;
    const double* W3 = b2 + kHidden;
    const double* b3 = W3 + m_ * kHidden;

    std::vector<double> z1(kHidden), z2(kHidden), a3(static_cast<std::size_t>(m_));
    for (int i = 0; i < kHidden; ++i) {
        double a = b1[i];
        for (int j = 0; j < m_; ++j) a += W1[i * m_ + j] * x[static_cast<std::size_t>(j)];
        z1[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    for (int i = 0; i < kHidden; ++i) {
        double a = b2[i];
        for (int j = 0; j < kHidden; ++j) a += W2[i * kHidden + j] * z1[static_cast<std::size_t>(j)];
        z2[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    for (int i = 0; i < m_; ++i) {
        double a = b3[i];
        for (int j = 0; j < kHidden; ++j) a += W3[i * kHidden + j] * z2[static_cast<std::size_t>(j)];
        a3[static_cast<std::size_t>(i)] = a;
    }
    WeightVector w = WeightVector::from_logits(a3);

    if (cache) {
        cache->clear();
        cache->insert(cache->end(), x.begin(), x.end());
        cache->insert(cache->end(), z1.begin(), z1.end());
        cache->insert(cache->end(), z2.begin(), z2.end());
        cache->insert(cache->end(), w.w.begin(), w.w.end());
    }
    return w.w;
}

WeightVector OnlineNNWeighter::infer(std::span<const double> preds) const {
    WeightVector out;
    out.w = forward(preds, nullptr);
    return out;
}

double OnlineNNWeighter::loss(std::span<const double> preds, double truth,
                              std::vector<double>* grad) const {
    std::vector<double> cache;
    std::vector<double> w = forward(preds, &cache);
    double yhat = 0.0;
    for (int i = 0; i < m_; ++i) yhat += w[static_cast<std::size_t>(i)] * preds[static_cast<std::size_t>(i)];
    double e = truth - yhat;
    double l = e * e;
    if (!grad) return l;

    const double* x = cache.data();
    const double* z1 = x + m_;
    const double* z2 = z1 + kHidden;
    const double* wv = z2 + kHidden;
    const double* W2 = params_.data() + kHidden * m_ + kHidden;
    const double* W3 = W2 + kHidden * kHidden + kHidden;

    grad->assign(params_.size(), 0.0);
    double* gW1 = grad->data();
    double* gb1 = gW1 + kHidden * m_;
    double* gW2 = gb1 + kHidden;
    double* gb2 = gW2 + kHidden * kHidden;
    double* gW3 = gb2 + kHidden;
    double* gb3 = gW3 + m_ * kHidden;

    // d loss / d w_i = -2 e preds_i; softmax backward into the logits
    std::vector<double> dw(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) dw[static_cast<std::size_t>(i)] = -2.0 * e * preds[static_cast<std::size_t>(i)];
    double dot = 0.0;
    for (int i = 0; i < m_; ++i) dot += dw[static_cast<std::size_t>(i)] * wv[i];
    std::vector<double> da3(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i)
        da3[static_cast<std::size_t>(i)] = wv[i] * (dw[static_cast<std::size_t>(i)] - dot);

    std::vector<double> dz2(kHidden, 0.0);
    for (int i = 0; i < m_; ++i) {
        gb3[i] = da3[static_cast<std::size_t>(i)];
        for (int j = 0; j < kHidden; ++j) {
            gW3[i * kHidden + j] = da3[static_cast<std::size_t>(i)] * z2[j];
            dz2[static_cast<std::size_t>(j)] += W3[i * kHidden + j] * da3[static_cast<std::size_t>(i)];
        }
    }
    std::vector<double> dz1(kHidden, 0.0);
    for (int i = 0; i < kHidden; ++i) {
        double da2 = dz2[static_cast<std::size_t>(i)] * (1.0 - z2[i] * z2[i]);
        gb2[i] = da2;
        for (int j = 0; j < kHidden; ++j) {
            gW2[i * kHidden + j] = da2 * z1[j];
            dz1[static_cast<std::size_t>(j)] += W2[i * kHidden + j] * da2;
        }
    }
    for (int i = 0; i < kHidden; ++i) {
        double da1 = dz1[static_cast<std::size_t>(i)] * (1.0 - z1[i] * z1[i]);
        gb1[i] = da1;
        for (int j = 0; j < m_; ++j) gW1[i * m_ + j] = da1 * x[j];
    }
    return l;
}

WeightVector OnlineNNWeighter::step(std::span<const double> preds, double truth) {
    std::vector<double> grad;
    double l = loss(preds, truth, &grad);
    if (!std::isfinite(l)) throw NumericError("online NN: non-finite loss, parameters unchanged");
    WeightVector pre = infer(preds);
    if (lr_ > 0.0) {
        double n2 = 0.0;
        for (double g : grad) n2 += g * g;
        double n = std::sqrt(n2);
        double scale = n > 10.0 ? 10.0 / n : 1.0;  // keeps raw-scale targets from blowing up a step
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr_ * scale * grad[i];
        if (!all_finite(params_)) throw NumericError("online NN: non-finite parameters after step");
    }
    return pre;
}

std::string OnlineNNWeighter::to_json() const {
    nlohmann::json j;
    j["kind"] = "online-nn-weighter";
    j["n_models"] = m_;
    j["learning_rate"] = lr_;
    j["params"] = params_;
    return j.dump(2);
}

OnlineNNWeighter OnlineNNWeighter::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("kind").get<std::string>() != "online-nn-weighter")
        throw ParseError("not an online NN weighter file");
    return OnlineNNWeighter(j.at("n_models").get<int>(), j.at("learning_rate").get<double>(),
                            j.at("params").get<std::vector<double>>());
}

void OnlineNNWeighter::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json() << '\n';
}

OnlineNNWeighter OnlineNNWeighter::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

double static_objective(const ForecastPanel& panel, std::span<const double> truth,
                        const WeightVector& w) {
    if (truth.size() != panel.steps()) throw ValidationError("truth/panel length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        double yhat = 0.0;
        for (std::size_t i = 0; i < panel.models(); ++i) yhat += w[i] * panel.predictions[i][t];
        num += (truth[t] - yhat) * (truth[t] - yhat);
        den += truth[t] * truth[t];
    }
    if (den <= 0.0) throw ValidationError("all-zero truth in static objective");
    return num / den;
}

StaticFitResult fit_static_weights(const ForecastPanel& panel, std::span<const double> truth,
                                   double grad_tol, long max_iters) {
    panel.validate();
    const std::size_t M = panel.models();
    if (truth.size() != panel.steps()) throw ValidationError("truth/panel length mismatch");
    if (truth.size() < M) throw ValidationError("fit_static_weights needs >= M samples");

    double den = 0.0;
    for (double y : truth) den += y * y;
    if (den <= 0.0) throw ValidationError("all-zero truth");

    std::vector<double> theta(M, 0.0);
    auto eval = [&](const std::vector<double>& th, std::vector<double>* grad) {
        WeightVector w = WeightVector::from_logits(th);
        double num = 0.0;
        std::vector<double> dw(M, 0.0);
        for (std::size_t t = 0; t < truth.size(); ++t) {
            double yhat = 0.0;
            for (std::size_t i = 0; i < M; ++i) yhat += w[i] * panel.predictions[i][t];
            double e = truth[t] - yhat;
            num += e * e;
            if (grad)
                for (std::size_t i = 0; i < M; ++i) dw[i] += -2.0 * e * panel.predictions[i][t] / den;
        }
        if (grad) {
            double dot = 0.0;
            for (std::size_t i = 0; i < M; ++i) dot += dw[i] * w[i];
            grad->resize(M);
            for (std::size_t i = 0; i < M; ++i) (*grad)[i] = w[i] * (dw[i] - dot);
        }
        return num / den;
    };

    std::vector<double> grad;
    double f = eval(theta, &grad);
    double eta = 1.0;
    long it = 0;
    for (; it < max_iters; ++it) {
        double gnorm = 0.0;
        for (double g : grad) gnorm += g * g;
        gnorm = std::sqrt(gnorm);
        if (gnorm <= grad_tol) break;

        std::vector<double> trial(M);
        for (std::size_t i = 0; i < M; ++i) trial[i] = theta[i] - eta * grad[i];
        double ft = eval(trial, nullptr);
        if (ft <= f - 1e-4 * eta * gnorm * gnorm) {
            theta = std::move(trial);
            f = eval(theta, &grad);
            eta = std::min(eta * 1.25, 1e8);
        } else {
            eta *= 0.5;
            if (eta < 1e-16) break;  // stalled at numerical precision
        }
    }

    StaticFitResult res;
    res.weights = WeightVector::from_logits(theta);
    res.objective = f;
    res.iterations = it;
    double gnorm = 0.0;
    for (double g : grad) gnorm += g * g;
    res.converged = std::sqrt(gnorm) <= grad_tol || eta < 1e-16;
    return res;
}

}  // namespace rlens
