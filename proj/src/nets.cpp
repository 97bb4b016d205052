#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "rlens/models.hpp"

namespace rlens {

namespace {

void clip_norm(std::vector<double>& g, double max_norm) {
    double n2 = 0.0;
    for (double x : g) n2 += x * x;
    double n = std::sqrt(n2);
    if (n > max_norm)
        for (double& x : g) x *= max_norm / n;
}

std::pair<double, double> target_stats(const LagDataset& data) {
    double mu = std::accumulate(data.targets.begin(), data.targets.end(), 0.0) /
                static_cast<double>(data.targets.size());
    double var = 0.0;
    for (double t : data.targets) var += (t - mu) * (t - mu);
    var /= static_cast<double>(data.targets.size());
    double sigma = std::sqrt(var);
    if (sigma < 1e-12) sigma = 1.0;
    return {mu, sigma};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------- FFN

FeedforwardNet::FeedforwardNet(int lag, int hidden1, int hidden2, double mu, double sigma,
                               std::vector<double> params)
    : lag_(lag), h1_(hidden1), h2_(hidden2), mu_(mu), sigma_(sigma), params_(std::move(params)) {
    std::size_t expect = static_cast<std::size_t>(h1_ * lag_ + h1_ + h2_ * h1_ + h2_ + h2_ + 1);
    if (params_.size() != expect) throw ValidationError("feedforward-net: bad parameter count");
}

// cache layout: [x_norm(L), z1(h1), z2(h2), y]
double FeedforwardNet::forward_norm(std::span<const double> x, std::vector<double>* cache) const {
    const double* W1 = params_.data();
    const double* b1 = W1 + h1_ * lag_;
    const double* W2 = b1 + h1_;
    const double* b2 = W2 + h2_ * h1_;
    const double* w3 = b2 + h2_;
    const double b3 = w3[h2_];

    std::vector<double> z1(static_cast<std::size_t>(h1_)), z2(static_cast<std::size_t>(h2_));
    for (int i = 0; i < h1_; ++i) {
        double a = b1[i];
        for (int j = 0; j < lag_; ++j) a += W1[i * lag_ + j] * x[static_cast<std::size_t>(j)];
        z1[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    for (int i = 0; i < h2_; ++i) {
        double a = b2[i];
        for (int j = 0; j < h1_; ++j) a += W2[i * h1_ + j] * z1[static_cast<std::size_t>(j)];
        z2[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    double y = b3;
    for (int i = 0; i < h2_; ++i) y += w3[i] * z2[static_cast<std::size_t>(i)];

    if (cache) {
        cache->clear();
        cache->insert(cache->end(), x.begin(), x.end());
        cache->insert(cache->end(), z1.begin(), z1.end());
        cache->insert(cache->end(), z2.begin(), z2.end());
        cache->push_back(y);
    }
    return y;
}

double FeedforwardNet::loss(std::span<const double> history_raw, double target_raw,
                            std::vector<double>* grad) const {
    check_history(history_raw);
    std::vector<double> x(history_raw.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (history_raw[i] - mu_) / sigma_;
    double t = (target_raw - mu_) / sigma_;

    std::vector<double> cache;
    double y = forward_norm(x, &cache);
    double e = y - t;
    double l = 0.5 * e * e;
    if (!grad) return l;

    grad->assign(params_.size(), 0.0);
    const double* z1 = cache.data() + lag_;
    const double* z2 = z1 + h1_;
    const double* W2 = params_.data() + h1_ * lag_ + h1_;
    const double* w3 = W2 + h2_ * h1_ + h2_;
    double* gW1 = grad->data();
    double* gb1 = gW1 + h1_ * lag_;
    double* gW2 = gb1 + h1_;
    double* gb2 = gW2 + h2_ * h1_;
    double* gw3 = gb2 + h2_;
    double* gb3 = gw3 + h2_;

    *gb3 = e;
    std::vector<double> da2(static_cast<std::size_t>(h2_));
    for (int i = 0; i < h2_; ++i) {
        gw3[i] = e * z2[i];
        da2[static_cast<std::size_t>(i)] = e * w3[i] * (1.0 - z2[i] * z2[i]);
    }
    std::vector<double> dz1(static_cast<std::size_t>(h1_), 0.0);
    for (int i = 0; i < h2_; ++i) {
        gb2[i] = da2[static_cast<std::size_t>(i)];
        for (int j = 0; j < h1_; ++j) {
            gW2[i * h1_ + j] = da2[static_cast<std::size_t>(i)] * z1[j];
            dz1[static_cast<std::size_t>(j)] += W2[i * h1_ + j] * da2[static_cast<std::size_t>(i)];
        }
    }
    for (int i = 0; i < h1_; ++i) {
        double da1 = dz1[static_cast<std::size_t>(i)] * (1.0 - z1[i] * z1[i]);
        gb1[i] = da1;
        for (int j = 0; j < lag_; ++j) gW1[i * lag_ + j] = da1 * x[static_cast<std::size_t>(j)];
    }
    return l;
}

double FeedforwardNet::mean_training_loss(const LagDataset& data) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < data.inputs.size(); ++i)
        acc += loss(data.inputs[i], data.targets[i]);
    return acc / static_cast<double>(data.inputs.size());
}

FeedforwardNet FeedforwardNet::fit(const ForecasterSpec& spec, const LagDataset& data) {
    int h1 = static_cast<int>(spec.hyper_or("hidden1", 8));
    int h2 = static_cast<int>(spec.hyper_or("hidden2", 8));
    double lr = spec.hyper_or("learning_rate", 0.02);
    int epochs = static_cast<int>(spec.hyper_or("epochs", 40));

    auto [mu, sigma] = target_stats(data);
    int L = spec.lag_order;
    std::size_t pcount = static_cast<std::size_t>(h1 * L + h1 + h2 * h1 + h2 + h2 + 1);

    Rng rng(sub_seed(spec.seed, "feedforward-net/init"));
    std::vector<double> params(pcount);
    {
        // fan-in scaled uniform init, block by block
        std::size_t off = 0;
        auto init_block = [&](std::size_t count, int fan_in) {
            double r = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
            std::uniform_real_distribution<double> u(-r, r);
            for (std::size_t i = 0; i < count; ++i) params[off++] = u(rng);
        };
        init_block(static_cast<std::size_t>(h1 * L), L);
        init_block(static_cast<std::size_t>(h1), L);
        init_block(static_cast<std::size_t>(h2 * h1), h1);
        init_block(static_cast<std::size_t>(h2), h1);
        init_block(static_cast<std::size_t>(h2 + 1), h2);
    }

    FeedforwardNet net(L, h1, h2, mu, sigma, std::move(params));
    Rng order_rng(sub_seed(spec.seed, "feedforward-net/order"));
    std::vector<std::size_t> order(data.inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (std::size_t idx : order) {
            double l = net.loss(data.inputs[idx], data.targets[idx], &grad);
            if (!std::isfinite(l)) throw NumericError("feedforward-net: non-finite training loss");
            clip_norm(grad, 5.0);
            for (std::size_t p = 0; p < grad.size(); ++p) net.params_[p] -= lr * grad[p];
        }
    }
    return net;
}

double FeedforwardNet::predict_next(std::span<const double> history) const {
    check_history(history);
    std::vector<double> x(history.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (history[i] - mu_) / sigma_;
    return forward_norm(x, nullptr) * sigma_ + mu_;
}

std::string FeedforwardNet::to_json() const {
    nlohmann::json j;
    j["kind"] = name();
    j["lag"] = lag_;
    j["hidden1"] = h1_;
    j["hidden2"] = h2_;
    j["mu"] = mu_;
    j["sigma"] = sigma_;
    j["params"] = params_;
    return j.dump();
}

// ---------------------------------------------------------------- GRU

// param layout: wz(H) Uz(HxH) bz(H) | wr Ur br | wc Uc bc | wo(H) bo
RecurrentNet::RecurrentNet(int lag, int hidden, double mu, double sigma, std::vector<double> params)
    : lag_(lag), hidden_(hidden), mu_(mu), sigma_(sigma), params_(std::move(params)) {
    std::size_t expect = static_cast<std::size_t>(3 * (hidden_ + hidden_ * hidden_ + hidden_) + hidden_ + 1);
    if (params_.size() != expect) throw ValidationError("recurrent-net: bad parameter count");
}

namespace {
struct GruViews {
    const double *wz, *Uz, *bz, *wr, *Ur, *br, *wc, *Uc, *bc, *wo;
    double bo;
};
GruViews gru_views(const std::vector<double>& p, int H) {
    GruViews v{};
    const double* q = p.data();
    v.wz = q; q += H;
    v.Uz = q; q += H * H;
    v.bz = q; q += H;
    v.wr = q; q += H;
    v.Ur = q; q += H * H;
    v.br = q; q += H;
    v.wc = q; q += H;
    v.Uc = q; q += H * H;
    v.bc = q; q += H;
    v.wo = q; q += H;
    v.bo = *q;
    return v;
}
}  // namespace

double RecurrentNet::forward_norm(std::span<const double> x) const {
    const int H = hidden_;
    auto v = gru_views(params_, H);
    std::vector<double> h(static_cast<std::size_t>(H), 0.0), hn(static_cast<std::size_t>(H));
    std::vector<double> z(static_cast<std::size_t>(H)), r(static_cast<std::size_t>(H)),
        c(static_cast<std::size_t>(H));
    for (double xt : x) {
        for (int i = 0; i < H; ++i) {
            double az = v.wz[i] * xt + v.bz[i];
            double ar = v.wr[i] * xt + v.br[i];
            for (int j = 0; j < H; ++j) {
                az += v.Uz[i * H + j] * h[static_cast<std::size_t>(j)];
                ar += v.Ur[i * H + j] * h[static_cast<std::size_t>(j)];
            }
            z[static_cast<std::size_t>(i)] = sigmoid(az);
            r[static_cast<std::size_t>(i)] = sigmoid(ar);
        }
        for (int i = 0; i < H; ++i) {
            double ac = v.wc[i] * xt + v.bc[i];
            for (int j = 0; j < H; ++j)
                ac += v.Uc[i * H + j] * r[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)];
            c[static_cast<std::size_t>(i)] = std::tanh(ac);
        }
        for (int i = 0; i < H; ++i)
            hn[static_cast<std::size_t>(i)] = (1.0 - z[static_cast<std::size_t>(i)]) * h[static_cast<std::size_t>(i)] +
                                              z[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(i)];
        h = hn;
    }
    double y = v.bo;
    for (int i = 0; i < H; ++i) y += v.wo[i] * h[static_cast<std::size_t>(i)];
    return y;
}

double RecurrentNet::loss(std::span<const double> history_raw, double target_raw,
                          std::vector<double>* grad) const {
    check_history(history_raw);
    const int H = hidden_;
    const std::size_t T = history_raw.size();
    std::vector<double> x(T);
    for (std::size_t i = 0; i < T; ++i) x[i] = (history_raw[i] - mu_) / sigma_;
    double tgt = (target_raw - mu_) / sigma_;

    auto v = gru_views(params_, H);

    // forward with caches
    std::vector<std::vector<double>> hs(T + 1, std::vector<double>(static_cast<std::size_t>(H), 0.0));
    std::vector<std::vector<double>> zs(T, std::vector<double>(static_cast<std::size_t>(H)));
    std::vector<std::vector<double>> rs = zs, cs = zs;
    for (std::size_t t = 0; t < T; ++t) {
        const auto& h = hs[t];
        for (int i = 0; i < H; ++i) {
            double az = v.wz[i] * x[t] + v.bz[i];
            double ar = v.wr[i] * x[t] + v.br[i];
            for (int j = 0; j < H; ++j) {
                az += v.Uz[i * H + j] * h[static_cast<std::size_t>(j)];
                ar += v.Ur[i * H + j] * h[static_cast<std::size_t>(j)];
            }
            zs[t][static_cast<std::size_t>(i)] = sigmoid(az);
            rs[t][static_cast<std::size_t>(i)] = sigmoid(ar);
        }
        for (int i = 0; i < H; ++i) {
            double ac = v.wc[i] * x[t] + v.bc[i];
            for (int j = 0; j < H; ++j)
                ac += v.Uc[i * H + j] * rs[t][static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)];
            cs[t][static_cast<std::size_t>(i)] = std::tanh(ac);
        }
        for (int i = 0; i < H; ++i)
            hs[t + 1][static_cast<std::size_t>(i)] =
                (1.0 - zs[t][static_cast<std::size_t>(i)]) * hs[t][static_cast<std::size_t>(i)] +
                zs[t][static_cast<std::size_t>(i)] * cs[t][static_cast<std::size_t>(i)];
    }
    double y = v.bo;
    for (int i = 0; i < H; ++i) y += v.wo[i] * hs[T][static_cast<std::size_t>(i)];
    double e = y - tgt;
    double l = 0.5 * e * e;
    if (!grad) return l;

    grad->assign(params_.size(), 0.0);
    double* g = grad->data();
    double *gwz = g, *gUz = gwz + H, *gbz = gUz + H * H;
    double *gwr = gbz + H, *gUr = gwr + H, *gbr = gUr + H * H;
    double *gwc = gbr + H, *gUc = gwc + H, *gbc = gUc + H * H;
    double *gwo = gbc + H, *gbo = gwo + H;

    *gbo = e;
    std::vector<double> dh(static_cast<std::size_t>(H));
    for (int i = 0; i < H; ++i) {
        gwo[i] = e * hs[T][static_cast<std::size_t>(i)];
        dh[static_cast<std::size_t>(i)] = e * v.wo[i];
    }
    std::vector<double> daz(static_cast<std::size_t>(H)), dar(static_cast<std::size_t>(H)),
        dac(static_cast<std::size_t>(H)), drh(static_cast<std::size_t>(H)),
        dh_prev(static_cast<std::size_t>(H));
    for (std::size_t t = T; t-- > 0;) {
        const auto& h_prev = hs[t];
        const auto& z = zs[t];
        const auto& r = rs[t];
        const auto& c = cs[t];
        for (int i = 0; i < H; ++i) {
            std::size_t ii = static_cast<std::size_t>(i);
            double dz = dh[ii] * (c[ii] - h_prev[ii]);
            daz[ii] = dz * z[ii] * (1.0 - z[ii]);
            double dc = dh[ii] * z[ii];
            dac[ii] = dc * (1.0 - c[ii] * c[ii]);
            dh_prev[ii] = dh[ii] * (1.0 - z[ii]);
        }
        // rh = r .* h_prev enters through Uc
        std::fill(drh.begin(), drh.end(), 0.0);
        for (int i = 0; i < H; ++i) {
            std::size_t ii = static_cast<std::size_t>(i);
            gwz[i] += daz[ii] * x[t];
            gbz[i] += daz[ii];
            gwc[i] += dac[ii] * x[t];
            gbc[i] += dac[ii];
            for (int j = 0; j < H; ++j) {
                std::size_t jj = static_cast<std::size_t>(j);
                gUz[i * H + j] += daz[ii] * h_prev[jj];
                gUc[i * H + j] += dac[ii] * r[jj] * h_prev[jj];
                drh[jj] += v.Uc[i * H + j] * dac[ii];
            }
        }
        for (int i = 0; i < H; ++i) {
            std::size_t ii = static_cast<std::size_t>(i);
            double dr = drh[ii] * h_prev[ii];
            dar[ii] = dr * r[ii] * (1.0 - r[ii]);
        }
        for (int i = 0; i < H; ++i) {
            std::size_t ii = static_cast<std::size_t>(i);
            gwr[i] += dar[ii] * x[t];
            gbr[i] += dar[ii];
            for (int j = 0; j < H; ++j) {
                std::size_t jj = static_cast<std::size_t>(j);
                gUr[i * H + j] += dar[ii] * h_prev[jj];
                dh_prev[jj] += v.Uz[i * H + j] * daz[ii] + v.Ur[i * H + j] * dar[ii];
            }
        }
        for (int i = 0; i < H; ++i) {
            std::size_t ii = static_cast<std::size_t>(i);
            dh_prev[ii] += drh[ii] * r[ii];
        }
        dh = dh_prev;
    }
    return l;
}

RecurrentNet RecurrentNet::fit(const ForecasterSpec& spec, const LagDataset& data) {
    int H = static_cast<int>(spec.hyper_or("hidden", 6));
    if (H > 8) throw ValidationError("recurrent-net: hidden size capped at 8");
    double lr = spec.hyper_or("learning_rate", 0.02);
    int epochs = static_cast<int>(spec.hyper_or("epochs", 25));
    int window = static_cast<int>(spec.hyper_or("bptt_window", spec.lag_order));
    if (window > spec.lag_order)
        throw ValidationError("recurrent-net: bptt_window must be <= lag_order");

    auto [mu, sigma] = target_stats(data);
    std::size_t pcount = static_cast<std::size_t>(3 * (H + H * H + H) + H + 1);
    Rng rng(sub_seed(spec.seed, "recurrent-net/init"));
    double r0 = 1.0 / std::sqrt(static_cast<double>(H));
    std::uniform_real_distribution<double> u(-r0, r0);
    std::vector<double> params(pcount);
    for (double& p : params) p = u(rng);

    RecurrentNet net(spec.lag_order, H, mu, sigma, std::move(params));
    Rng order_rng(sub_seed(spec.seed, "recurrent-net/order"));
    std::vector<std::size_t> order(data.inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad;
    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (std::size_t idx : order) {
            // truncate the window to the newest `window` lags
            std::span<const double> full(data.inputs[idx]);
            std::span<const double> win = full.subspan(full.size() - static_cast<std::size_t>(window));
            if (window == spec.lag_order) {
                double l = net.loss(full, data.targets[idx], &grad);
                if (!std::isfinite(l)) throw NumericError("recurrent-net: non-finite training loss");
            } else {
                RecurrentNet sub(window, H, net.mu_, net.sigma_, net.params_);
                double l = sub.loss(win, data.targets[idx], &grad);
                if (!std::isfinite(l)) throw NumericError("recurrent-net: non-finite training loss");
            }
            clip_norm(grad, 5.0);
            for (std::size_t p = 0; p < grad.size(); ++p) net.params_[p] -= lr * grad[p];
        }
    }
    return net;
}

double RecurrentNet::predict_next(std::span<const double> history) const {
    check_history(history);
    std::vector<double> x(history.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (history[i] - mu_) / sigma_;
    return forward_norm(x) * sigma_ + mu_;
}

std::string RecurrentNet::to_json() const {
    nlohmann::json j;
    j["kind"] = name();
    j["lag"] = lag_;
    j["hidden"] = hidden_;
    j["mu"] = mu_;
    j["sigma"] = sigma_;
    j["params"] = params_;
    return j.dump();
}

}  // namespace rlens
