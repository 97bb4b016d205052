#include "rlens/ensemble.hpp"

#include <algorithm>
#include <cmath>

namespace rlens {

void WeightVector::validate() const {
    if (w.empty()) throw ValidationError("empty weight vector");
    double sum = 0.0;
    for (double x : w) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0)
            throw ValidationError("weight outside [0,1]");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("weights do not sum to 1");
}

WeightVector WeightVector::uniform(std::size_t m) {
    if (m == 0) throw ValidationError("weight vector needs at least one entry");
    WeightVector out;
    out.w.assign(m, 1.0 / static_cast<double>(m));
    return out;
}

WeightVector WeightVector::from_logits(std::span<const double> logits) {
    if (logits.empty()) throw ValidationError("empty logit vector");
    double mx = logits[0];
    for (double x : logits) {
        if (!std::isfinite(x)) throw ValidationError("non-finite logit");
        mx = std::max(mx, x);
    }
    WeightVector out;
    out.w.resize(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.w[i] = std::exp(logits[i] - mx);
        sum += out.w[i];
    }
    for (double& x : out.w) x /= sum;
    // renormalize once more to guard accumulation error in long runs
    double s2 = 0.0;
    for (double x : out.w) s2 += x;
    for (double& x : out.w) x /= s2;
    return out;
}

double combine(const WeightVector& weights, std::span<const double> preds) {
    if (weights.size() != preds.size()) throw ValidationError("weight/prediction dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!std::isfinite(preds[i])) throw ValidationError("non-finite prediction in combine");
        acc += weights[i] * preds[i];
    }
    return acc;
}

}  // namespace rlens
