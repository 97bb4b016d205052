#pragma once

#include <span>
#include <vector>

#include "rlens/common.hpp"

namespace rlens {

// Point on the M-simplex: entries in [0,1], summing to 1 within 1e-9.
// Constructed through from_logits (softmax) so downstream code never
// needs constraint handling.
struct WeightVector {
    std::vector<double> w;

    std::size_t size() const { return w.size(); }
    double operator[](std::size_t i) const { return w[i]; }

    void validate() const;

    static WeightVector uniform(std::size_t m);
    static WeightVector from_logits(std::span<const double> logits);
};

// Eq-style linear combination: sum_i w_i * preds_i.
double combine(const WeightVector& weights, std::span<const double> preds);

}  // namespace rlens
