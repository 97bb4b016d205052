#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "rlens/models.hpp"

namespace rlens {

namespace {

struct TreeBuilder {
    const std::vector<std::vector<double>>& x;
    const std::vector<double>& y;
    int max_depth;
    int min_leaf;
    int mtry;
    Rng& rng;
    std::vector<TreeNode> nodes;

    int build(std::vector<std::size_t>& idx, int depth) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i : idx) {
            sum += y[i];
            sum2 += y[i] * y[i];
        }
        double n = static_cast<double>(idx.size());
        double mean = sum / n;
        double sse = sum2 - sum * sum / n;

        int node_id = static_cast<int>(nodes.size());
        nodes.push_back({});
        if (depth >= max_depth || static_cast<int>(idx.size()) < 2 * min_leaf || sse <= 1e-12) {
            nodes[static_cast<std::size_t>(node_id)].value = mean;
            return node_id;
        }

        std::size_t nfeat = x[0].size();
        std::vector<int> feats(nfeat);
        std::iota(feats.begin(), feats.end(), 0);
        if (mtry < static_cast<int>(nfeat)) {
            std::shuffle(feats.begin(), feats.end(), rng);
            feats.resize(static_cast<std::size_t>(mtry));
            std::sort(feats.begin(), feats.end());  // deterministic scan order
        }

        int best_feat = -1;
        double best_thresh = 0.0, best_score = sse;
        std::vector<std::size_t> sorted = idx;
        for (int f : feats) {
            std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                double va = x[a][static_cast<std::size_t>(f)], vb = x[b][static_cast<std::size_t>(f)];
                return va != vb ? va < vb : a < b;
            });
            double lsum = 0.0, lsum2 = 0.0;
            for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
                double v = y[sorted[k]];
                lsum += v;
                lsum2 += v * v;
                double lv = x[sorted[k]][static_cast<std::size_t>(f)];
                double rv = x[sorted[k + 1]][static_cast<std::size_t>(f)];
                if (lv == rv) continue;
                std::size_t ln = k + 1, rn = sorted.size() - ln;
                if (static_cast<int>(ln) < min_leaf || static_cast<int>(rn) < min_leaf) continue;
                double rsum = sum - lsum, rsum2 = sum2 - lsum2;
                double score = (lsum2 - lsum * lsum / static_cast<double>(ln)) +
                               (rsum2 - rsum * rsum / static_cast<double>(rn));
                if (score < best_score - 1e-12) {
                    best_score = score;
                    best_feat = f;
                    best_thresh = 0.5 * (lv + rv);
                }
            }
        }
        if (best_feat < 0) {
            nodes[static_cast<std::size_t>(node_id)].value = mean;
            return node_id;
        }

        std::vector<std::size_t> left, right;
        for (std::size_t i : idx)
            (x[i][static_cast<std::size_t>(best_feat)] <= best_thresh ? left : right).push_back(i);
        nodes[static_cast<std::size_t>(node_id)].feature = best_feat;
        nodes[static_cast<std::size_t>(node_id)].threshold = best_thresh;
        int l = build(left, depth + 1);
        int r = build(right, depth + 1);
        nodes[static_cast<std::size_t>(node_id)].left = l;
        nodes[static_cast<std::size_t>(node_id)].right = r;
        return node_id;
    }
};

double tree_predict(const std::vector<TreeNode>& nodes, std::span<const double> x) {
    int cur = 0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(cur)];
        cur = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(cur)].value;
}

}  // namespace

BaggedTrees::BaggedTrees(int lag, std::vector<std::vector<TreeNode>> trees)
    : lag_(lag), trees_(std::move(trees)) {
    if (trees_.empty()) throw ValidationError("bagged-trees: no trees");
}

BaggedTrees BaggedTrees::fit(const ForecasterSpec& spec, const LagDataset& data) {
    int n_trees = static_cast<int>(spec.hyper_or("trees", 50));
    int max_depth = static_cast<int>(spec.hyper_or("max_depth", 8));
    int min_leaf = static_cast<int>(spec.hyper_or("min_leaf", 3));
    bool bootstrap = spec.hyper_or("bootstrap", 1.0) != 0.0;
    int mtry = static_cast<int>(spec.hyper_or("mtry", static_cast<double>(spec.lag_order)));
    mtry = std::clamp(mtry, 1, spec.lag_order);

    // canonicalize row order so the seeded bootstrap is invariant to how
    // the caller assembled the dataset
    std::vector<std::size_t> canon(data.inputs.size());
    std::iota(canon.begin(), canon.end(), 0);
    std::sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
        if (data.inputs[a] != data.inputs[b]) return data.inputs[a] < data.inputs[b];
        return data.targets[a] < data.targets[b];
    });
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    xs.reserve(canon.size());
    ys.reserve(canon.size());
    for (std::size_t i : canon) {
        xs.push_back(data.inputs[i]);
        ys.push_back(data.targets[i]);
    }

    Rng rng(sub_seed(spec.seed, "bagged-trees"));
    std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
    std::vector<std::vector<TreeNode>> trees;
    for (int t = 0; t < n_trees; ++t) {
        std::vector<std::size_t> idx;
        idx.reserve(xs.size());
        if (bootstrap)
            for (std::size_t i = 0; i < xs.size(); ++i) idx.push_back(pick(rng));
        else
            for (std::size_t i = 0; i < xs.size(); ++i) idx.push_back(i);
        TreeBuilder b{xs, ys, max_depth, min_leaf, mtry, rng, {}};
        b.build(idx, 0);
        trees.push_back(std::move(b.nodes));
    }
    return BaggedTrees(spec.lag_order, std::move(trees));
}

double BaggedTrees::predict_next(std::span<const double> history) const {
    check_history(history);
    double acc = 0.0;
    for (const auto& t : trees_) acc += tree_predict(t, history);
    return acc / static_cast<double>(trees_.size());
}

std::string BaggedTrees::to_json() const {
    nlohmann::json jtrees = nlohmann::json::array();
    for (const auto& tree : trees_) {
        nlohmann::json jt = nlohmann::json::array();
        for (const auto& n : tree) {
            nlohmann::json jn;
            jn["f"] = n.feature;
            if (n.feature >= 0) {
                jn["t"] = n.threshold;
                jn["l"] = n.left;
                jn["r"] = n.right;
            } else {
                jn["v"] = n.value;
            }
            jt.push_back(jn);
        }
        jtrees.push_back(jt);
    }
    nlohmann::json j;
    j["kind"] = name();
    j["lag"] = lag_;
    j["trees"] = jtrees;
    return j.dump();
}

}  // namespace rlens
