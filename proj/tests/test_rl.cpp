#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "rlens/models.hpp"
#include "rlens/rl.hpp"

using namespace rlens;

namespace {

TimeSeries line_series(long n, double slope, double intercept) {
    TimeSeries ts;
    ts.values.resize(static_cast<std::size_t>(n));
    for (long t = 1; t <= n; ++t)
        ts.values[static_cast<std::size_t>(t - 1)] = slope * t + intercept;
    return ts;
}

SplitPlan simple_plan(long n, int episodes, double frac = 0.8) {
    TimeSeries ts;
    ts.values.assign(static_cast<std::size_t>(n), 1.0);
    return ratio_split(ts, frac, episodes);
}

}  // namespace

TEST_CASE("compute_state evaluates the normalized squared error") {
    WeightVector w{{1.0, 0.0}};
    SUBCASE("perfect prediction") {
        std::vector<double> p{10.0, 3.0};
        ErrorState s = compute_state(10.0, w, p, 10);
        CHECK(s.raw == doctest::Approx(0.0));
        CHECK(s.bucket == 0);
    }
    SUBCASE("half prediction lands in bucket 2 of 10") {
        std::vector<double> p{5.0, 0.0};
        ErrorState s = compute_state(10.0, w, p, 10);
        CHECK(s.raw == doctest::Approx(25.0));
        CHECK(s.bucket == 2);
        CHECK(s.bucket_lb == doctest::Approx(20.0));
    }
    SUBCASE("sign-flipped prediction clamps from 400 to 100") {
        std::vector<double> p{-10.0, 0.0};
        ErrorState s = compute_state(10.0, w, p, 10);
        CHECK(s.raw == doctest::Approx(100.0));
        CHECK(s.bucket == 9);
    }
}

TEST_CASE("compute_state degenerate denominator and fallback") {
    WeightVector w{{0.5, 0.5}};
    std::vector<double> p{1.0, 1.0};
    CHECK_THROWS_AS(compute_state(1e-12, w, p, 10), DegenerateDenominator);
    bool fell = false;
    ErrorState s = compute_state_with_fallback(0.0, w, p, 10, 4.0, &fell);
    CHECK(fell);
    CHECK(s.raw == doctest::Approx(25.0));  // (0-1)^2 / 4 * 100
}

TEST_CASE("bucket mapping matches the floor formula") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int n : {1, 3, 10, 17}) {
        for (int trial = 0; trial < 2500; ++trial) {
            double raw = u(rng);
            ErrorState s = make_error_state(raw, n);
            int expect = std::min(static_cast<int>(std::floor(raw / (100.0 / n))), n - 1);
            CHECK(s.bucket == expect);
            CHECK(s.bucket_lb == doctest::Approx(expect * (100.0 / n)));
        }
        CHECK(make_error_state(100.0, n).bucket == n - 1);
        CHECK(make_error_state(0.0, n).bucket == 0);
    }
}

TEST_CASE("compute_reward is the decrease in error state") {
    CHECK(compute_reward({30.0, 0, 0}, {10.0, 0, 0}) == doctest::Approx(20.0));
    CHECK(compute_reward({42.0, 0, 0}, {42.0, 0, 0}) == doctest::Approx(0.0));
    CHECK(compute_reward({0.0, 0, 0}, {100.0, 0, 0}) == doctest::Approx(-100.0));
}

TEST_CASE("compute_return discounts from the first reward") {
    std::vector<double> r{1.0, 1.0, 1.0};
    CHECK(compute_return(r, 0.0) == doctest::Approx(1.0));
    CHECK(compute_return(r, 0.5) == doctest::Approx(1.75));
    std::vector<double> one{-3.5};
    CHECK(compute_return(one, 0.9) == doctest::Approx(-3.5));
}

TEST_CASE("select_action explore/exploit behavior") {
    PolicyModel p = PolicyModel::make(4, 4);
    ErrorState s = make_error_state(30.0, 4);
    Rng rng(1);
    SUBCASE("exploit on zero logits gives uniform weights") {
        ActionRecord a = select_action(p, s, ActionMode::Exploit, rng);
        for (double w : a.weights.w) CHECK(w == doctest::Approx(0.25));
        CHECK(a.noise.empty());
    }
    SUBCASE("explore with sigma 0 equals exploit") {
        p.exploration_std = 0.0;
        ActionRecord a = select_action(p, s, ActionMode::Explore, rng);
        for (double w : a.weights.w) CHECK(w == doctest::Approx(0.25));
    }
    SUBCASE("explore is deterministic for a fixed rng state") {
        Rng r1(99), r2(99);
        ActionRecord a = select_action(p, s, ActionMode::Explore, r1);
        ActionRecord b = select_action(p, s, ActionMode::Explore, r2);
        CHECK(a.weights.w == b.weights.w);
        CHECK(a.noise == b.noise);
    }
}

TEST_CASE("td_update critic arithmetic") {
    PolicyModel p = PolicyModel::make(3, 2);
    p.discount = 0.9;
    p.critic_lr = 0.1;
    SUBCASE("single update from zero") {
        td_update(p, {0, {}, 0.0, 20.0, 1, false});
        CHECK(p.critic_values[0] == doctest::Approx(2.0));
    }
    SUBCASE("fixed point leaves values unchanged") {
        p.discount = 1.0;
        p.critic_values = {5.0, 5.0, 5.0};
        auto logits = p.actor_logits;
        td_update(p, {0, {}, 0.0, 0.0, 1, false});
        CHECK(p.critic_values[0] == doctest::Approx(5.0));
        CHECK(p.actor_logits == logits);
    }
    SUBCASE("geometric convergence with gamma 0 matches the closed form") {
        p.discount = 0.0;
        double r = 12.5, alpha = 0.1;
        for (int k = 1; k <= 50; ++k) {
            td_update(p, {0, {}, 0.0, r, 0, false});
            double expect = r * (1.0 - std::pow(1.0 - alpha, k));
            CHECK(p.critic_values[0] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("exploit transitions never touch the actor") {
        auto logits = p.actor_logits;
        td_update(p, {0, {}, 0.0, 7.0, 2, false});
        CHECK(p.actor_logits == logits);
    }
}

TEST_CASE("critic converges to the Bellman fixed point on a 2-state cycle") {
    // deterministic cycle A -> B (reward 4), B -> A (reward -1), gamma 0.8:
    // V_A = 4 + 0.8 V_B, V_B = -1 + 0.8 V_A  =>  V_A = 80/9, V_B = 55/9
    PolicyModel p = PolicyModel::make(2, 2);
    p.discount = 0.8;
    p.critic_lr = 0.05;
    for (int sweep = 0; sweep < 2000; ++sweep) {
        td_update(p, {0, {}, 0.0, 4.0, 1, false});
        td_update(p, {1, {}, 0.0, -1.0, 0, false});
    }
    CHECK(p.critic_values[0] == doctest::Approx(80.0 / 9.0).epsilon(1e-3));
    CHECK(p.critic_values[1] == doctest::Approx(55.0 / 9.0).epsilon(1e-3));
}

TEST_CASE("policy save/load round-trip") {
    PolicyModel p = PolicyModel::make(5, 3);
    Rng rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& x : p.actor_logits) x = u(rng);
    for (double& x : p.critic_values) x = u(rng);
    p.episodes_trained = 17;
    p.exploration_std = 0.123;
    p.save("/tmp/rlens_policy.json");
    PolicyModel q = PolicyModel::load("/tmp/rlens_policy.json");
    CHECK(q.actor_logits == p.actor_logits);
    CHECK(q.critic_values == p.critic_values);
    CHECK(q.episodes_trained == 17);
    CHECK(q.exploration_std == p.exploration_std);
}

TEST_CASE("train_episodic visits segments round-robin and telescopes rewards") {
    TimeSeries ts = line_series(150, 2.0, 5.0);
    SplitPlan plan = ratio_split(ts, 0.8, 4);  // 4 segments of 30
    ArForecaster exact(2, {-1.0, 2.0});
    ArForecaster bad(2, {-1.0, 0.0});
    std::vector<IndexRange> ranges;
    for (const auto& seg : plan.train_segments) ranges.push_back({seg.first + 2, seg.last});
    ForecastPanel panel = build_panel({&exact, &bad}, ts, ranges);

    PolicyModel p = PolicyModel::make(10, 2);
    Rng rng(3);
    TrainResult tr = train_episodic(p, panel, ts, plan, 100, rng);
    REQUIRE(tr.logs.size() == 100);
    CHECK(tr.policy.episodes_trained == 100);

    std::map<long, int> visits;
    for (const auto& log : tr.logs) visits[log.steps.front().time_index] += 1;
    REQUIRE(visits.size() == 4);
    for (const auto& [first, count] : visits) CHECK(count == 25);

    for (const auto& log : tr.logs) {
        double sum = 0.0;
        for (const auto& s : log.steps) {
            sum += s.reward;
            CHECK_NOTHROW(s.weights.validate());
            CHECK(s.state.raw >= 0.0);
            CHECK(s.state.raw <= 100.0);
        }
        CHECK(std::abs(log.total_reward - sum) < 1e-12);
        CHECK(std::abs(sum - (log.initial_state_raw - log.steps.back().state.raw)) < 1e-9);
    }

    // sigma decayed per schedule
    CHECK(tr.policy.exploration_std ==
          doctest::Approx(p.sigma0 * std::pow(p.sigma_decay, 100)).epsilon(1e-12));
}

TEST_CASE("training shifts exploit weight onto the exact model") {
    TimeSeries ts = line_series(150, 1.0, 3.0);
    SplitPlan plan = ratio_split(ts, 0.8, 4);
    ArForecaster exact(2, {-1.0, 2.0});
    ArForecaster inverted(2, {0.0, -1.0});  // predicts roughly -y
    std::vector<IndexRange> ranges;
    for (const auto& seg : plan.train_segments) ranges.push_back({seg.first + 2, seg.last});
    ForecastPanel panel = build_panel({&exact, &inverted}, ts, ranges);

    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PolicyModel p = PolicyModel::make(10, 2);
        p.actor_lr = 0.1;
        p.sigma_decay = 0.99;
        Rng rng(seed);
        TrainResult tr = train_episodic(p, panel, ts, plan, 300, rng);
        // check the buckets actually visited during the final episodes
        std::map<int, long> seen;
        for (std::size_t e = tr.logs.size() - 10; e < tr.logs.size(); ++e)
            for (const auto& s : tr.logs[e].steps) seen[s.state.bucket]++;
        int bucket = 0;
        long best = -1;
        for (auto [b, c] : seen)
            if (c > best) {
                best = c;
                bucket = b;
            }
        Rng tmp(0);
        ActionRecord a = select_action(tr.policy, make_error_state(bucket * 10.0 + 1e-9, 10),
                                       ActionMode::Exploit, tmp);
        if (a.weights[0] > a.weights[1]) ++wins;
    }
    CHECK(wins >= 4);
}

TEST_CASE("two identical models end with near-symmetric weights") {
    TimeSeries ts = line_series(150, 1.0, 3.0);
    SplitPlan plan = ratio_split(ts, 0.8, 4);
    ArForecaster m1(2, {-1.0, 2.0});
    ArForecaster m2(2, {-1.0, 2.0});
    std::vector<IndexRange> ranges;
    for (const auto& seg : plan.train_segments) ranges.push_back({seg.first + 2, seg.last});
    ForecastPanel panel = build_panel({&m1, &m2}, ts, ranges);

    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PolicyModel p = PolicyModel::make(10, 2);
        Rng rng(seed);
        TrainResult tr = train_episodic(p, panel, ts, plan, 100, rng);
        Rng tmp(0);
        ActionRecord a = select_action(tr.policy, make_error_state(0.0, 10), ActionMode::Exploit, tmp);
        if (std::abs(a.weights[0] - a.weights[1]) < 0.2) ++ok;
    }
    CHECK(ok >= 4);
}

TEST_CASE("infer_online loop contract and strong-preference policy") {
    TimeSeries ts = line_series(120, 1.5, 2.0);
    ArForecaster exact(2, {-1.0, 2.0});
    ArForecaster naive(2, {0.0, 1.0});
    std::vector<const Forecaster*> models{&exact, &naive};
    std::vector<IndexRange> test{{101, 120}};

    PolicyModel p = PolicyModel::make(10, 2);
    SUBCASE("exactly 20 predictions") {
        InferResult r = infer_online(p, models, ts, test);
        CHECK(r.predictions.size() == 20);
        CHECK(r.time_indices.front() == 101);
        CHECK(r.time_indices.back() == 120);
    }
    SUBCASE("logits strongly favoring model 1 track model 1") {
        for (int b = 0; b < p.n_buckets; ++b)
            p.actor_logits[static_cast<std::size_t>(b) * 2] = 10.0;
        InferResult r = infer_online(p, models, ts, test);
        for (std::size_t i = 0; i < r.predictions.size(); ++i) {
            std::vector<double> hist{ts.at(r.time_indices[i] - 2), ts.at(r.time_indices[i] - 1)};
            CHECK(r.predictions[i] == doctest::Approx(exact.predict_next(hist)).epsilon(1e-3));
        }
    }
    SUBCASE("zero learning rates leave the policy unchanged") {
        p.actor_lr = 0.0;
        p.critic_lr = 0.0;
        InferResult r = infer_online(p, models, ts, test);
        CHECK(r.policy.actor_logits == p.actor_logits);
        CHECK(r.policy.critic_values == p.critic_values);
    }
}

TEST_CASE("infer_online proxy feedback works on genuinely missing data") {
    TimeSeries ts = line_series(60, 1.0, 0.0);
    ts.missing_blocks.push_back({51, 60});
    for (long t = 51; t <= 60; ++t) ts.values[static_cast<std::size_t>(t - 1)] = std::nan("");
    ArForecaster exact(2, {-1.0, 2.0});
    ArForecaster naive(2, {0.0, 1.0});
    std::vector<const Forecaster*> models{&exact, &naive};
    PolicyModel p = PolicyModel::make(10, 2);

    CHECK_THROWS_AS(infer_online(p, models, ts, {{51, 60}}, {FeedbackMode::TrueValue, LagFeedMode::PerModel}),
                    ValidationError);
    InferOptions opts;
    opts.feedback = FeedbackMode::Proxy;
    InferResult r = infer_online(p, models, ts, {{51, 60}}, opts);
    CHECK(r.predictions.size() == 10);
    for (double v : r.predictions) CHECK(std::isfinite(v));
}
