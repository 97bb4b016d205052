#include "rlens/series.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rlens {

double TimeSeries::at(long index) const {
    if (!in_range(index)) throw ValidationError("series index " + std::to_string(index) + " out of range");
    double v = values[static_cast<std::size_t>(index - start_index)];
    if (!std::isfinite(v))
        throw ValidationError("series value at index " + std::to_string(index) + " is missing");
    return v;
}

double TimeSeries::raw_at(long index) const {
    if (!in_range(index)) throw ValidationError("series index " + std::to_string(index) + " out of range");
    return values[static_cast<std::size_t>(index - start_index)];
}

void TimeSeries::validate() const {
    if (values.empty()) throw ValidationError("series is empty");
    long prev_end = start_index - 1;
    for (const auto& b : missing_blocks) {
        if (b.first > b.last) throw ValidationError("missing block with first > last");
        if (b.first <= prev_end) throw ValidationError("missing blocks not disjoint/sorted");
        if (b.first < start_index || b.last > end_index())
            throw ValidationError("missing block outside series range");
        prev_end = b.last;
    }
    for (long i = start_index; i <= end_index(); ++i) {
        double v = values[static_cast<std::size_t>(i - start_index)];
        if (!std::isfinite(v) && !is_missing(i))
            throw ValidationError("non-finite value at non-missing index " + std::to_string(i));
    }
}

double TimeSeries::known_variance() const {
    double sum = 0.0, sum2 = 0.0;
    long count = 0;
    for (long i = start_index; i <= end_index(); ++i) {
        double v = values[static_cast<std::size_t>(i - start_index)];
        if (!std::isfinite(v)) continue;
        sum += v;
        sum2 += v * v;
        ++count;
    }
    if (count == 0) return 0.0;
    double mean = sum / count;
    return std::max(0.0, sum2 / count - mean * mean);
}

void SplitPlan::validate() const {
    if (episode_length <= 0) throw ValidationError("episode_length must be positive");
    if (episodes_per_pass <= 0) throw ValidationError("episodes_per_pass must be positive");
    auto overlaps = [](const IndexRange& a, const IndexRange& b) {
        return a.first <= b.last && b.first <= a.last;
    };
    for (const auto& tr : train_segments)
        for (const auto& te : test_segments)
            if (overlaps(tr, te)) throw ValidationError("train/test segments overlap");
}

namespace {

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

bool parse_long(const std::string& s, long& out) {
    try {
        std::size_t pos = 0;
        out = std::stol(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

bool parse_double(const std::string& s, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

}  // namespace

TimeSeries load_csv(const std::string& path, MissingPolicy policy, const std::string& sentinel) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    TimeSeries ts;
    std::string line;
    long row = 0;
    long prev_index = 0;
    bool have_first = false;
    long missing_start = 0;
    bool in_missing = false;

    auto close_missing = [&](long before_index) {
        if (in_missing) {
            ts.missing_blocks.push_back({missing_start, before_index});
            in_missing = false;
        }
    };

    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError(path + ":" + std::to_string(row) + ": expected \"index,value\"");
        std::string idx_s = line.substr(0, comma);
        std::string val_s = line.substr(comma + 1);

        long idx;
        if (!parse_long(idx_s, idx)) {
            if (row == 1) continue;  // optional header
            throw ParseError(path + ":" + std::to_string(row) + ": bad index \"" + idx_s + "\"");
        }

        if (!have_first) {
            ts.start_index = idx;
            have_first = true;
        } else if (idx != prev_index + 1) {
            throw ParseError(path + ":" + std::to_string(row) + ": non-monotone index " +
                             std::to_string(idx) + " after " + std::to_string(prev_index));
        }
        prev_index = idx;

        bool missing = (policy == MissingPolicy::EmptyCell) ? val_s.empty() : val_s == sentinel;
        if (missing) {
            if (!in_missing) {
                in_missing = true;
                missing_start = idx;
            }
            ts.values.push_back(std::nan(""));
        } else {
            close_missing(idx - 1);
            double v;
            if (!parse_double(val_s, v) || !std::isfinite(v))
                throw ParseError(path + ":" + std::to_string(row) + ": bad value \"" + val_s + "\"");
            ts.values.push_back(v);
        }
    }
    close_missing(prev_index);
    if (ts.values.empty()) throw ParseError(path + ": no data rows");
    ts.validate();
    return ts;
}

void save_csv(const TimeSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(17);
    for (long i = series.start_index; i <= series.end_index(); ++i) {
        out << i << ',';
        double v = series.raw_at(i);
        if (std::isfinite(v)) out << v;
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

SplitPlan cats_split(const TimeSeries& series) {
    auto fail = [&](const std::string& found) {
        std::ostringstream os;
        os << "not a CATS layout: expected 5000 samples with missing blocks "
              "981-1000, 1981-2000, 2981-3000, 3981-4000, 4981-5000; found " << found;
        throw ValidationError(os.str());
    };
    if (series.start_index != 1 || series.length() != 5000)
        fail("length " + std::to_string(series.length()) + " starting at " +
             std::to_string(series.start_index));
    std::vector<IndexRange> expected;
    for (long k = 0; k < 5; ++k) expected.push_back({981 + 1000 * k, 1000 + 1000 * k});
    if (series.missing_blocks != expected) {
        std::ostringstream os;
        os << series.missing_blocks.size() << " blocks:";
        for (const auto& b : series.missing_blocks) os << ' ' << b.first << '-' << b.last;
        fail(os.str());
    }
    SplitPlan plan;
    for (long k = 0; k < 5; ++k) {
        plan.train_segments.push_back({1 + 1000 * k, 980 + 1000 * k});
        plan.test_segments.push_back(expected[static_cast<std::size_t>(k)]);
    }
    plan.episode_length = 980;
    plan.episodes_per_pass = 5;
    plan.validate();
    return plan;
}

SplitPlan ratio_split(const TimeSeries& series, double train_frac, int episodes) {
    if (train_frac <= 0.0 || train_frac >= 1.0) throw ValidationError("train_frac must be in (0,1)");
    if (episodes <= 0) throw ValidationError("episode count must be positive");
    if (!series.missing_blocks.empty())
        throw ValidationError("ratio_split requires a series without missing blocks");
    long n = series.length();
    long train_len = static_cast<long>(n * train_frac);
    train_len -= train_len % episodes;
    if (train_len <= 0 || train_len >= n) throw ValidationError("split leaves an empty train or test side");
    long kb = train_len / episodes;

    SplitPlan plan;
    long s = series.start_index;
    for (int e = 0; e < episodes; ++e)
        plan.train_segments.push_back({s + e * kb, s + (e + 1) * kb - 1});
    plan.test_segments.push_back({s + train_len, series.end_index()});
    plan.episode_length = kb;
    plan.episodes_per_pass = episodes;
    plan.validate();
    return plan;
}

SegmentKind segment_kind_from_string(const std::string& s) {
    if (s == "linear-trend") return SegmentKind::LinearTrend;
    if (s == "sine") return SegmentKind::Sine;
    if (s == "ar2") return SegmentKind::Ar2;
    if (s == "white-noise") return SegmentKind::WhiteNoise;
    throw ValidationError("unknown segment kind \"" + s + "\"");
}

std::string to_string(SegmentKind k) {
    switch (k) {
        case SegmentKind::LinearTrend: return "linear-trend";
        case SegmentKind::Sine: return "sine";
        case SegmentKind::Ar2: return "ar2";
        case SegmentKind::WhiteNoise: return "white-noise";
    }
    return "?";
}

namespace {

double param_or(const SegmentSpec& s, const std::string& key, double fallback) {
    auto it = s.params.find(key);
    return it == s.params.end() ? fallback : it->second;
}

}  // namespace

TimeSeries synth_regimes(const std::vector<SegmentSpec>& specs, std::uint64_t seed) {
    if (specs.empty()) throw ValidationError("synth spec has no segments");
    TimeSeries ts;
    Rng rng(sub_seed(seed, "synth_regimes"));
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t si = 0; si < specs.size(); ++si) {
        const auto& seg = specs[si];
        if (seg.length <= 0) throw ValidationError("segment length must be positive");
        if (seg.noise_std < 0.0) throw ValidationError("noise-std must be nonnegative");

        double prev1 = 0.0, prev2 = 0.0;  // AR recursion state, seeded at the offset
        if (seg.kind == SegmentKind::Ar2) {
            double off = param_or(seg, "offset", 0.0);
            prev1 = prev2 = off;
        }
        for (long t = 1; t <= seg.length; ++t) {
            double base = 0.0;
            switch (seg.kind) {
                case SegmentKind::LinearTrend:
                    base = param_or(seg, "slope", 1.0) * t + param_or(seg, "intercept", 0.0);
                    break;
                case SegmentKind::Sine: {
                    double period = param_or(seg, "period", 20.0);
                    if (period <= 0.0) throw ValidationError("sine period must be positive");
                    base = param_or(seg, "amplitude", 1.0) *
                               std::sin(2.0 * M_PI * t / period) +
                           param_or(seg, "offset", 0.0);
                    break;
                }
                case SegmentKind::Ar2: {
                    double a1 = param_or(seg, "a1", 0.6);
                    double a2 = param_or(seg, "a2", 0.3);
                    double off = param_or(seg, "offset", 0.0);
                    // mean-reverting around the offset
                    double innov = seg.noise_std > 0.0 ? seg.noise_std * gauss(rng) : 0.0;
                    base = off + a1 * (prev1 - off) + a2 * (prev2 - off) + innov;
                    prev2 = prev1;
                    prev1 = base;
                    ts.values.push_back(base);
                    continue;  // AR noise is the innovation, not additive on top
                }
                case SegmentKind::WhiteNoise:
                    base = param_or(seg, "mean", 0.0);
                    break;
            }
            double noise = seg.noise_std > 0.0 ? seg.noise_std * gauss(rng) : 0.0;
            ts.values.push_back(base + noise);
        }
    }
    ts.validate();
    return ts;
}

}  // namespace rlens
