#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rlens/common.hpp"

namespace rlens {

struct IndexRange {
    long first = 0;  // inclusive
    long last = 0;   // inclusive

    long length() const { return last - first + 1; }
    bool contains(long i) const { return i >= first && i <= last; }
    bool operator==(const IndexRange&) const = default;
};

// Univariate series with 1-based absolute indexing. Entries inside a
// missing block are stored as NaN placeholders so index arithmetic stays
// trivial; every entry outside the missing blocks must be finite.
struct TimeSeries {
    std::vector<double> values;
    long start_index = 1;
    std::vector<IndexRange> missing_blocks;

    long length() const { return static_cast<long>(values.size()); }
    long end_index() const { return start_index + length() - 1; }

    bool in_range(long index) const { return index >= start_index && index <= end_index(); }

    bool is_missing(long index) const {
        for (const auto& b : missing_blocks)
            if (b.contains(index)) return true;
        return false;
    }

    // Value at absolute index; throws if the index is out of range or missing.
    double at(long index) const;

    // Raw access, NaN for missing entries.
    double raw_at(long index) const;

    // Throws ValidationError on any invariant violation.
    void validate() const;

    // Variance of the known (non-missing) samples.
    double known_variance() const;
};

struct SplitPlan {
    std::vector<IndexRange> train_segments;
    std::vector<IndexRange> test_segments;
    long episode_length = 0;    // K_b
    int episodes_per_pass = 0;  // P

    void validate() const;
};

enum class MissingPolicy { EmptyCell, Sentinel };

// CSV contract: two columns "index,value", optional header, UTF-8,
// LF or CRLF. A missing sample is an empty second column (EmptyCell
// policy) or the given sentinel token (Sentinel policy).
TimeSeries load_csv(const std::string& path, MissingPolicy policy = MissingPolicy::EmptyCell,
                    const std::string& sentinel = "NA");

void save_csv(const TimeSeries& series, const std::string& path);

// CATS layout: 5000 samples with 20-sample holes every 1000. Produces the
// 5x980-train / 5x20-test plan with one episode per training segment.
SplitPlan cats_split(const TimeSeries& series);

// Leading-fraction train split for non-CATS data; train length is floored
// to a multiple of `episodes` so the episode length divides evenly.
SplitPlan ratio_split(const TimeSeries& series, double train_frac, int episodes);

enum class SegmentKind { LinearTrend, Sine, Ar2, WhiteNoise };

struct SegmentSpec {
    SegmentKind kind = SegmentKind::LinearTrend;
    long length = 0;
    // LinearTrend: slope, intercept. Sine: amplitude, period, offset.
    // Ar2: a1, a2, offset. WhiteNoise: mean.
    std::map<std::string, double> params;
    double noise_std = 0.0;
};

SegmentKind segment_kind_from_string(const std::string& s);
std::string to_string(SegmentKind k);

// Deterministic synthetic series: segments concatenated in spec order,
// Gaussian observation noise per segment, no missing blocks.
TimeSeries synth_regimes(const std::vector<SegmentSpec>& specs, std::uint64_t seed);

}  // namespace rlens
