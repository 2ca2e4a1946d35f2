#pragma once

// From a ledger to impact-curve points: monthly segmentation, per-(segment,
// class) normalization of size and impact, and equal-count binning by
// normalized size.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "impact/csv.hpp"
#include "impact/errors.hpp"
#include "impact/numeric.hpp"
#include "impact/trade_ledger.hpp"

namespace impact {

struct Segment {
    std::string label;  // "YYYY-MM"
    std::vector<TradeRecord> records;
};

// One segment per calendar month present, in chronological order. The ledger
// must be sorted by timestamp.
inline std::vector<Segment> segment_monthly(std::span<const TradeRecord> ledger) {
    for (std::size_t i = 1; i < ledger.size(); ++i) {
        if (ledger[i].timestamp < ledger[i - 1].timestamp)
            throw ValidationError("ledger not sorted by timestamp: record " + std::to_string(i + 1) + " (" +
                                  ledger[i].timestamp.to_string() + ") precedes record " + std::to_string(i) + " (" +
                                  ledger[i - 1].timestamp.to_string() + ")");
    }
    std::vector<Segment> out;
    for (const auto& r : ledger) {
        auto label = r.timestamp.month_label();
        if (out.empty() || out.back().label != label) out.push_back(Segment{std::move(label), {}});
        out.back().records.push_back(r);
    }
    return out;
}

// Raw (size, unsigned impact) observation of one trade.
struct Observation {
    double volume;
    double impact;
};

inline std::vector<Observation> observations(std::span<const TradeRecord> records, TradeClass c) {
    std::vector<Observation> out;
    for (const auto& r : records)
        if (classify(r) == c) out.push_back({r.volume, impact(r).unsigned_impact});
    return out;
}

struct NormalizedPair {
    double x;  // size / mean size
    double y;  // impact / mean impact
};

// Normalizes by the means of exactly this population.
inline std::vector<NormalizedPair> normalize(std::span<const Observation> obs) {
    if (obs.empty()) throw ValidationError("cannot normalize an empty population");
    CompensatedSum vol, imp;
    for (const auto& o : obs) {
        vol.add(o.volume);
        imp.add(o.impact);
    }
    const double n = static_cast<double>(obs.size());
    const double mean_volume = vol.value() / n;
    const double mean_impact = imp.value() / n;
    if (!(mean_volume > 0.0)) throw ValidationError("mean trade size is not positive");
    if (!(mean_impact > 0.0)) throw DegenerateSegment("degenerate segment: every trade has zero impact");
    std::vector<NormalizedPair> out;
    out.reserve(obs.size());
    for (const auto& o : obs) out.push_back({o.volume / mean_volume, o.impact / mean_impact});
    return out;
}

inline std::vector<NormalizedPair> normalize(const Segment& segment, TradeClass c) {
    const auto obs = observations(segment.records, c);
    if (obs.empty())
        throw ValidationError("segment " + segment.label + " has no " + std::string(to_string(c)) + " trades");
    try {
        return normalize(obs);
    } catch (const DegenerateSegment&) {
        throw DegenerateSegment("degenerate segment " + segment.label + " (" + std::string(to_string(c)) +
                                "): every trade has zero impact");
    }
}

struct CurvePoint {
    double x_mean;
    double y_mean;
    std::size_t n;
};

// Sizes of M contiguous equal-count bins; the first n % M bins take one extra.
inline std::vector<std::size_t> bin_sizes(std::size_t n, std::size_t bins) {
    if (bins == 0) throw ValidationError("number of bins must be positive");
    std::vector<std::size_t> sizes(bins, n / bins);
    for (std::size_t i = 0; i < n % bins; ++i) ++sizes[i];
    return sizes;
}

// Sorts by x (stable, so equal sizes keep temporal order) and averages x and y
// within M equal-count bins.
inline std::vector<CurvePoint> bin_equal_count(std::span<const NormalizedPair> pairs, std::size_t bins) {
    if (bins == 0) throw ValidationError("number of bins must be positive");
    if (pairs.size() < bins)
        throw ValidationError("cannot split " + std::to_string(pairs.size()) + " trades into M=" +
                              std::to_string(bins) + " bins");
    std::vector<NormalizedPair> sorted(pairs.begin(), pairs.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
    std::vector<CurvePoint> out;
    out.reserve(bins);
    std::size_t start = 0;
    for (auto size : bin_sizes(sorted.size(), bins)) {
        CompensatedSum sx, sy;
        for (std::size_t i = start; i < start + size; ++i) {
            sx.add(sorted[i].x);
            sy.add(sorted[i].y);
        }
        const double n = static_cast<double>(size);
        out.push_back({sx.value() / n, sy.value() / n, size});
        start += size;
    }
    return out;
}

// Checks the normalization and binning invariants of one (segment, class)
// curve: mean x and mean y are 1, bin counts differ by at most one and
// partition the population, and count-weighted bin means reproduce the
// population means. Throws NumericalError on violation.
inline void check_curve_invariants(std::span<const NormalizedPair> pairs, std::span<const CurvePoint> curve,
                                   double tol = 1e-9) {
    CompensatedSum sx, sy;
    for (const auto& p : pairs) {
        sx.add(p.x);
        sy.add(p.y);
    }
    const double n = static_cast<double>(pairs.size());
    const double mx = sx.value() / n, my = sy.value() / n;
    if (std::abs(mx - 1.0) > tol) throw NumericalError("mean normalized size " + csv::format_double(mx) + " != 1");
    if (std::abs(my - 1.0) > tol) throw NumericalError("mean normalized impact " + csv::format_double(my) + " != 1");
    std::size_t total = 0, lo = pairs.size(), hi = 0;
    CompensatedSum wx, wy;
    for (const auto& c : curve) {
        total += c.n;
        lo = std::min(lo, c.n);
        hi = std::max(hi, c.n);
        wx.add(c.x_mean * static_cast<double>(c.n));
        wy.add(c.y_mean * static_cast<double>(c.n));
    }
    if (total != pairs.size()) throw NumericalError("bin counts do not partition the population");
    if (hi - lo > 1) throw NumericalError("bin counts differ by more than one");
    if (std::abs(wx.value() / n - mx) > tol) throw NumericalError("weighted bin x means do not reproduce the mean");
    if (std::abs(wy.value() / n - my) > tol) throw NumericalError("weighted bin y means do not reproduce the mean");
}

inline constexpr std::string_view kCurveHeader = "bin,x_mean,y_mean,n";

inline std::string curve_file_name(TradeClass c, std::string_view segment_label, std::size_t bins) {
    return "curves_" + std::string(to_string(c)) + "_" + std::string(segment_label) + "_M" + std::to_string(bins) +
           ".csv";
}

inline std::string format_curve_csv(std::span<const CurvePoint> curve) {
    std::ostringstream out;
    out << kCurveHeader << '\n';
    for (std::size_t i = 0; i < curve.size(); ++i)
        out << (i + 1) << ',' << csv::format_double(curve[i].x_mean) << ',' << csv::format_double(curve[i].y_mean)
            << ',' << curve[i].n << '\n';
    return out.str();
}

inline std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path) {
    std::vector<CurvePoint> out;
    for (const auto& f : csv::read_table(path, kCurveHeader)) {
        const auto n = csv::parse_int(f[3]);
        if (!n || *n <= 0) throw ValidationError(path.string() + ": bad bin count '" + f[3] + "'");
        out.push_back({csv::require_double(f[1], "x_mean"), csv::require_double(f[2], "y_mean"),
                       static_cast<std::size_t>(*n)});
    }
    return out;
}

}  // namespace impact
