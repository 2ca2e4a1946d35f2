#pragma once

// Co-movement of fitted impact parameters between filled buy (FB) and filled
// sell (FS) trades across segments, with a shuffle test for significance.
//
// Null replicates permute the temporal order of the FB series and of the FS
// series independently, cut each back into consecutive blocks with the same
// per-segment trade counts as the original monthly segmentation, and re-run
// normalize -> bin -> fit per block. The test is one-sided (upper tail).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include "impact/csv.hpp"
#include "impact/curve_builder.hpp"
#include "impact/errors.hpp"
#include "impact/impact_models.hpp"
#include "impact/nls_estimator.hpp"
#include "impact/numeric.hpp"
#include "impact/trade_ledger.hpp"

namespace impact {

// Sample Pearson correlation.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw ValidationError("pearson: series lengths differ");
    if (xs.size() < 3) throw ValidationError("pearson: need at least 3 observations");
    const double mx = accurate_mean(xs), my = accurate_mean(ys);
    CompensatedSum sxy, sxx, syy;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    if (!(sxx.value() > 0.0) || !(syy.value() > 0.0)) throw ValidationError("pearson: zero variance");
    return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

struct ParamSeriesPair {
    std::string param;
    std::vector<std::string> labels;  // segment labels, aligned
    std::vector<double> fb_values;
    std::vector<double> fs_values;
};

struct ShuffleOptions {
    std::size_t bins = 12;
    std::size_t n_shuffles = 500;
    std::uint64_t seed = 0;
    std::size_t max_extra_replicates = 0;  // top-up budget; 0 means n_shuffles
    double alpha = 0.05;
    FitOptions fit{};
    unsigned threads = default_threads();
};

struct ShuffleVerdict {
    std::string param;
    ModelKind kind = ModelKind::PL;
    double observed_rho = 0.0;
    std::vector<double> null_rhos;
    double quantile_05 = 0.0;  // (1 - alpha) quantile of null_rhos
    bool significant = false;
    std::uint64_t seed = 0;
    std::size_t n_missing = 0;  // replicates replaced by top-up permutations
};

namespace detail {

// A class series cut into consecutive segments.
struct BlockedSeries {
    std::vector<Observation> obs;
    std::vector<std::size_t> counts;
};

struct AlignedSeries {
    std::vector<std::string> labels;
    BlockedSeries fb;
    BlockedSeries fs;
};

inline AlignedSeries align_monthly(std::span<const TradeRecord> fb_trades, std::span<const TradeRecord> fs_trades) {
    const auto fb_segments = segment_monthly(fb_trades);
    const auto fs_segments = segment_monthly(fs_trades);
    AlignedSeries out;
    std::size_t j = 0;
    for (const auto& seg : fb_segments) {
        while (j < fs_segments.size() && fs_segments[j].label < seg.label) ++j;
        if (j == fs_segments.size() || fs_segments[j].label != seg.label) continue;
        out.labels.push_back(seg.label);
        auto append = [](BlockedSeries& dst, const Segment& s) {
            for (const auto& r : s.records) dst.obs.push_back({r.volume, impact(r).unsigned_impact});
            dst.counts.push_back(s.records.size());
        };
        append(out.fb, seg);
        append(out.fs, fs_segments[j]);
    }
    return out;
}

// Fitted params per block, or nullopt if any block cannot be fitted.
inline std::optional<std::vector<ModelParams>> block_params(std::span<const Observation> obs,
                                                            std::span<const std::size_t> counts, ModelKind kind,
                                                            std::size_t bins, const FitOptions& fit_options) {
    std::vector<ModelParams> out;
    std::size_t start = 0;
    for (auto n : counts) {
        try {
            const auto pairs = normalize(obs.subspan(start, n));
            const auto curve = bin_equal_count(pairs, bins);
            const auto f = fit(kind, curve, fit_options);
            if (!f.converged) return std::nullopt;
            out.push_back(f.params);
        } catch (const Error&) {
            return std::nullopt;
        }
        start += n;
    }
    return out;
}

inline std::optional<std::array<double, 2>> rhos(std::span<const ModelParams> fb, std::span<const ModelParams> fs) {
    std::array<double, 2> out{};
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> a, b;
        for (const auto& p : fb) a.push_back(p[k]);
        for (const auto& p : fs) b.push_back(p[k]);
        try {
            out[k] = pearson(a, b);
        } catch (const ValidationError&) {
            return std::nullopt;
        }
    }
    return out;
}

inline std::mt19937_64 replicate_stream(std::uint64_t seed, std::uint64_t replicate, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32), stream};
    return std::mt19937_64(seq);
}

}  // namespace detail

// Per-segment fitted parameters of FB and FS trades, aligned by month label.
inline std::array<ParamSeriesPair, 2> param_series(std::span<const TradeRecord> fb_trades,
                                                   std::span<const TradeRecord> fs_trades, ModelKind kind,
                                                   std::size_t bins, const FitOptions& fit_options = {}) {
    const auto aligned = detail::align_monthly(fb_trades, fs_trades);
    std::array<ParamSeriesPair, 2> out;
    const auto names = param_names(kind);
    for (std::size_t k = 0; k < 2; ++k) {
        out[k].param = std::string(names[k]);
        out[k].labels = aligned.labels;
    }
    for (std::size_t s = 0, fb_start = 0, fs_start = 0; s < aligned.labels.size(); ++s) {
        const auto fb_n = aligned.fb.counts[s], fs_n = aligned.fs.counts[s];
        for (auto [series, start, n, which] :
             {std::tuple{&aligned.fb, fb_start, fb_n, 0}, std::tuple{&aligned.fs, fs_start, fs_n, 1}}) {
            const auto pairs = normalize(std::span(series->obs).subspan(start, n));
            const auto f = fit(kind, bin_equal_count(pairs, bins), fit_options);
            if (!f.converged)
                throw NumericalError("fit of " + std::string(which == 0 ? "FB" : "FS") + " trades in segment " +
                                     aligned.labels[s] + " did not converge");
            for (std::size_t k = 0; k < 2; ++k) (which == 0 ? out[k].fb_values : out[k].fs_values).push_back(f.params[k]);
        }
        fb_start += fb_n;
        fs_start += fs_n;
    }
    return out;
}

// Shuffle test for both parameters of `kind` at once. Replicate i draws its
// permutations from streams seeded by (seed, i), so results do not depend on
// thread scheduling.
inline std::array<ShuffleVerdict, 2> shuffle_test_kind(std::span<const TradeRecord> fb_trades,
                                                       std::span<const TradeRecord> fs_trades, ModelKind kind,
                                                       const ShuffleOptions& options) {
    if (options.n_shuffles == 0) throw ValidationError("shuffle test needs at least one shuffle");
    if (options.bins == 0) throw ValidationError("number of bins must be positive");
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    const auto aligned = detail::align_monthly(fb_trades, fs_trades);
    if (aligned.labels.size() < 3)
        throw ValidationError("shuffle test needs at least 3 segments with both FB and FS trades, found " +
                              std::to_string(aligned.labels.size()));
    for (std::size_t s = 0; s < aligned.labels.size(); ++s)
        if (aligned.fb.counts[s] < options.bins || aligned.fs.counts[s] < options.bins)
            throw ValidationError("segment " + aligned.labels[s] + " has fewer than M=" +
                                  std::to_string(options.bins) + " trades in one class");

    const auto fb_observed = detail::block_params(aligned.fb.obs, aligned.fb.counts, kind, options.bins, options.fit);
    const auto fs_observed = detail::block_params(aligned.fs.obs, aligned.fs.counts, kind, options.bins, options.fit);
    if (!fb_observed || !fs_observed) throw NumericalError("observed segmentation contains a segment that cannot be fitted");
    const auto observed = detail::rhos(*fb_observed, *fs_observed);
    if (!observed) throw NumericalError("observed parameter series has zero variance");

    auto run_replicate = [&](std::uint64_t index) -> std::optional<std::array<double, 2>> {
        auto fb = aligned.fb.obs;
        auto fs = aligned.fs.obs;
        auto fb_rng = detail::replicate_stream(options.seed, index, 0);
        auto fs_rng = detail::replicate_stream(options.seed, index, 1);
        std::shuffle(fb.begin(), fb.end(), fb_rng);
        std::shuffle(fs.begin(), fs.end(), fs_rng);
        const auto pf = detail::block_params(fb, aligned.fb.counts, kind, options.bins, options.fit);
        if (!pf) return std::nullopt;
        const auto ps = detail::block_params(fs, aligned.fs.counts, kind, options.bins, options.fit);
        if (!ps) return std::nullopt;
        return detail::rhos(*pf, *ps);
    };

    const std::size_t budget = options.max_extra_replicates == 0 ? options.n_shuffles : options.max_extra_replicates;
    std::vector<std::array<double, 2>> accepted;
    std::size_t next_index = 0;
    std::size_t missing = 0;
    while (accepted.size() < options.n_shuffles) {
        const auto want = options.n_shuffles - accepted.size();
        if (next_index >= options.n_shuffles + budget)
            throw NumericalError("shuffle test: too many replicates failed to fit (" + std::to_string(missing) +
                                 " missing)");
        const auto batch = std::min(want, options.n_shuffles + budget - next_index);
        std::vector<std::optional<std::array<double, 2>>> results(batch);
        parallel_for(batch, options.threads, [&](std::size_t i) { results[i] = run_replicate(next_index + i); });
        for (const auto& r : results) {
            if (!r) {
                ++missing;
                continue;
            }
            if (accepted.size() < options.n_shuffles) accepted.push_back(*r);
        }
        next_index += batch;
    }

    std::array<ShuffleVerdict, 2> out;
    const auto names = param_names(kind);
    for (std::size_t k = 0; k < 2; ++k) {
        auto& v = out[k];
        v.param = std::string(names[k]);
        v.kind = kind;
        v.observed_rho = (*observed)[k];
        v.null_rhos.reserve(accepted.size());
        for (const auto& r : accepted) v.null_rhos.push_back(r[k]);
        v.quantile_05 = quantile(v.null_rhos, 1.0 - options.alpha);
        v.significant = v.observed_rho > v.quantile_05;
        v.seed = options.seed;
        v.n_missing = missing;
    }
    return out;
}

inline ShuffleVerdict shuffle_test(std::span<const TradeRecord> fb_trades, std::span<const TradeRecord> fs_trades,
                                   ModelKind kind, std::string_view param, const ShuffleOptions& options) {
    const auto idx = param_index(kind, param);
    if (!idx)
        throw ValidationError("parameter '" + std::string(param) + "' does not belong to model " +
                              std::string(to_string(kind)));
    return shuffle_test_kind(fb_trades, fs_trades, kind, options)[*idx];
}

inline constexpr std::string_view kVerdictHeader = "param,kind,observed_rho,quantile_05,significant,n_shuffles,seed";

inline std::string format_verdicts_csv(std::span<const ShuffleVerdict> verdicts) {
    std::ostringstream out;
    out << kVerdictHeader << '\n';
    for (const auto& v : verdicts)
        out << v.param << ',' << to_string(v.kind) << ',' << csv::format_double(v.observed_rho) << ','
            << csv::format_double(v.quantile_05) << ',' << (v.significant ? "true" : "false") << ','
            << v.null_rhos.size() << ',' << v.seed << '\n';
    return out.str();
}

struct VerdictEntry {
    std::string param;
    ModelKind kind;
    double observed_rho;
    double quantile_05;
    bool significant;
    std::size_t n_shuffles;
    std::uint64_t seed;
};

inline std::vector<VerdictEntry> read_verdicts_csv(const std::filesystem::path& path) {
    std::vector<VerdictEntry> out;
    for (const auto& f : csv::read_table(path, kVerdictHeader)) {
        const auto k = parse_model_kind(f[1]);
        const auto sig = csv::parse_bool(f[4]);
        const auto n = csv::parse_int(f[5]);
        std::uint64_t seed = 0;
        const auto [ptr, ec] = std::from_chars(f[6].data(), f[6].data() + f[6].size(), seed);
        if (!k || !sig || !n || *n < 0 || ec != std::errc{} || ptr != f[6].data() + f[6].size())
            throw ValidationError(path.string() + ": malformed verdict row");
        out.push_back({f[0], *k, csv::require_double(f[2], "observed_rho"), csv::require_double(f[3], "quantile_05"),
                       *sig, static_cast<std::size_t>(*n), seed});
    }
    return out;
}

inline constexpr std::string_view kNullHeader = "rho";

inline std::string format_null_csv(const ShuffleVerdict& v) {
    std::ostringstream out;
    out << kNullHeader << '\n';
    for (double r : v.null_rhos) out << csv::format_double(r) << '\n';
    return out.str();
}

inline std::vector<double> read_null_csv(const std::filesystem::path& path) {
    std::vector<double> out;
    for (const auto& f : csv::read_table(path, kNullHeader)) out.push_back(csv::require_double(f[0], "rho"));
    return out;
}

}  // namespace impact
