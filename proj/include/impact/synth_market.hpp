#pragma once

// Synthetic order-flow ledgers with a known impact law.
//
// Per synthetic month and filled class, sizes w are drawn from the configured
// distribution and unsigned impacts are
//
//     r_i = r_target * law(x_i) * eta_i / mean_j(law(x_j) * eta_j),  x = w / mean(w)
//
// with eta lognormal and mean one. The rescaling pins the class mean of r to
// r_target. Because the analysis pipeline divides by that same mean, what it
// can identify is the law up to that normalization; exact recovery of the
// generator's parameters needs mean(law(x)) = 1 and sizes that are constant
// within each curve bin, which is what the `ladder` size distribution
// provides: a geometric ladder of equally populated levels calibrated to the
// law.
//
// Partially filled trades are drawn larger (size multiplier) and get a
// near-constant impact. Prices follow the trades: each trade moves the price
// by exp(+r) for buys and exp(-r) for sells, rounded to the tick.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "impact/csv.hpp"
#include "impact/curve_builder.hpp"
#include "impact/errors.hpp"
#include "impact/impact_models.hpp"
#include "impact/numeric.hpp"
#include "impact/trade_ledger.hpp"

namespace impact {

enum class SizeDistribution { lognormal, pareto, ladder };

constexpr std::string_view to_string(SizeDistribution d) {
    switch (d) {
        case SizeDistribution::lognormal: return "lognormal";
        case SizeDistribution::pareto: return "pareto";
        case SizeDistribution::ladder: return "ladder";
    }
    return "?";
}

struct GenConfig {
    ModelParams law = ModelParams::power_law(1.35, 0.65);
    std::size_t n_trades = 10000;  // per filled class per segment
    std::size_t n_segments = 12;
    int start_year = 2005;
    unsigned start_month = 9;

    SizeDistribution size_dist = SizeDistribution::lognormal;
    double size_scale = 10000.0;  // shares: lognormal median, Pareto minimum, ladder mean
    double size_sigma = 1.5;      // lognormal log-scale
    double pareto_alpha = 1.5;    // tail exponent, > 1
    std::size_t ladder_levels = 12;

    double noise_sigma = 0.05;  // log-scale of the mean-one multiplicative noise
    double base_price = 4.0;
    double tick_size = 0.0;  // 0 disables rounding
    double impact_bps = 1.0;  // target mean unsigned impact of filled trades

    double partial_fraction = 0.0;  // partial trades per filled trade, per side
    double partial_size_multiplier = 5.0;
    double partial_impact_bps = 20.0;

    // Shared slowly varying regime: gamma += A sin(.) for PL, d *= exp(A sin(.)) for LG,
    // one cycle over the sample with a seeded phase. Applies to both sides.
    double regime_amplitude = 0.0;

    std::uint64_t seed = 1;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be positive");
        };
        if (n_trades == 0) throw ValidationError("n_trades must be positive");
        if (n_segments == 0) throw ValidationError("n_segments must be positive");
        if (start_month < 1 || start_month > 12) throw ValidationError("start month must lie in 1..12");
        positive(size_scale, "size_scale");
        if (size_dist == SizeDistribution::lognormal) positive(size_sigma, "size_sigma");
        if (size_dist == SizeDistribution::pareto && !(pareto_alpha > 1.0))
            throw ValidationError("pareto_alpha must exceed 1 for a finite mean size");
        if (size_dist == SizeDistribution::ladder && ladder_levels < 2)
            throw ValidationError("ladder_levels must be at least 2");
        if (size_dist == SizeDistribution::ladder && n_trades < ladder_levels)
            throw ValidationError("n_trades must be at least ladder_levels");
        if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
        positive(base_price, "base_price");
        if (!(tick_size >= 0.0)) throw ValidationError("tick_size must be non-negative");
        positive(impact_bps, "impact_bps");
        if (!(partial_fraction >= 0.0 && partial_fraction <= 1.0))
            throw ValidationError("partial_fraction must lie in [0, 1]");
        positive(partial_size_multiplier, "partial_size_multiplier");
        positive(partial_impact_bps, "partial_impact_bps");
        if (!(regime_amplitude >= 0.0)) throw ValidationError("regime_amplitude must be non-negative");
        if (law.kind == ModelKind::PL && !(law.p1 > 0.0)) throw ValidationError("PL law needs a > 0");
        if (law.kind == ModelKind::LG && !(law.p1 > 0.0 && law.p2 > 0.0))
            throw ValidationError("LG law needs c > 0 and d > 0");
    }

    std::size_t partial_count() const {
        return static_cast<std::size_t>(std::llround(partial_fraction * static_cast<double>(n_trades)));
    }

    // Flat key-value schema; see configs/ for annotated examples.
    static GenConfig from_key_values(const csv::KeyValueFile& kv) {
        static const std::set<std::string> known{
            "law",         "a",          "gamma",       "c",          "d",          "n_trades",
            "n_segments",  "start_month", "size_dist",  "size_scale", "size_sigma", "pareto_alpha",
            "ladder_levels", "noise_sigma", "base_price", "tick_size", "impact_bps", "partial_fraction",
            "partial_size_multiplier", "partial_impact_bps", "regime_amplitude", "seed"};
        for (const auto& k : kv.keys())
            if (!known.count(k)) throw ValidationError("unknown generator config key '" + k + "'");
        GenConfig g;
        if (auto law = kv.get("law")) {
            auto kind = parse_model_kind(*law);
            if (!kind) throw ValidationError("law must be pl or lg, got '" + *law + "'");
            g.law = default_law(*kind);
        }
        if (g.law.kind == ModelKind::PL) {
            if (kv.contains("c") || kv.contains("d")) throw ValidationError("keys c, d belong to law = lg");
            g.law.p1 = kv.get_double("a").value_or(g.law.p1);
            g.law.p2 = kv.get_double("gamma").value_or(g.law.p2);
        } else {
            if (kv.contains("a") || kv.contains("gamma")) throw ValidationError("keys a, gamma belong to law = pl");
            g.law.p1 = kv.get_double("c").value_or(g.law.p1);
            g.law.p2 = kv.get_double("d").value_or(g.law.p2);
        }
        auto count = [&](const char* key, std::size_t& dst) {
            if (auto v = kv.get_int(key)) {
                if (*v < 0) throw ValidationError(std::string(key) + " must be non-negative");
                dst = static_cast<std::size_t>(*v);
            }
        };
        count("n_trades", g.n_trades);
        count("n_segments", g.n_segments);
        count("ladder_levels", g.ladder_levels);
        if (auto m = kv.get("start_month")) {
            const auto ts = Timestamp::parse(*m + "-01T00:00:00");
            if (!ts) throw ValidationError("start_month must look like YYYY-MM, got '" + *m + "'");
            g.start_year = static_cast<int>(ts->date().year());
            g.start_month = static_cast<unsigned>(ts->date().month());
        }
        if (auto d = kv.get("size_dist")) {
            if (*d == "lognormal")
                g.size_dist = SizeDistribution::lognormal;
            else if (*d == "pareto")
                g.size_dist = SizeDistribution::pareto;
            else if (*d == "ladder")
                g.size_dist = SizeDistribution::ladder;
            else
                throw ValidationError("size_dist must be lognormal, pareto or ladder, got '" + *d + "'");
        }
        auto real = [&](const char* key, double& dst) { dst = kv.get_double(key).value_or(dst); };
        real("size_scale", g.size_scale);
        real("size_sigma", g.size_sigma);
        real("pareto_alpha", g.pareto_alpha);
        real("noise_sigma", g.noise_sigma);
        real("base_price", g.base_price);
        real("tick_size", g.tick_size);
        real("impact_bps", g.impact_bps);
        real("partial_fraction", g.partial_fraction);
        real("partial_size_multiplier", g.partial_size_multiplier);
        real("partial_impact_bps", g.partial_impact_bps);
        real("regime_amplitude", g.regime_amplitude);
        if (auto s = kv.get_int("seed")) g.seed = static_cast<std::uint64_t>(*s);
        g.validate();
        return g;
    }

    static GenConfig load(const std::filesystem::path& path) { return from_key_values(csv::KeyValueFile::load(path)); }

    static ModelParams default_law(ModelKind kind) {
        return kind == ModelKind::PL ? ModelParams::power_law(1.35, 0.65) : ModelParams::logarithmic(5.188, 0.913);
    }
};

namespace detail {

inline std::mt19937_64 synth_stream(std::uint64_t seed, std::uint64_t segment, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(segment), purpose, 0x5157u};
    return std::mt19937_64(seq);
}

inline double draw_size(const GenConfig& g, std::mt19937_64& rng) {
    switch (g.size_dist) {
        case SizeDistribution::pareto: {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            double v = 0.0;
            while (v <= 0.0) v = u(rng);
            return g.size_scale * std::pow(v, -1.0 / g.pareto_alpha);
        }
        case SizeDistribution::lognormal:
        case SizeDistribution::ladder:
        default: {
            std::lognormal_distribution<double> d(std::log(g.size_scale), g.size_sigma);
            return d(rng);
        }
    }
}

}  // namespace detail

// Normalized size levels (mean 1 under `counts`) with geometric spacing chosen
// so that the count-weighted mean of law(level) is exactly 1. Throws when the
// law admits no such non-degenerate ladder (e.g. PL with a = 1).
inline std::vector<double> calibrate_ladder(const ModelParams& law, std::span<const std::size_t> counts) {
    const auto levels = counts.size();
    if (levels < 2) throw ValidationError("ladder needs at least 2 levels");
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    auto make_levels = [&](double t) {
        // u_k = exp(t (k - L + 1)) keeps every level <= 1 before scaling.
        std::vector<double> x(levels);
        double mean = 0.0;
        for (std::size_t k = 0; k < levels; ++k) {
            x[k] = std::exp(t * (static_cast<double>(k) - static_cast<double>(levels - 1)));
            mean += static_cast<double>(counts[k]) * x[k];
        }
        mean /= total;
        for (auto& v : x) v /= mean;
        return x;
    };
    auto excess = [&](double t) {
        const auto x = make_levels(t);
        double m = 0.0;
        for (std::size_t k = 0; k < levels; ++k) m += static_cast<double>(counts[k]) * evaluate(law, x[k]);
        return m / total - 1.0;
    };
    const double t_max = 600.0 / static_cast<double>(levels - 1);
    double lo = 1e-6;
    const double g_lo = excess(lo);
    double hi = lo;
    double g_hi = g_lo;
    while (hi < t_max && (g_hi == 0.0 || std::signbit(g_hi) == std::signbit(g_lo))) {
        hi *= 2.0;
        g_hi = excess(std::min(hi, t_max));
    }
    if (g_lo == 0.0 || std::signbit(g_hi) == std::signbit(g_lo) || g_hi == 0.0)
        throw ValidationError("size ladder cannot be calibrated to this law: mean-one normalization would force "
                              "constant trade sizes or has no solution (law(1) = " +
                              csv::format_double(evaluate(law, 1.0)) + ")");
    hi = std::min(hi, t_max);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double g = excess(mid);
        if (g == 0.0) {
            lo = hi = mid;
            break;
        }
        if (std::signbit(g) == std::signbit(g_lo))
            lo = mid;
        else
            hi = mid;
    }
    return make_levels(0.5 * (lo + hi));
}

// Law in force during segment `segment` (after any regime shift).
inline ModelParams segment_law(const GenConfig& g, std::size_t segment) {
    if (g.regime_amplitude == 0.0) return g.law;
    auto rng = detail::synth_stream(g.seed, 0xFFFFFFFFull, 7);
    const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    const double s = std::sin(2.0 * std::numbers::pi * static_cast<double>(segment) /
                                  static_cast<double>(g.n_segments) +
                              phase);
    ModelParams law = g.law;
    if (law.kind == ModelKind::PL)
        law.p2 += g.regime_amplitude * s;
    else
        law.p2 *= std::exp(g.regime_amplitude * s);
    return law;
}

// First day of the k-th synthetic month.
inline std::chrono::sys_days segment_start(const GenConfig& g, std::size_t k) {
    using namespace std::chrono;
    const year_month ym = year{g.start_year} / month{g.start_month} + months{static_cast<int>(k)};
    return sys_days{ym / day{1}};
}

inline std::vector<TradeRecord> generate(const GenConfig& g) {
    g.validate();
    struct Pending {
        TradeClass cls;
        double volume;
        double impact;
    };
    std::vector<TradeRecord> ledger;
    double price = g.base_price;
    if (g.tick_size > 0.0) price = std::round(price / g.tick_size) * g.tick_size;
    if (!(price > 0.0)) throw ValidationError("base price rounds to a non-positive tick");

    const double r_target = g.impact_bps * 1e-4;
    const double r_partial = g.partial_impact_bps * 1e-4;
    const std::size_t n_partial = g.partial_count();

    for (std::size_t k = 0; k < g.n_segments; ++k) {
        const auto law = segment_law(g, k);
        std::vector<Pending> trades;
        std::vector<double> ladder;
        std::vector<std::size_t> ladder_counts;
        if (g.size_dist == SizeDistribution::ladder) {
            ladder_counts = bin_sizes(g.n_trades, g.ladder_levels);
            ladder = calibrate_ladder(law, ladder_counts);
        }
        for (auto cls : kAllClasses) {
            auto rng = detail::synth_stream(g.seed, k, static_cast<std::uint32_t>(class_index(cls)) + 1);
            std::normal_distribution<double> z(0.0, 1.0);
            auto noise = [&] {
                return g.noise_sigma == 0.0 ? 1.0
                                            : std::exp(g.noise_sigma * z(rng) - 0.5 * g.noise_sigma * g.noise_sigma);
            };
            if (fill_of(cls) == FillStatus::filled) {
                std::vector<double> sizes;
                sizes.reserve(g.n_trades);
                if (g.size_dist == SizeDistribution::ladder) {
                    for (std::size_t lvl = 0; lvl < ladder.size(); ++lvl)
                        sizes.insert(sizes.end(), ladder_counts[lvl], g.size_scale * ladder[lvl]);
                } else {
                    for (std::size_t i = 0; i < g.n_trades; ++i) sizes.push_back(detail::draw_size(g, rng));
                }
                const double mean_size = accurate_mean(sizes);
                std::vector<double> raw(sizes.size());
                for (std::size_t i = 0; i < sizes.size(); ++i) raw[i] = evaluate(law, sizes[i] / mean_size) * noise();
                const double mean_raw = accurate_mean(raw);
                if (!(mean_raw > 0.0)) throw NumericalError("generated impacts have a non-positive mean");
                for (std::size_t i = 0; i < sizes.size(); ++i)
                    trades.push_back({cls, sizes[i], r_target * raw[i] / mean_raw});
            } else {
                for (std::size_t i = 0; i < n_partial; ++i) {
                    double size = 0.0;
                    if (g.size_dist == SizeDistribution::ladder) {
                        std::uniform_int_distribution<std::size_t> lvl(0, ladder.size() - 1);
                        size = g.size_scale * ladder[lvl(rng)];
                    } else {
                        size = detail::draw_size(g, rng);
                    }
                    trades.push_back({cls, g.partial_size_multiplier * size, r_partial * noise()});
                }
            }
        }
        auto order_rng = detail::synth_stream(g.seed, k, 0);
        std::shuffle(trades.begin(), trades.end(), order_rng);

        const auto start = segment_start(g, k);
        const auto length = std::chrono::duration_cast<std::chrono::seconds>(segment_start(g, k + 1) - start).count();
        const double n = static_cast<double>(trades.size());
        for (std::size_t j = 0; j < trades.size(); ++j) {
            const auto offset =
                static_cast<std::int64_t>(std::floor((static_cast<double>(j) + 0.5) * static_cast<double>(length) / n));
            const Timestamp ts{std::chrono::sys_seconds{start} + std::chrono::seconds{offset}};
            const auto& t = trades[j];
            const double sign = side_of(t.cls) == Side::buy ? 1.0 : -1.0;
            const double before = price;
            double after = before * std::exp(sign * t.impact);
            if (g.tick_size > 0.0) after = std::round(after / g.tick_size) * g.tick_size;
            if (!(after > 0.0))
                throw ValidationError("generated price rounds to a non-positive value; lower tick_size or impacts");
            ledger.push_back(TradeRecord::make(ts, side_of(t.cls), fill_of(t.cls), before, after, t.volume));
            price = after;
        }
    }
    return ledger;
}

}  // namespace impact
