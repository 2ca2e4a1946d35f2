#pragma once

// End-to-end commands behind the CLI. Each asset (one ledger file) is
// analysed independently; outputs land in <out>/<asset>/ except the forecast
// table, which spans assets. Every file is written atomically and its content
// depends only on (inputs, config, seed).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "impact/correlation_lab.hpp"
#include "impact/csv.hpp"
#include "impact/curve_builder.hpp"
#include "impact/errors.hpp"
#include "impact/forecaster.hpp"
#include "impact/impact_models.hpp"
#include "impact/nls_estimator.hpp"
#include "impact/numeric.hpp"
#include "impact/trade_ledger.hpp"

namespace impact {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitValidation = 2,
    kExitIo = 3,
    kExitNumerical = 4,
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e)) return kExitValidation;
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kExitIo;
    return kExitNumerical;
}

struct RunConfig {
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path out_dir = "out";
    std::vector<std::size_t> bins{12, 15, 18};
    std::optional<std::size_t> holdout_index;  // 0-based segment index; default is the last segment
    std::vector<ModelKind> kinds{ModelKind::PL, ModelKind::LG};
    std::vector<TradeClass> classes{TradeClass::FB, TradeClass::FS};
    std::size_t shuffles = 500;
    std::uint64_t seed = 20160908;
    bool print_tables = true;  // "table" in formats; CSV is always written
    unsigned threads = default_threads();
    FitOptions fit{};

    void validate() const {
        if (inputs.empty()) throw ValidationError("no input ledger given");
        if (bins.empty()) throw ValidationError("at least one M (bins) value is required");
        for (auto m : bins)
            if (m < 3) throw ValidationError("M must be at least 3, got " + std::to_string(m));
        if (kinds.empty()) throw ValidationError("no model kinds selected");
        if (classes.empty()) throw ValidationError("no trade classes selected");
        for (auto c : classes)
            if (fill_of(c) != FillStatus::filled) throw ValidationError("only filled classes (FB, FS) are fitted");
        std::set<std::string> assets;
        for (const auto& p : inputs)
            if (!assets.insert(p.stem().string()).second)
                throw ValidationError("two inputs share the asset name '" + p.stem().string() + "'");
        fit.validate();
    }

    static std::vector<ModelKind> parse_models(const std::string& s) {
        if (s == "both") return {ModelKind::PL, ModelKind::LG};
        if (auto k = parse_model_kind(s)) return {*k};
        throw ValidationError("model must be pl, lg or both, got '" + s + "'");
    }

    static std::vector<TradeClass> parse_classes(const std::string& s) {
        if (s == "both") return {TradeClass::FB, TradeClass::FS};
        if (s == "fb" || s == "FB") return {TradeClass::FB};
        if (s == "fs" || s == "FS") return {TradeClass::FS};
        throw ValidationError("class must be fb, fs or both, got '" + s + "'");
    }

    // Keys: input (repeatable), out, bins (comma list, repeatable), holdout_last,
    // holdout_index, model, class, shuffles, seed, formats, threads, max_iterations.
    static RunConfig from_key_values(const csv::KeyValueFile& kv) { return from_key_values(kv, RunConfig{}); }

    static RunConfig from_key_values(const csv::KeyValueFile& kv, RunConfig base) {
        static const std::set<std::string> known{"input", "out",  "bins",    "holdout_last", "holdout_index",
                                                 "model", "class", "shuffles", "seed",        "formats",
                                                 "threads", "max_iterations"};
        for (const auto& k : kv.keys())
            if (!known.count(k)) throw ValidationError("unknown run config key '" + k + "'");
        RunConfig c = std::move(base);
        if (kv.contains("input")) {
            c.inputs.clear();
            for (const auto& v : kv.get_all("input")) c.inputs.emplace_back(v);
        }
        if (auto v = kv.get("out")) c.out_dir = *v;
        if (kv.contains("bins")) {
            c.bins.clear();
            for (const auto& v : kv.get_all("bins"))
                for (auto f : csv::split(v)) {
                    auto m = csv::parse_int(f);
                    if (!m || *m <= 0) throw ValidationError("bins must be positive integers, got '" + v + "'");
                    c.bins.push_back(static_cast<std::size_t>(*m));
                }
        }
        if (auto v = kv.get_bool("holdout_last"); v && *v) c.holdout_index.reset();
        if (auto v = kv.get_int("holdout_index")) {
            if (*v < 0) throw ValidationError("holdout_index must be non-negative");
            c.holdout_index = static_cast<std::size_t>(*v);
        }
        if (auto v = kv.get("model")) c.kinds = parse_models(*v);
        if (auto v = kv.get("class")) c.classes = parse_classes(*v);
        if (auto v = kv.get_int("shuffles")) {
            if (*v < 0) throw ValidationError("shuffles must be non-negative");
            c.shuffles = static_cast<std::size_t>(*v);
        }
        if (auto v = kv.get_int("seed")) c.seed = static_cast<std::uint64_t>(*v);
        if (auto v = kv.get_int("threads")) c.threads = static_cast<unsigned>(std::max<std::int64_t>(1, *v));
        if (auto v = kv.get_int("max_iterations")) c.fit.max_iterations = static_cast<int>(*v);
        if (auto v = kv.get("formats")) {
            c.print_tables = false;
            for (auto f : csv::split(*v)) {
                const auto t = csv::trim(f);
                if (t == "table")
                    c.print_tables = true;
                else if (t != "csv")
                    throw ValidationError("formats must list csv and/or table, got '" + *v + "'");
            }
        }
        return c;
    }
};

struct AssetData {
    std::string asset;
    std::vector<Segment> segments;
    std::size_t holdout = 0;

    std::filesystem::path dir(const RunConfig& cfg) const { return cfg.out_dir / asset; }

    std::vector<std::size_t> in_sample() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < segments.size(); ++i)
            if (i != holdout) out.push_back(i);
        return out;
    }
};

inline AssetData load_asset(const std::filesystem::path& path, const RunConfig& cfg) {
    AssetData a;
    a.asset = path.stem().string();
    const auto ledger = read_ledger_file(path);
    if (ledger.empty()) throw ValidationError(path.string() + ": ledger has no trades");
    a.segments = segment_monthly(ledger);
    if (a.segments.size() < 3)
        throw ValidationError(path.string() + ": need at least 3 monthly segments (2 in-sample + holdout), found " +
                              std::to_string(a.segments.size()));
    a.holdout = cfg.holdout_index.value_or(a.segments.size() - 1);
    if (a.holdout >= a.segments.size())
        throw ValidationError("holdout index " + std::to_string(a.holdout) + " out of range (" +
                              std::to_string(a.segments.size()) + " segments)");
    return a;
}

// ---------------------------------------------------------------- summarize

struct SummaryOutput {
    std::string asset;
    std::array<SummaryRow, 4> rows;
};

inline std::vector<SummaryOutput> cmd_summarize(const RunConfig& cfg, std::ostream& log) {
    if (cfg.inputs.empty()) throw ValidationError("no input ledger given");
    std::vector<SummaryOutput> out;
    for (const auto& path : cfg.inputs) {
        const auto ledger = read_ledger_file(path);
        if (ledger.empty()) throw ValidationError(path.string() + ": ledger has no trades");
        SummaryOutput s{path.stem().string(), summarize(ledger)};
        csv::write_file_atomic(cfg.out_dir / s.asset / "summary.csv", format_summary_csv(s.rows));
        if (cfg.print_tables) log << "Summary of trades: " << s.asset << '\n' << format_summary_table(s.rows) << '\n';
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------- fit

struct CellCurve {
    std::vector<NormalizedPair> pairs;
    std::vector<CurvePoint> curve;
};

// Normalized and binned curve of one (segment, class), with the pipeline
// invariants checked. Returns nullopt (with reason) for under-populated or
// degenerate cells.
inline std::optional<CellCurve> build_cell(const Segment& segment, TradeClass c, std::size_t bins, std::string& reason) {
    const auto obs = observations(segment.records, c);
    if (obs.size() < bins) {
        reason = std::to_string(obs.size()) + " trades < M=" + std::to_string(bins);
        return std::nullopt;
    }
    CellCurve cell;
    try {
        cell.pairs = normalize(obs);
    } catch (const ValidationError& e) {
        reason = e.what();
        return std::nullopt;
    }
    cell.curve = bin_equal_count(cell.pairs, bins);
    check_curve_invariants(cell.pairs, cell.curve);
    return cell;
}

inline std::optional<FitResult> try_fit(ModelKind kind, std::span<const CurvePoint> curve, const FitOptions& opt,
                                        std::string& reason) {
    try {
        return fit(kind, curve, opt);
    } catch (const ValidationError& e) {
        reason = e.what();
    } catch (const NumericalError& e) {
        reason = e.what();
    }
    return std::nullopt;
}

// In-sample fit rows of one asset at one M, in (segment, class, kind) order.
inline std::vector<FitReportRow> fit_in_sample(const AssetData& a, std::size_t bins,
                                               std::span<const TradeClass> classes, std::span<const ModelKind> kinds,
                                               const RunConfig& cfg, bool write_curves) {
    struct Cell {
        std::size_t segment;
        TradeClass cls;
    };
    std::vector<Cell> cells;
    for (auto s : a.in_sample())
        for (auto c : classes) cells.push_back({s, c});
    std::vector<std::vector<FitReportRow>> rows(cells.size());
    parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
        const auto& seg = a.segments[cells[i].segment];
        std::string reason;
        const auto cell = build_cell(seg, cells[i].cls, bins, reason);
        if (cell && write_curves)
            csv::write_file_atomic(a.dir(cfg) / curve_file_name(cells[i].cls, seg.label, bins),
                                   format_curve_csv(cell->curve));
        for (auto k : kinds) {
            FitReportRow row{seg.label, cells[i].cls, k, std::nullopt, reason};
            if (cell) row.fit = try_fit(k, cell->curve, cfg.fit, row.note);
            rows[i].push_back(std::move(row));
        }
    });
    std::vector<FitReportRow> out;
    for (auto& r : rows)
        for (auto& x : r) out.push_back(std::move(x));
    return out;
}

inline std::string fit_report_name(std::size_t bins) { return "fit_report_M" + std::to_string(bins) + ".csv"; }

struct FitOutput {
    std::string asset;
    std::size_t bins;
    std::vector<FitReportRow> rows;
};

inline std::vector<FitOutput> cmd_fit(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    std::vector<FitOutput> out;
    for (const auto& path : cfg.inputs) {
        const auto a = load_asset(path, cfg);
        for (auto m : cfg.bins) {
            auto rows = fit_in_sample(a, m, cfg.classes, cfg.kinds, cfg, true);
            csv::write_file_atomic(a.dir(cfg) / fit_report_name(m), format_fit_report(rows));
            for (const auto& r : rows)
                if (!r.fit)
                    log << "warning: " << a.asset << " " << r.segment << " " << to_string(r.trade_class) << " "
                        << to_string(r.kind) << " M=" << m << " skipped: " << r.note << '\n';
            if (cfg.print_tables) {
                log << "Fits: " << a.asset << " M=" << m << '\n';
                char buf[200];
                for (const auto& r : rows) {
                    if (!r.fit) continue;
                    const auto& f = *r.fit;
                    std::snprintf(buf, sizeof buf, "  %s %s %s  p1=%.3f (%.3f)  p2=%.3f (%.3f)  R2=%.3f  MSE=%.3f%s\n",
                                  r.segment.c_str(), std::string(to_string(r.trade_class)).c_str(),
                                  std::string(to_string(r.kind)).c_str(), f.params.p1, f.robust_se[0], f.params.p2,
                                  f.robust_se[1], f.r_squared.value_or(std::nan("")), f.mse,
                                  f.converged ? "" : "  (not converged)");
                    log << buf;
                }
            }
            out.push_back({a.asset, m, std::move(rows)});
        }
    }
    return out;
}

// ----------------------------------------------------------------- forecast

inline std::string prediction_file_name(TradeClass c, std::size_t bins) {
    return "prediction_" + std::string(to_string(c)) + "_M" + std::to_string(bins) + ".csv";
}

inline constexpr std::string_view kForecastReportName = "forecast_report.csv";

inline std::vector<AssetForecast> cmd_forecast(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    std::vector<AssetForecast> out;
    for (const auto& path : cfg.inputs) {
        const auto a = load_asset(path, cfg);
        const auto& holdout = a.segments[a.holdout];
        for (auto m : cfg.bins) {
            const auto rows = fit_in_sample(a, m, cfg.classes, kAllModels, cfg, false);
            for (auto c : cfg.classes) {
                const auto obs = observations(holdout.records, c);
                if (obs.size() < m)
                    throw ValidationError("M=" + std::to_string(m) + " exceeds the " + std::to_string(obs.size()) +
                                          " " + std::string(to_string(c)) + " trades of holdout segment " +
                                          holdout.label);
                std::array<std::vector<FitResult>, 2> fits;
                for (const auto& r : rows)
                    if (r.trade_class == c && r.fit) fits[static_cast<std::size_t>(r.kind)].push_back(*r.fit);
                auto averaged = [&](ModelKind k) {
                    try {
                        return mean_params(fits[static_cast<std::size_t>(k)], k);
                    } catch (const ValidationError& e) {
                        throw ValidationError(a.asset + " " + std::string(to_string(c)) + " M=" + std::to_string(m) +
                                              ": " + e.what());
                    }
                };
                const auto pl = averaged(ModelKind::PL);
                const auto lg = averaged(ModelKind::LG);
                for (const auto* p : {&pl, &lg})
                    if (p->n_excluded > 0)
                        log << "warning: " << a.asset << " " << to_string(c) << " M=" << m << ": excluded "
                            << p->n_excluded << " non-converged " << to_string(p->kind) << " fits from the mean\n";

                std::string reason;
                const auto cell = build_cell(holdout, c, m, reason);
                if (!cell) throw ValidationError("holdout segment " + holdout.label + ": " + reason);

                auto report = compare(c, m, predict_mse(pl, cell->curve), predict_mse(lg, cell->curve), pl, lg);
                out.push_back({a.asset, report});

                const auto own_pl = fit(ModelKind::PL, cell->curve, cfg.fit);
                const auto own_lg = fit(ModelKind::LG, cell->curve, cfg.fit);
                const auto curve =
                    prediction_curve(cell->curve, pl.params(), lg.params(), own_pl.params, own_lg.params);
                csv::write_file_atomic(a.dir(cfg) / prediction_file_name(c, m), format_prediction_csv(curve));
            }
        }
    }
    csv::write_file_atomic(cfg.out_dir / kForecastReportName, format_forecast_report(out));
    if (cfg.print_tables) {
        log << "Out-of-sample predictive accuracy (MSE)\n";
        char buf[200];
        for (const auto& [asset, r] : out) {
            std::snprintf(buf, sizeof buf,
                          "  %s %s M=%zu  PL a=%.3f gamma=%.3f MSE=%.4f | LG c=%.3f d=%.3f MSE=%.4f  winner=%s\n",
                          asset.c_str(), std::string(to_string(r.trade_class)).c_str(), r.bins, r.pl.p1_mean,
                          r.pl.p2_mean, r.pl_mse, r.lg.p1_mean, r.lg.p2_mean, r.lg_mse,
                          std::string(to_string(r.winner)).c_str());
            log << buf;
        }
    }
    return out;
}

// ---------------------------------------------------------------- correlate

struct CorrelateOutput {
    std::string asset;
    std::vector<ShuffleVerdict> verdicts;
};

inline std::string null_file_name(ModelKind k, std::string_view param) {
    return "null_" + std::string(to_string(k)) + "_" + std::string(param) + ".csv";
}

// FB/FS parameter correlation over the in-sample segments.
inline std::vector<CorrelateOutput> cmd_correlate(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (cfg.shuffles == 0) throw ValidationError("shuffles must be positive: an empty null distribution is degenerate");
    std::vector<CorrelateOutput> out;
    for (const auto& path : cfg.inputs) {
        const auto a = load_asset(path, cfg);
        std::vector<TradeRecord> fb, fs;
        for (auto s : a.in_sample())
            for (const auto& r : a.segments[s].records) {
                const auto c = classify(r);
                if (c == TradeClass::FB) fb.push_back(r);
                if (c == TradeClass::FS) fs.push_back(r);
            }
        ShuffleOptions opt;
        opt.bins = cfg.bins.front();
        opt.n_shuffles = cfg.shuffles;
        opt.seed = cfg.seed;
        opt.fit = cfg.fit;
        opt.threads = cfg.threads;
        CorrelateOutput co{a.asset, {}};
        for (auto k : cfg.kinds) {
            for (auto& v : shuffle_test_kind(fb, fs, k, opt)) {
                csv::write_file_atomic(a.dir(cfg) / null_file_name(k, v.param), format_null_csv(v));
                if (v.n_missing > 0)
                    log << "warning: " << a.asset << " " << to_string(k) << " " << v.param << ": " << v.n_missing
                        << " replicates failed to fit and were replaced\n";
                co.verdicts.push_back(std::move(v));
            }
        }
        csv::write_file_atomic(a.dir(cfg) / "verdicts.csv", format_verdicts_csv(co.verdicts));
        if (cfg.print_tables) {
            log << "FB/FS parameter correlation: " << a.asset << " (M=" << opt.bins << ", " << opt.n_shuffles
                << " shuffles)\n";
            char buf[160];
            for (const auto& v : co.verdicts) {
                std::snprintf(buf, sizeof buf, "  %s %-5s rho=%.3f  q95=%.3f  %s\n",
                              std::string(to_string(v.kind)).c_str(), v.param.c_str(), v.observed_rho, v.quantile_05,
                              v.significant ? "significant" : "not significant");
                log << buf;
            }
        }
        out.push_back(std::move(co));
    }
    return out;
}

// Runs summarize, fit, forecast and correlate in sequence.
inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    cmd_summarize(cfg, log);
    cmd_fit(cfg, log);
    cmd_forecast(cfg, log);
    cmd_correlate(cfg, log);
}

}  // namespace impact
