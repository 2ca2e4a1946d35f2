#pragma once

// Out-of-sample comparison: predictive parameters are the component-wise means
// of the in-sample per-segment estimates, scored by MSE on the held-out
// segment's binned curve.

#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "impact/csv.hpp"
#include "impact/errors.hpp"
#include "impact/impact_models.hpp"
#include "impact/nls_estimator.hpp"
#include "impact/numeric.hpp"

namespace impact {

struct PredictiveParams {
    ModelKind kind = ModelKind::PL;
    double p1_mean = 0.0;
    double p2_mean = 0.0;
    std::size_t n_fits = 0;      // converged fits that contributed
    std::size_t n_excluded = 0;  // fits of this kind dropped for not converging

    ModelParams params() const { return {kind, p1_mean, p2_mean}; }
};

inline PredictiveParams mean_params(std::span<const FitResult> fits, ModelKind kind) {
    CompensatedSum s1, s2;
    PredictiveParams out;
    out.kind = kind;
    for (const auto& f : fits) {
        if (f.params.kind != kind) continue;
        if (!f.converged) {
            ++out.n_excluded;
            continue;
        }
        s1.add(f.params.p1);
        s2.add(f.params.p2);
        ++out.n_fits;
    }
    if (out.n_fits == 0) throw ValidationError("no converged " + std::string(to_string(kind)) + " fits to average");
    out.p1_mean = s1.value() / static_cast<double>(out.n_fits);
    out.p2_mean = s2.value() / static_cast<double>(out.n_fits);
    return out;
}

inline double predict_mse(const PredictiveParams& pred, std::span<const CurvePoint> points) {
    if (points.empty()) throw ValidationError("cannot score a prediction on an empty curve");
    CompensatedSum s;
    const auto params = pred.params();
    for (const auto& p : points) {
        const double e = p.y_mean - evaluate(params, p.x_mean);
        s.add(e * e);
    }
    return s.value() / static_cast<double>(points.size());
}

enum class Winner { PL, LG, tie };

constexpr std::string_view to_string(Winner w) {
    switch (w) {
        case Winner::PL: return "PL";
        case Winner::LG: return "LG";
        case Winner::tie: return "tie";
    }
    return "?";
}

struct ForecastReport {
    std::size_t bins = 0;
    TradeClass trade_class = TradeClass::FB;
    PredictiveParams pl;
    PredictiveParams lg;
    double pl_mse = 0.0;
    double lg_mse = 0.0;
    Winner winner = Winner::tie;
};

// Exact equality is reported as a tie.
inline Winner pick_winner(double pl_mse, double lg_mse) {
    if (!std::isfinite(pl_mse) || !std::isfinite(lg_mse)) throw ValidationError("MSEs must be finite to compare");
    if (pl_mse < lg_mse) return Winner::PL;
    if (lg_mse < pl_mse) return Winner::LG;
    return Winner::tie;
}

inline ForecastReport compare(TradeClass c, std::size_t bins, double pl_mse, double lg_mse,
                              PredictiveParams pl = {ModelKind::PL}, PredictiveParams lg = {ModelKind::LG}) {
    return ForecastReport{bins, c, pl, lg, pl_mse, lg_mse, pick_winner(pl_mse, lg_mse)};
}

inline constexpr std::string_view kForecastHeader = "asset,class,M,model,p1,p2,mse,winner";

struct AssetForecast {
    std::string asset;
    ForecastReport report;
};

inline std::string format_forecast_report(std::span<const AssetForecast> rows) {
    std::ostringstream out;
    out << kForecastHeader << '\n';
    for (const auto& [asset, r] : rows) {
        for (const auto* p : {&r.pl, &r.lg}) {
            out << asset << ',' << to_string(r.trade_class) << ',' << r.bins << ',' << to_string(p->kind) << ','
                << csv::format_double(p->p1_mean) << ',' << csv::format_double(p->p2_mean) << ','
                << csv::format_double(p->kind == ModelKind::PL ? r.pl_mse : r.lg_mse) << ',' << to_string(r.winner)
                << '\n';
        }
    }
    return out.str();
}

struct ForecastEntry {
    std::string asset;
    TradeClass trade_class;
    std::size_t bins;
    ModelKind kind;
    double p1;
    double p2;
    double mse;
    std::string winner;
};

inline std::vector<ForecastEntry> read_forecast_report(const std::filesystem::path& path) {
    std::vector<ForecastEntry> out;
    for (const auto& f : csv::read_table(path, kForecastHeader)) {
        const auto c = parse_trade_class(f[1]);
        const auto m = csv::parse_int(f[2]);
        const auto k = parse_model_kind(f[3]);
        if (!c || !m || *m <= 0 || !k) throw ValidationError(path.string() + ": malformed forecast row");
        if (f[7] != "PL" && f[7] != "LG" && f[7] != "tie")
            throw ValidationError(path.string() + ": bad winner '" + f[7] + "'");
        out.push_back({f[0], *c, static_cast<std::size_t>(*m), *k, csv::require_double(f[4], "p1"),
                       csv::require_double(f[5], "p2"), csv::require_double(f[6], "mse"), f[7]});
    }
    return out;
}

// Plot-ready prediction curve over the held-out bins.
struct PredictionRow {
    double x;
    double y_pred_pl;
    double y_pred_lg;
    double y_fit_pl;
    double y_fit_lg;
    double y_actual;
};

inline constexpr std::string_view kPredictionHeader = "x,y_pred_pl,y_pred_lg,y_fit_pl,y_fit_lg,y_actual";

inline std::vector<PredictionRow> prediction_curve(std::span<const CurvePoint> holdout, const ModelParams& pred_pl,
                                                   const ModelParams& pred_lg, const ModelParams& fit_pl,
                                                   const ModelParams& fit_lg) {
    std::vector<PredictionRow> out;
    for (const auto& p : holdout)
        out.push_back({p.x_mean, evaluate(pred_pl, p.x_mean), evaluate(pred_lg, p.x_mean), evaluate(fit_pl, p.x_mean),
                       evaluate(fit_lg, p.x_mean), p.y_mean});
    return out;
}

inline std::string format_prediction_csv(std::span<const PredictionRow> rows) {
    std::ostringstream out;
    out << kPredictionHeader << '\n';
    for (const auto& r : rows)
        out << csv::format_double(r.x) << ',' << csv::format_double(r.y_pred_pl) << ','
            << csv::format_double(r.y_pred_lg) << ',' << csv::format_double(r.y_fit_pl) << ','
            << csv::format_double(r.y_fit_lg) << ',' << csv::format_double(r.y_actual) << '\n';
    return out.str();
}

inline std::vector<PredictionRow> read_prediction_csv(const std::filesystem::path& path) {
    std::vector<PredictionRow> out;
    for (const auto& f : csv::read_table(path, kPredictionHeader))
        out.push_back({csv::require_double(f[0], "x"), csv::require_double(f[1], "y_pred_pl"),
                       csv::require_double(f[2], "y_pred_lg"), csv::require_double(f[3], "y_fit_pl"),
                       csv::require_double(f[4], "y_fit_lg"), csv::require_double(f[5], "y_actual")});
    return out;
}

}  // namespace impact
