#pragma once

// Damped (Levenberg-Marquardt) least squares for the two-parameter impact
// laws, fitted to the M bin means of a curve, with HC1 heteroskedasticity-
// robust standard errors, R^2 and MSE.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "impact/csv.hpp"
#include "impact/curve_builder.hpp"
#include "impact/errors.hpp"
#include "impact/impact_models.hpp"
#include "impact/numeric.hpp"

namespace impact {

// Lower bound applied to a (PL) and to c, d (LG) after every step.
inline constexpr double kPositiveFloor = 1e-8;

inline ModelParams default_initial_guess(ModelKind kind) {
    return kind == ModelKind::PL ? ModelParams::power_law(1.0, 0.5) : ModelParams::logarithmic(1.0, 1.0);
}

struct FitOptions {
    int max_iterations = 200;
    double tolerance = 1e-12;  // relative SSR improvement that ends the iteration
    double initial_damping = 1e-3;
    double damping_growth = 10.0;
    double damping_shrink = 0.1;
    std::optional<ModelParams> initial_guess;  // defaults to default_initial_guess(kind)
    bool multi_start = true;                    // 5x5 log-spaced restarts if the first start fails

    void validate() const {
        if (max_iterations <= 0) throw ValidationError("max_iterations must be positive");
        if (!(tolerance > 0.0)) throw ValidationError("tolerance must be positive");
        if (!(initial_damping > 0.0)) throw ValidationError("initial damping must be positive");
        if (!(damping_growth > 1.0)) throw ValidationError("damping growth factor must exceed 1");
        if (!(damping_shrink > 0.0 && damping_shrink < 1.0))
            throw ValidationError("damping shrink factor must lie in (0, 1)");
    }
};

struct FitResult {
    ModelParams params;
    std::array<double, 2> robust_se{0.0, 0.0};
    std::optional<double> r_squared;  // absent when all y_mean are equal
    double mse = 0.0;
    std::vector<double> residuals;  // y_mean - model(x_mean), one per point
    int iterations = 0;
    bool converged = false;

    double ssr() const { return mse * static_cast<double>(residuals.size()); }
};

struct Goodness {
    std::optional<double> r_squared;
    double mse;
    double ssr;
};

inline std::vector<double> residuals(std::span<const CurvePoint> points, const ModelParams& params) {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(p.y_mean - evaluate(params, p.x_mean));
    return out;
}

inline Goodness goodness(std::span<const CurvePoint> points, const ModelParams& params) {
    if (points.size() < 2) throw ValidationError("goodness of fit needs at least 2 points");
    const auto res = residuals(points, params);
    CompensatedSum ssr, ybar;
    for (double r : res) ssr.add(r * r);
    for (const auto& p : points) ybar.add(p.y_mean);
    const double n = static_cast<double>(points.size());
    const double mean_y = ybar.value() / n;
    CompensatedSum sst;
    for (const auto& p : points) sst.add((p.y_mean - mean_y) * (p.y_mean - mean_y));
    Goodness g{std::nullopt, ssr.value() / n, ssr.value()};
    if (sst.value() > 0.0) g.r_squared = 1.0 - ssr.value() / sst.value();
    return g;
}

namespace detail {

// Symmetric 2x2 matrix [[a, b], [b, c]].
struct Sym2 {
    double a = 0.0, b = 0.0, c = 0.0;
};

// Cross-products J'J and J'r for the curve at params.
inline std::pair<Sym2, std::array<double, 2>> normal_equations(std::span<const CurvePoint> points,
                                                               const ModelParams& params) {
    Sym2 jtj;
    std::array<double, 2> jtr{0.0, 0.0};
    for (const auto& p : points) {
        const auto g = gradient(params, p.x_mean);
        const double r = p.y_mean - evaluate(params, p.x_mean);
        jtj.a += g[0] * g[0];
        jtj.b += g[0] * g[1];
        jtj.c += g[1] * g[1];
        jtr[0] += g[0] * r;
        jtr[1] += g[1] * r;
    }
    return {jtj, jtr};
}

// Inverse of J'J; throws naming the parameter that dominates the null direction.
inline Sym2 invert_checked(const Sym2& m, ModelKind kind) {
    const double det = m.a * m.c - m.b * m.b;
    const double scale = m.a * m.c;
    if (!(scale > 0.0) || !(det > 1e-13 * scale) || !std::isfinite(det)) {
        // Eigenvector of the smaller eigenvalue.
        const double tr = m.a + m.c;
        const double disc = std::sqrt(std::max(0.0, (m.a - m.c) * (m.a - m.c) / 4.0 + m.b * m.b));
        const double lmin = tr / 2.0 - disc;
        double v0 = m.b, v1 = lmin - m.a;
        if (std::abs(v0) + std::abs(v1) == 0.0) {
            v0 = m.a <= m.c ? 1.0 : 0.0;
            v1 = 1.0 - v0;
        }
        const auto names = param_names(kind);
        const auto& name = std::abs(v0) >= std::abs(v1) ? names[0] : names[1];
        throw NumericalError("singular normal equations: parameter '" + std::string(name) +
                             "' is not identified by the curve (degenerate direction)");
    }
    return {m.c / det, -m.b / det, m.a / det};
}

inline ModelParams project(ModelParams p) {
    p.p1 = std::max(p.p1, kPositiveFloor);
    if (p.kind == ModelKind::LG) p.p2 = std::max(p.p2, kPositiveFloor);
    return p;
}

inline double ssr_at(std::span<const CurvePoint> points, const ModelParams& params) {
    double s = 0.0;
    for (const auto& p : points) {
        const double r = p.y_mean - evaluate(params, p.x_mean);
        s += r * r;
    }
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

struct LmRun {
    ModelParams params;
    double ssr;
    int iterations;
    bool converged;
};

inline LmRun levenberg_marquardt(std::span<const CurvePoint> points, ModelParams start, const FitOptions& opt) {
    constexpr double kMaxDamping = 1e16;
    LmRun run{project(start), 0.0, 0, false};
    run.ssr = ssr_at(points, run.params);
    if (!std::isfinite(run.ssr)) return run;
    if (run.ssr == 0.0) {
        run.converged = true;
        return run;
    }
    double lambda = opt.initial_damping;
    while (run.iterations < opt.max_iterations) {
        ++run.iterations;
        const auto [jtj, jtr] = normal_equations(points, run.params);
        const double floor = 1e-12 * std::max(jtj.a, jtj.c) + std::numeric_limits<double>::min();
        const double a = jtj.a + lambda * std::max(jtj.a, floor);
        const double c = jtj.c + lambda * std::max(jtj.c, floor);
        const double det = a * c - jtj.b * jtj.b;
        bool accepted = false;
        if (det > 0.0 && std::isfinite(det)) {
            const double d1 = (c * jtr[0] - jtj.b * jtr[1]) / det;
            const double d2 = (a * jtr[1] - jtj.b * jtr[0]) / det;
            const auto trial = project({run.params.kind, run.params.p1 + d1, run.params.p2 + d2});
            const double s = ssr_at(points, trial);
            if (s < run.ssr) {
                const double rel = (run.ssr - s) / run.ssr;
                run.params = trial;
                run.ssr = s;
                lambda = std::max(lambda * opt.damping_shrink, 1e-15);
                accepted = true;
                if (rel < opt.tolerance || s == 0.0) {
                    run.converged = true;
                    return run;
                }
            }
        }
        if (!accepted) {
            lambda *= opt.damping_growth;
            // No step of any length lowers the SSR: stationary to machine precision.
            if (lambda > kMaxDamping) {
                run.converged = true;
                return run;
            }
        }
    }
    return run;
}

inline std::vector<ModelParams> multi_start_grid(ModelKind kind) {
    std::vector<ModelParams> out;
    auto logspace = [](double lo, double hi, int i) { return std::pow(10.0, lo + (hi - lo) * i / 4.0); };
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            if (kind == ModelKind::PL)
                out.push_back(ModelParams::power_law(logspace(-1.0, 1.0, i), logspace(-1.3, 0.3, j)));
            else
                out.push_back(ModelParams::logarithmic(logspace(-1.0, 2.0, i), logspace(-2.0, 2.0, j)));
        }
    return out;
}

inline void validate_points(std::span<const CurvePoint> points) {
    if (points.size() < 3) throw ValidationError("fit needs at least 3 curve points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].x_mean > 0.0) || !std::isfinite(points[i].x_mean) || !std::isfinite(points[i].y_mean))
            throw ValidationError("curve point " + std::to_string(i + 1) + " is not finite with positive size");
        if (i > 0 && !(points[i].x_mean > points[i - 1].x_mean))
            throw ValidationError("curve x_mean values must strictly increase (point " + std::to_string(i + 1) + ")");
    }
}

}  // namespace detail

// HC1 sandwich: (J'J)^-1 J' diag(e^2) J (J'J)^-1 * M / (M - 2).
inline std::array<double, 2> robust_se(ModelKind kind, std::span<const CurvePoint> points, const ModelParams& params) {
    if (params.kind != kind) throw ValidationError("robust_se: parameter kind does not match model");
    if (points.size() <= 2) throw ValidationError("robust standard errors need more than 2 points");
    detail::Sym2 bread;
    detail::Sym2 meat;
    for (const auto& p : points) {
        const auto g = gradient(params, p.x_mean);
        const double e = p.y_mean - evaluate(params, p.x_mean);
        bread.a += g[0] * g[0];
        bread.b += g[0] * g[1];
        bread.c += g[1] * g[1];
        meat.a += e * e * g[0] * g[0];
        meat.b += e * e * g[0] * g[1];
        meat.c += e * e * g[1] * g[1];
    }
    const auto inv = detail::invert_checked(bread, kind);
    // V = inv * meat * inv, symmetric.
    const double t00 = inv.a * meat.a + inv.b * meat.b, t01 = inv.a * meat.b + inv.b * meat.c;
    const double t10 = inv.b * meat.a + inv.c * meat.b, t11 = inv.b * meat.b + inv.c * meat.c;
    const double v00 = t00 * inv.a + t01 * inv.b;
    const double v11 = t10 * inv.b + t11 * inv.c;
    const double m = static_cast<double>(points.size());
    const double hc1 = m / (m - 2.0);
    return {std::sqrt(std::max(0.0, v00 * hc1)), std::sqrt(std::max(0.0, v11 * hc1))};
}

// Classical s^2 (J'J)^-1 standard errors; used to sanity-check robust_se.
inline std::array<double, 2> classical_se(ModelKind kind, std::span<const CurvePoint> points,
                                          const ModelParams& params) {
    if (points.size() <= 2) throw ValidationError("standard errors need more than 2 points");
    const auto [jtj, jtr] = detail::normal_equations(points, params);
    const auto inv = detail::invert_checked(jtj, kind);
    const double s2 = goodness(points, params).ssr / (static_cast<double>(points.size()) - 2.0);
    return {std::sqrt(s2 * inv.a), std::sqrt(s2 * inv.c)};
}

inline FitResult fit(ModelKind kind, std::span<const CurvePoint> points, const FitOptions& options = {}) {
    options.validate();
    detail::validate_points(points);
    const auto start = options.initial_guess.value_or(default_initial_guess(kind));
    if (start.kind != kind) throw ValidationError("initial guess kind does not match the model being fitted");

    auto best = detail::levenberg_marquardt(points, start, options);
    if (!best.converged && options.multi_start) {
        for (const auto& s : detail::multi_start_grid(kind)) {
            auto run = detail::levenberg_marquardt(points, s, options);
            const bool better = (run.converged && !best.converged) ||
                                (run.converged == best.converged && run.ssr < best.ssr);
            if (better) best = run;
        }
    }

    FitResult result;
    result.params = best.params;
    result.iterations = best.iterations;
    result.converged = best.converged && std::isfinite(best.ssr);
    result.residuals = residuals(points, best.params);
    const auto g = goodness(points, best.params);
    result.r_squared = g.r_squared;
    result.mse = g.mse;
    if (result.converged) {
        result.robust_se = robust_se(kind, points, best.params);
    } else {
        try {
            result.robust_se = robust_se(kind, points, best.params);
        } catch (const NumericalError&) {
            result.robust_se = {std::nan(""), std::nan("")};
        }
    }
    return result;
}

// Machine-readable per-(segment, class, kind) fit table. Cells that could not
// be fitted carry empty numbers and converged = "skipped".
struct FitReportRow {
    std::string segment;
    TradeClass trade_class = TradeClass::FB;
    ModelKind kind = ModelKind::PL;
    std::optional<FitResult> fit;  // absent for skipped cells
    std::string note;              // skip reason, not serialized
};

inline constexpr std::string_view kFitReportHeader = "segment,class,kind,p1,p1_se,p2,p2_se,r2,mse,converged";

inline std::string format_fit_report(std::span<const FitReportRow> rows) {
    std::ostringstream out;
    out << kFitReportHeader << '\n';
    for (const auto& r : rows) {
        out << r.segment << ',' << to_string(r.trade_class) << ',' << to_string(r.kind) << ',';
        if (!r.fit) {
            out << ",,,,,,skipped\n";
            continue;
        }
        const auto& f = *r.fit;
        out << csv::format_double(f.params.p1) << ',' << csv::format_double(f.robust_se[0]) << ','
            << csv::format_double(f.params.p2) << ',' << csv::format_double(f.robust_se[1]) << ','
            << csv::format_optional(f.r_squared) << ',' << csv::format_double(f.mse) << ','
            << (f.converged ? "true" : "false") << '\n';
    }
    return out.str();
}

// Parsed fit-report row; residuals and iteration counts are not serialized.
struct FitReportEntry {
    std::string segment;
    TradeClass trade_class;
    ModelKind kind;
    bool skipped;
    ModelParams params;
    std::array<double, 2> se;
    std::optional<double> r_squared;
    double mse;
    bool converged;
};

inline std::vector<FitReportEntry> read_fit_report(const std::filesystem::path& path) {
    std::vector<FitReportEntry> out;
    for (const auto& f : csv::read_table(path, kFitReportHeader)) {
        FitReportEntry e{};
        e.segment = f[0];
        const auto c = parse_trade_class(f[1]);
        const auto k = parse_model_kind(f[2]);
        if (!c || !k) throw ValidationError(path.string() + ": bad class or kind in row for " + f[0]);
        e.trade_class = *c;
        e.kind = *k;
        e.skipped = f[9] == "skipped";
        if (!e.skipped) {
            e.params = {*k, csv::require_double(f[3], "p1"), csv::require_double(f[5], "p2")};
            e.se = {csv::require_double(f[4], "p1_se"), csv::require_double(f[6], "p2_se")};
            e.r_squared = csv::parse_double(f[7]);
            e.mse = csv::require_double(f[8], "mse");
            const auto conv = csv::parse_bool(f[9]);
            if (!conv) throw ValidationError(path.string() + ": bad converged flag '" + f[9] + "'");
            e.converged = *conv;
        }
        out.push_back(e);
    }
    return out;
}

}  // namespace impact
