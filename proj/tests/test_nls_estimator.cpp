#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "impact/nls_estimator.hpp"
#include "impact/synth_market.hpp"
#include "oracles.hpp"

using namespace impact;

namespace {

std::vector<CurvePoint> exact_curve(const ModelParams& p, std::size_t m = 12, double lo = 0.05, double hi = 6.0) {
    std::vector<CurvePoint> out;
    for (std::size_t i = 0; i < m; ++i) {
        const double x = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(m - 1));
        out.push_back({x, evaluate(p, x), 100});
    }
    return out;
}

// Binned curves of one synthetic segment with lognormal noise.
std::vector<std::vector<CurvePoint>> noisy_curves(std::uint64_t seed, std::size_t n_trades, std::size_t segments) {
    GenConfig g;
    g.law = ModelParams::power_law(1.35, 0.65);
    g.noise_sigma = 0.05;
    g.n_trades = n_trades;
    g.n_segments = segments;
    g.seed = seed;
    std::vector<std::vector<CurvePoint>> out;
    for (const auto& s : segment_monthly(generate(g)))
        for (auto c : kFilledClasses) out.push_back(bin_equal_count(normalize(s, c), 12));
    return out;
}

}  // namespace

TEST(Fit, ExactPowerLawRecovery) {
    const auto truth = ModelParams::power_law(1.337, 0.720);
    const auto f = fit(ModelKind::PL, exact_curve(truth));
    EXPECT_TRUE(f.converged);
    EXPECT_NEAR(f.params.p1, 1.337, 1e-6);
    EXPECT_NEAR(f.params.p2, 0.720, 1e-6);
    ASSERT_TRUE(f.r_squared);
    EXPECT_NEAR(*f.r_squared, 1.0, 1e-9);
    EXPECT_LT(f.mse, 1e-12);
}

TEST(Fit, ExactLogarithmicRecovery) {
    const auto truth = ModelParams::logarithmic(5.188, 0.913);
    const auto f = fit(ModelKind::LG, exact_curve(truth));
    EXPECT_TRUE(f.converged);
    EXPECT_NEAR(f.params.p1, 5.188, 1e-6);
    EXPECT_NEAR(f.params.p2, 0.913, 1e-6);
    EXPECT_NEAR(*f.r_squared, 1.0, 1e-9);
    EXPECT_LT(f.mse, 1e-12);
}

TEST(Fit, ModelMismatchConvergesWithPositiveMse) {
    const auto lg_curve = exact_curve(ModelParams::logarithmic(5.188, 0.913));
    const auto pl_on_lg = fit(ModelKind::PL, lg_curve);
    EXPECT_TRUE(pl_on_lg.converged);
    EXPECT_GT(pl_on_lg.mse, 0.0);
    const auto pl_curve = exact_curve(ModelParams::power_law(1.337, 0.72));
    const auto lg_on_pl = fit(ModelKind::LG, pl_curve);
    EXPECT_TRUE(lg_on_pl.converged);
    EXPECT_GT(lg_on_pl.mse, 0.0);
}

TEST(Fit, NoisyBinsMatchGridSearchOracle) {
    const auto curves = noisy_curves(17, 50000, 2);
    for (const auto& curve : curves) {
        const auto f = fit(ModelKind::PL, curve);
        ASSERT_TRUE(f.converged);
        const auto ref = oracle::grid_search_pl(curve);
        const double tol = oracle::grid_resolution_ssr(curve, ref.best);
        const double solver_ssr = oracle::ssr(curve, f.params);
        EXPECT_LE(std::abs(solver_ssr - ref.ssr), tol) << "solver " << solver_ssr << " oracle " << ref.ssr;
        EXPECT_NEAR(f.params.p1, ref.best.p1, 1e-3);
        EXPECT_NEAR(f.params.p2, ref.best.p2, 1e-3);
    }
}

TEST(Fit, NeverWorseThanInitialGuess) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 0.1);
    for (int t = 0; t < 30; ++t) {
        auto curve = exact_curve(ModelParams::power_law(1.2, 0.6));
        for (auto& p : curve) p.y_mean *= std::exp(z(rng));
        for (auto kind : kAllModels) {
            const auto f = fit(kind, curve);
            EXPECT_LE(f.ssr(), oracle::ssr(curve, default_initial_guess(kind)) * (1.0 + 1e-12));
        }
    }
}

TEST(Fit, DeterministicBitForBit) {
    const auto curve = noisy_curves(99, 5000, 1).front();
    const auto a = fit(ModelKind::LG, curve);
    const auto b = fit(ModelKind::LG, curve);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.robust_se, b.robust_se);
    EXPECT_EQ(a.residuals, b.residuals);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Fit, InputValidation) {
    auto curve = exact_curve(ModelParams::power_law(1.0, 0.5), 2);
    EXPECT_THROW(fit(ModelKind::PL, curve), ValidationError);
    curve = exact_curve(ModelParams::power_law(1.0, 0.5), 5);
    std::swap(curve[1], curve[2]);
    EXPECT_THROW(fit(ModelKind::PL, curve), ValidationError);
    FitOptions bad;
    bad.max_iterations = 0;
    EXPECT_THROW(fit(ModelKind::PL, exact_curve(ModelParams::power_law(1.0, 0.5)), bad), ValidationError);
}

TEST(Fit, IterationCapReportsNonConvergence) {
    auto curve = exact_curve(ModelParams::logarithmic(5.188, 0.913));
    FitOptions opt;
    opt.max_iterations = 1;
    opt.multi_start = false;
    const auto f = fit(ModelKind::LG, curve, opt);
    EXPECT_FALSE(f.converged);
    EXPECT_EQ(f.iterations, 1);
}

TEST(Fit, ProjectionKeepsParametersFeasible) {
    // Negative responses pull a below zero; the floor keeps it positive.
    std::vector<CurvePoint> curve{{0.5, -1.0, 1}, {1.0, -2.0, 1}, {2.0, -2.5, 1}, {4.0, -3.0, 1}};
    const auto f = fit(ModelKind::PL, curve);
    EXPECT_GE(f.params.p1, kPositiveFloor);
    EXPECT_LE(f.params.p1, 1e-6);
}

TEST(RobustSe, ZeroResidualsGiveZero) {
    const auto p = ModelParams::power_law(1.337, 0.72);
    const auto se = robust_se(ModelKind::PL, exact_curve(p), p);
    EXPECT_NEAR(se[0], 0.0, 1e-12);
    EXPECT_NEAR(se[1], 0.0, 1e-12);
}

TEST(RobustSe, DoublingResidualsDoublesErrors) {
    const auto p = ModelParams::logarithmic(4.0, 1.3);
    auto base = exact_curve(p, 15);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0.0, 0.05);
    std::vector<double> e;
    for (std::size_t i = 0; i < base.size(); ++i) e.push_back(z(rng));
    auto one = base, two = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        one[i].y_mean += e[i];
        two[i].y_mean += 2.0 * e[i];
    }
    const auto s1 = robust_se(ModelKind::LG, one, p);
    const auto s2 = robust_se(ModelKind::LG, two, p);
    EXPECT_NEAR(s2[0], 2.0 * s1[0], 1e-12 * s2[0]);
    EXPECT_NEAR(s2[1], 2.0 * s1[1], 1e-12 * s2[1]);
}

TEST(RobustSe, CloseToClassicalUnderHomoskedasticity) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> z(0.0, 0.05);
    for (auto truth : {ModelParams::power_law(1.337, 0.72), ModelParams::logarithmic(5.188, 0.913)}) {
        auto curve = exact_curve(truth, 400, 0.05, 8.0);
        for (auto& p : curve) p.y_mean += z(rng);
        const auto f = fit(truth.kind, curve);
        ASSERT_TRUE(f.converged);
        const auto robust = robust_se(truth.kind, curve, f.params);
        const auto classical = classical_se(truth.kind, curve, f.params);
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_GT(robust[k], 0.75 * classical[k]);
            EXPECT_LT(robust[k], 1.25 * classical[k]);
        }
    }
}

TEST(RobustSe, RankDeficientJacobianNamesTheDirection) {
    // All sizes at 1: d(a x^g)/dg = a ln 1 = 0 for every point.
    std::vector<CurvePoint> flat{{1.0, 1.0, 1}, {1.0, 1.1, 1}, {1.0, 0.9, 1}};
    try {
        robust_se(ModelKind::PL, flat, ModelParams::power_law(1.0, 0.5));
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("'gamma'"), std::string::npos) << e.what();
    }
}

TEST(Goodness, Examples) {
    const auto p = ModelParams::power_law(1.337, 0.72);
    const auto perfect = goodness(exact_curve(p), p);
    EXPECT_NEAR(*perfect.r_squared, 1.0, 1e-12);
    EXPECT_NEAR(perfect.mse, 0.0, 1e-24);

    std::vector<CurvePoint> pts{{0.5, 1.0, 1}, {1.0, 2.0, 1}, {2.0, 4.5, 1}, {4.0, 2.5, 1}};
    const double ybar = (1.0 + 2.0 + 4.5 + 2.5) / 4.0;
    EXPECT_NEAR(*goodness(pts, ModelParams::power_law(ybar, 0.0)).r_squared, 0.0, 1e-15);

    std::vector<CurvePoint> constant{{0.5, 1.0, 1}, {1.0, 1.0, 1}, {2.0, 1.0, 1}};
    const auto g = goodness(constant, ModelParams::power_law(1.0, 0.3));
    EXPECT_FALSE(g.r_squared);
    EXPECT_THROW(goodness(std::span(pts).first(1), p), ValidationError);
}

TEST(Goodness, MseTimesMEqualsDirectSsr) {
    for (const auto& curve : noisy_curves(5, 3000, 1)) {
        for (auto kind : kAllModels) {
            const auto f = fit(kind, curve);
            const double direct = oracle::ssr(curve, f.params);
            EXPECT_NEAR(f.mse * static_cast<double>(curve.size()), direct, 1e-12 * std::max(1.0, direct));
            double r = 0.0;
            for (double e : f.residuals) r += e * e;
            EXPECT_NEAR(r, direct, 1e-12 * std::max(1.0, direct));
        }
    }
}

TEST(FitReport, CsvRoundTripIncludingSkippedCells) {
    const auto curve = exact_curve(ModelParams::power_law(1.337, 0.72));
    std::vector<FitReportRow> rows{{"2005-09", TradeClass::FB, ModelKind::PL, fit(ModelKind::PL, curve), ""},
                                   {"2005-09", TradeClass::FB, ModelKind::LG, fit(ModelKind::LG, curve), ""},
                                   {"2005-10", TradeClass::FS, ModelKind::PL, std::nullopt, "too few trades"}};
    const auto dir = oracle::temp_dir("fit");
    csv::write_file_atomic(dir / "fit.csv", format_fit_report(rows));
    const auto back = read_fit_report(dir / "fit.csv");
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[0].params, rows[0].fit->params);
    EXPECT_EQ(back[1].mse, rows[1].fit->mse);
    EXPECT_EQ(back[1].se, rows[1].fit->robust_se);
    EXPECT_TRUE(back[0].converged);
    EXPECT_TRUE(back[2].skipped);
    EXPECT_EQ(back[2].trade_class, TradeClass::FS);
}
