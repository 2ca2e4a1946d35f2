#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "impact/synth_market.hpp"
#include "impact/trade_ledger.hpp"
#include "oracles.hpp"

using namespace impact;

namespace {

const std::string kHeader = "timestamp,side,fill,price_before,price_after,volume,currency_volume\n";

TradeRecord trade(Side s, FillStatus f, double before, double after, double volume = 100.0) {
    return TradeRecord::make(Timestamp::from_fields(2005, 9, 1, 10), s, f, before, after, volume);
}

}  // namespace

TEST(Timestamp, ParseFormatAndMonthLabel) {
    const auto ts = Timestamp::parse("2005-08-22T09:30:01");
    ASSERT_TRUE(ts);
    EXPECT_EQ(ts->to_string(), "2005-08-22T09:30:01");
    EXPECT_EQ(ts->month_label(), "2005-08");
    EXPECT_FALSE(Timestamp::parse("2005-02-30T09:30:01"));
    EXPECT_FALSE(Timestamp::parse("2005-08-22 09:30:01"));
    EXPECT_FALSE(Timestamp::parse("2005-08-22T25:00:00"));
    EXPECT_FALSE(Timestamp::parse("2005-8-22T09:30:01"));
}

TEST(ParseLedger, DerivesCurrencyVolumeFromPriceAfter) {
    const auto ledger = parse_ledger(kHeader + "2005-08-22T09:30:01,buy,filled,10.00,10.01,500,\n");
    ASSERT_EQ(ledger.size(), 1u);
    const auto& r = ledger[0];
    EXPECT_EQ(r.side, Side::buy);
    EXPECT_EQ(r.fill, FillStatus::filled);
    EXPECT_DOUBLE_EQ(r.price_before, 10.00);
    EXPECT_DOUBLE_EQ(r.price_after, 10.01);
    EXPECT_DOUBLE_EQ(r.volume, 500.0);
    EXPECT_DOUBLE_EQ(r.currency_volume, 5005.0);
}

TEST(ParseLedger, ExplicitCurrencyVolumeAndMissingColumn) {
    auto a = parse_ledger(kHeader + "2005-08-22T09:30:01,sell,partial,10,9.99,100,1234.5\n");
    EXPECT_DOUBLE_EQ(a[0].currency_volume, 1234.5);
    auto b = parse_ledger("timestamp,side,fill,price_before,price_after,volume\n2005-08-22T09:30:01,sell,filled,10,9.99,100\n");
    EXPECT_DOUBLE_EQ(b[0].currency_volume, 999.0);
}

TEST(ParseLedger, ZeroVolumeFailsAtItsLine) {
    const auto text = kHeader + "2005-08-22T09:30:01,buy,filled,10.00,10.01,500,\n" +
                      "2005-08-22T09:30:02,buy,filled,10.00,10.01,0,\n";
    try {
        parse_ledger(text);
        FAIL() << "expected a validation error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("volume"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(ParseLedger, MalformedRowsNameTheLine) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_ledger(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of(kHeader + "2005-08-22T09:30:01,buy,filled,10.00,10.01\n"), 2u);
    EXPECT_EQ(line_of(kHeader + "2005-08-22T09:30:01,buy,filled,ten,10.01,5,\n"), 2u);
    EXPECT_EQ(line_of(kHeader + "2005-08-22T09:30:01,hold,filled,10,10.01,5,\n"), 2u);
    EXPECT_EQ(line_of(kHeader + "2005-08-22T09:30:01,buy,maybe,10,10.01,5,\n"), 2u);
    EXPECT_EQ(line_of(kHeader + "2005-08-22T09:30:01,buy,filled,-1,10.01,5,\n"), 2u);
    EXPECT_EQ(line_of(kHeader + "2005-08-22T09:30:01,buy,filled,10,0,5,\n"), 2u);
    EXPECT_EQ(line_of(""), 1u);
    EXPECT_EQ(line_of("timestamp,side\n"), 1u);
}

TEST(ParseLedger, SyntheticFileRoundTripsFieldForField) {
    GenConfig g;
    g.n_trades = 5;
    g.n_segments = 1;
    g.tick_size = 0.001;
    const auto ledger = generate(g);
    ASSERT_EQ(ledger.size(), 10u);
    EXPECT_EQ(parse_ledger(emit_ledger(ledger)), ledger);

    const auto dir = oracle::temp_dir("ledger");
    write_ledger_file(dir / "a.csv", ledger);
    EXPECT_EQ(read_ledger_file(dir / "a.csv"), ledger);
}

TEST(ReadLedgerFile, ErrorsCarryThePath) {
    const auto dir = oracle::temp_dir("ledger");
    EXPECT_THROW(read_ledger_file(dir / "missing.csv"), IoError);
    csv::write_file_atomic(dir / "bad.csv", kHeader + "x,buy,filled,1,1,1,\n");
    try {
        read_ledger_file(dir / "bad.csv");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("bad.csv"), std::string::npos);
    }
}

TEST(Classify, ExhaustiveMapping) {
    EXPECT_EQ(classify(Side::buy, FillStatus::filled), TradeClass::FB);
    EXPECT_EQ(classify(Side::sell, FillStatus::filled), TradeClass::FS);
    EXPECT_EQ(classify(Side::buy, FillStatus::partial), TradeClass::PB);
    EXPECT_EQ(classify(Side::sell, FillStatus::partial), TradeClass::PS);
    for (auto c : kAllClasses) EXPECT_EQ(classify(side_of(c), fill_of(c)), c);
}

TEST(Classify, DependsOnlyOnSideAndFill) {
    const auto a = trade(Side::sell, FillStatus::partial, 10.0, 9.0, 1.0);
    const auto b = trade(Side::sell, FillStatus::partial, 3.0, 3.5, 1e6);
    EXPECT_EQ(classify(a), TradeClass::PS);
    EXPECT_EQ(classify(a), classify(b));
}

TEST(Impact, IdentityCase) {
    const auto i = impact::impact(trade(Side::buy, FillStatus::filled, 10.0, 10.0));
    EXPECT_EQ(i.signed_impact, 0.0);
    EXPECT_EQ(i.unsigned_impact, 0.0);
}

TEST(Impact, OneTickOnTenMatchesLongDoubleLog) {
    const auto i = impact::impact(trade(Side::buy, FillStatus::filled, 10.00, 10.01));
    const long double ref = std::log(10.01L / 10.00L);
    EXPECT_NEAR(i.signed_impact, static_cast<double>(ref), 1e-15);
    EXPECT_NEAR(i.signed_impact * 1e4, 9.995, 1e-3);
    EXPECT_GT(i.unsigned_impact, 0.0);
}

TEST(Impact, SwappingPricesNegatesSignedImpact) {
    for (auto [p, q] : {std::pair{10.0, 10.01}, {4.0, 3.87}, {123.4, 125.0}}) {
        const auto a = impact::impact(trade(Side::buy, FillStatus::filled, p, q));
        const auto b = impact::impact(trade(Side::buy, FillStatus::filled, q, p));
        EXPECT_DOUBLE_EQ(a.signed_impact, -b.signed_impact);
        EXPECT_DOUBLE_EQ(a.unsigned_impact, b.unsigned_impact);
        EXPECT_GE(a.unsigned_impact, 0.0);
    }
}

TEST(Summarize, MeanOfTwoImpactsInBps) {
    std::vector<TradeRecord> ledger{trade(Side::buy, FillStatus::filled, 10.0, 10.0 * std::exp(1e-4), 100.0),
                                    trade(Side::buy, FillStatus::filled, 10.0, 10.0 * std::exp(3e-4), 300.0)};
    const auto rows = summarize(ledger);
    const auto& fb = rows[class_index(TradeClass::FB)];
    EXPECT_EQ(fb.count, 2u);
    EXPECT_NEAR(*fb.mean_signed_impact_bps, 2.0, 1e-9);
    EXPECT_DOUBLE_EQ(*fb.mean_volume, 200.0);
    for (auto c : {TradeClass::FS, TradeClass::PB, TradeClass::PS}) {
        EXPECT_EQ(rows[class_index(c)].count, 0u);
        EXPECT_FALSE(rows[class_index(c)].mean_signed_impact_bps);
        EXPECT_FALSE(rows[class_index(c)].mean_volume);
    }
}

TEST(Summarize, EmptyLedgerIsAnError) { EXPECT_THROW(summarize({}), ValidationError); }

TEST(Summarize, PartialTradesAreLargerAndMoveMore) {
    GenConfig g;
    g.n_trades = 2000;
    g.n_segments = 2;
    g.partial_fraction = 0.2;
    const auto ledger = generate(g);
    const auto rows = summarize(ledger);

    // Direct summation oracle.
    std::array<long double, 4> vol{}, pi{};
    std::array<std::size_t, 4> n{};
    for (const auto& r : ledger) {
        const auto k = class_index(classify(r));
        vol[k] += r.volume;
        pi[k] += std::log(static_cast<long double>(r.price_after) / r.price_before);
        ++n[k];
    }
    std::size_t total = 0;
    for (auto c : kAllClasses) {
        const auto k = class_index(c);
        total += rows[k].count;
        EXPECT_EQ(rows[k].count, n[k]);
        EXPECT_NEAR(*rows[k].mean_volume, static_cast<double>(vol[k] / n[k]), 1e-9 * *rows[k].mean_volume);
        EXPECT_NEAR(*rows[k].mean_signed_impact_bps, static_cast<double>(pi[k] / n[k] * 1e4), 1e-9);
    }
    EXPECT_EQ(total, ledger.size());
    const auto& fb = rows[class_index(TradeClass::FB)];
    const auto& fs = rows[class_index(TradeClass::FS)];
    const auto& pb = rows[class_index(TradeClass::PB)];
    const auto& ps = rows[class_index(TradeClass::PS)];
    EXPECT_GT(*pb.mean_volume, *fb.mean_volume);
    EXPECT_GT(*ps.mean_volume, *fs.mean_volume);
    EXPECT_GT(std::abs(*pb.mean_signed_impact_bps), std::abs(*fb.mean_signed_impact_bps));
    EXPECT_GT(std::abs(*ps.mean_signed_impact_bps), std::abs(*fs.mean_signed_impact_bps));
    EXPECT_GT(*fb.mean_signed_impact_bps, 0.0);
    EXPECT_LT(*fs.mean_signed_impact_bps, 0.0);
}

TEST(Summarize, CsvRoundTrip) {
    std::vector<TradeRecord> ledger{trade(Side::sell, FillStatus::filled, 10.0, 9.99, 100.0)};
    const auto rows = summarize(ledger);
    const auto dir = oracle::temp_dir("summary");
    csv::write_file_atomic(dir / "summary.csv", format_summary_csv(rows));
    const auto back = read_summary_csv(dir / "summary.csv");
    ASSERT_EQ(back.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(back[k].trade_class, rows[k].trade_class);
        EXPECT_EQ(back[k].count, rows[k].count);
        EXPECT_EQ(back[k].mean_signed_impact_bps, rows[k].mean_signed_impact_bps);
        EXPECT_EQ(back[k].mean_volume, rows[k].mean_volume);
    }
}
