#pragma once

// Trade-level order-flow ledgers: parsing, the FB/FS/PB/PS taxonomy,
// per-trade immediate price impact and per-class summary statistics.
//
// Ledger CSV:
//   timestamp,side,fill,price_before,price_after,volume,currency_volume
//   2005-08-22T09:30:01,buy,filled,10.00,10.01,500,
//
// Rows are in temporal order. An empty currency_volume is derived as
// volume * price_after.

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "impact/csv.hpp"
#include "impact/errors.hpp"
#include "impact/numeric.hpp"

namespace impact {

enum class Side { buy, sell };
enum class FillStatus { filled, partial };
enum class TradeClass { FB, FS, PB, PS };

inline constexpr std::array<TradeClass, 4> kAllClasses{TradeClass::FB, TradeClass::FS, TradeClass::PB,
                                                       TradeClass::PS};
inline constexpr std::array<TradeClass, 2> kFilledClasses{TradeClass::FB, TradeClass::FS};

constexpr std::string_view to_string(Side s) { return s == Side::buy ? "buy" : "sell"; }
constexpr std::string_view to_string(FillStatus f) { return f == FillStatus::filled ? "filled" : "partial"; }

constexpr std::string_view to_string(TradeClass c) {
    switch (c) {
        case TradeClass::FB: return "FB";
        case TradeClass::FS: return "FS";
        case TradeClass::PB: return "PB";
        case TradeClass::PS: return "PS";
    }
    return "?";
}

inline std::optional<TradeClass> parse_trade_class(std::string_view s) {
    for (auto c : kAllClasses) {
        const auto name = to_string(c);
        if (s.size() == name.size() &&
            std::equal(s.begin(), s.end(), name.begin(), [](char a, char b) { return std::toupper(a) == b; }))
            return c;
    }
    return std::nullopt;
}

constexpr std::size_t class_index(TradeClass c) { return static_cast<std::size_t>(c); }

// Exchange-local wall-clock time at one-second resolution.
struct Timestamp {
    std::chrono::sys_seconds time{};

    static Timestamp from_fields(int y, unsigned mo, unsigned d, int h = 0, int mi = 0, int s = 0) {
        using namespace std::chrono;
        return Timestamp{sys_days{year{y} / month{mo} / day{d}} + hours{h} + minutes{mi} + seconds{s}};
    }

    // Strict YYYY-MM-DDTHH:MM:SS.
    static std::optional<Timestamp> parse(std::string_view s) {
        s = csv::trim(s);
        if (s.size() != 19 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':')
            return std::nullopt;
        auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
            int v = 0;
            for (std::size_t i = pos; i < pos + len; ++i) {
                if (s[i] < '0' || s[i] > '9') return std::nullopt;
                v = v * 10 + (s[i] - '0');
            }
            return v;
        };
        const auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
        if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
        using namespace std::chrono;
        const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
        if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 59) return std::nullopt;
        return from_fields(*y, static_cast<unsigned>(*mo), static_cast<unsigned>(*d), *h, *mi, *se);
    }

    std::chrono::year_month_day date() const {
        return std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(time)};
    }

    std::string to_string() const {
        using namespace std::chrono;
        const auto day_start = floor<days>(time);
        const year_month_day ymd{day_start};
        const hh_mm_ss hms{time - day_start};
        char buf[64];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                      static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                      static_cast<long>(hms.seconds().count()));
        return buf;
    }

    // Calendar month label, e.g. "2005-09".
    std::string month_label() const {
        const auto ymd = date();
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()));
        return buf;
    }

    auto operator<=>(const Timestamp&) const = default;
};

struct TradeRecord {
    Timestamp timestamp;
    Side side = Side::buy;
    FillStatus fill = FillStatus::filled;
    double price_before = 0.0;
    double price_after = 0.0;
    double volume = 0.0;
    double currency_volume = 0.0;

    // Validating constructor; derives currency_volume when absent.
    static TradeRecord make(Timestamp ts, Side side, FillStatus fill, double price_before, double price_after,
                            double volume, std::optional<double> currency_volume = std::nullopt) {
        if (!(price_before > 0.0) || !std::isfinite(price_before))
            throw ValidationError("price_before must be positive");
        if (!(price_after > 0.0) || !std::isfinite(price_after))
            throw ValidationError("price_after must be positive");
        if (!(volume > 0.0) || !std::isfinite(volume)) throw ValidationError("volume must be positive");
        const double cv = currency_volume.value_or(volume * price_after);
        if (!(cv >= 0.0) || !std::isfinite(cv)) throw ValidationError("currency_volume must be non-negative");
        return TradeRecord{ts, side, fill, price_before, price_after, volume, cv};
    }

    bool operator==(const TradeRecord&) const = default;
};

constexpr TradeClass classify(Side side, FillStatus fill) {
    if (fill == FillStatus::filled) return side == Side::buy ? TradeClass::FB : TradeClass::FS;
    return side == Side::buy ? TradeClass::PB : TradeClass::PS;
}

constexpr TradeClass classify(const TradeRecord& r) { return classify(r.side, r.fill); }

constexpr Side side_of(TradeClass c) {
    return (c == TradeClass::FB || c == TradeClass::PB) ? Side::buy : Side::sell;
}
constexpr FillStatus fill_of(TradeClass c) {
    return (c == TradeClass::FB || c == TradeClass::FS) ? FillStatus::filled : FillStatus::partial;
}

struct Impact {
    double signed_impact;    // ln(price_after) - ln(price_before)
    double unsigned_impact;  // |signed_impact|; the regressand r
};

inline Impact impact(const TradeRecord& r) {
    const double s = std::log(r.price_after) - std::log(r.price_before);
    return {s, std::abs(s)};
}

inline constexpr std::string_view kLedgerHeader = "timestamp,side,fill,price_before,price_after,volume,currency_volume";

namespace detail {

inline TradeRecord parse_ledger_row(std::string_view line, std::size_t lineno,
                                    const std::array<std::size_t, 7>& col, std::size_t ncols) {
    const auto fields = csv::split(line);
    if (fields.size() != ncols)
        throw ParseError(lineno, "expected " + std::to_string(ncols) + " columns, found " + std::to_string(fields.size()));
    auto field = [&](std::size_t k) -> std::string_view {
        return col[k] == ncols ? std::string_view{} : csv::trim(fields[col[k]]);
    };
    const auto ts = Timestamp::parse(field(0));
    if (!ts) throw ParseError(lineno, "invalid timestamp '" + std::string(field(0)) + "'");

    Side side;
    if (field(1) == "buy")
        side = Side::buy;
    else if (field(1) == "sell")
        side = Side::sell;
    else
        throw ParseError(lineno, "unknown side '" + std::string(field(1)) + "'");

    FillStatus fill;
    if (field(2) == "filled")
        fill = FillStatus::filled;
    else if (field(2) == "partial")
        fill = FillStatus::partial;
    else
        throw ParseError(lineno, "unknown fill status '" + std::string(field(2)) + "'");

    static constexpr std::array<std::string_view, 3> names{"price_before", "price_after", "volume"};
    std::array<double, 3> nums{};
    for (std::size_t k = 0; k < 3; ++k) {
        auto v = csv::parse_double(field(3 + k));
        if (!v) throw ParseError(lineno, "unparsable " + std::string(names[k]) + " '" + std::string(field(3 + k)) + "'");
        nums[k] = *v;
    }
    std::optional<double> cv;
    if (!field(6).empty()) {
        cv = csv::parse_double(field(6));
        if (!cv) throw ParseError(lineno, "unparsable currency_volume '" + std::string(field(6)) + "'");
    }
    for (std::size_t k = 0; k < 3; ++k)
        if (!(nums[k] > 0.0)) throw ParseError(lineno, std::string(names[k]) + " must be positive");
    if (cv && !(*cv >= 0.0)) throw ParseError(lineno, "currency_volume must be non-negative");
    return TradeRecord::make(*ts, side, fill, nums[0], nums[1], nums[2], cv);
}

}  // namespace detail

// Columns are located by header name; currency_volume may be omitted.
inline std::vector<TradeRecord> parse_ledger(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty ledger: missing header row");
    static constexpr std::array<std::string_view, 7> names{"timestamp",   "side",   "fill",           "price_before",
                                                           "price_after", "volume", "currency_volume"};
    const auto header = csv::split(line);
    const auto ncols = header.size();
    std::array<std::size_t, 7> col{};
    col.fill(ncols);
    for (std::size_t i = 0; i < ncols; ++i) {
        const auto h = csv::trim(header[i]);
        bool known = false;
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (h == names[k]) {
                if (col[k] != ncols) throw ParseError(1, "duplicate column '" + std::string(h) + "'");
                col[k] = i;
                known = true;
            }
        }
        if (!known) throw ParseError(1, "unknown column '" + std::string(h) + "'");
    }
    for (std::size_t k = 0; k < 6; ++k)
        if (col[k] == ncols) throw ParseError(1, "missing column '" + std::string(names[k]) + "'");

    std::vector<TradeRecord> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        out.push_back(detail::parse_ledger_row(line, lineno, col, ncols));
    }
    return out;
}

inline std::vector<TradeRecord> parse_ledger(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_ledger(in);
}

inline std::vector<TradeRecord> read_ledger_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open ledger " + path.string());
    try {
        return parse_ledger(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": " + e.detail());
    }
}

// Numbers are written in shortest round-trip form, so parse(emit(x)) == x.
inline void emit_ledger(std::ostream& out, std::span<const TradeRecord> ledger) {
    out << kLedgerHeader << '\n';
    for (const auto& r : ledger) {
        out << r.timestamp.to_string() << ',' << to_string(r.side) << ',' << to_string(r.fill) << ','
            << csv::format_double(r.price_before) << ',' << csv::format_double(r.price_after) << ','
            << csv::format_double(r.volume) << ',' << csv::format_double(r.currency_volume) << '\n';
    }
}

inline std::string emit_ledger(std::span<const TradeRecord> ledger) {
    std::ostringstream out;
    emit_ledger(out, ledger);
    return out.str();
}

inline void write_ledger_file(const std::filesystem::path& path, std::span<const TradeRecord> ledger) {
    csv::write_file_atomic(path, emit_ledger(ledger));
}

// One row of the per-class summary table. Means are absent when count == 0.
struct SummaryRow {
    TradeClass trade_class = TradeClass::FB;
    std::size_t count = 0;
    std::optional<double> mean_signed_impact_bps;
    std::optional<double> mean_volume;
    std::optional<double> mean_currency_volume;
};

inline std::array<SummaryRow, 4> summarize(std::span<const TradeRecord> ledger) {
    if (ledger.empty()) throw ValidationError("cannot summarize an empty ledger");
    std::array<CompensatedSum, 4> pi, vol, cvol;
    std::array<std::size_t, 4> count{};
    for (const auto& r : ledger) {
        const auto k = class_index(classify(r));
        ++count[k];
        pi[k].add(impact(r).signed_impact);
        vol[k].add(r.volume);
        cvol[k].add(r.currency_volume);
    }
    std::array<SummaryRow, 4> rows;
    for (auto c : kAllClasses) {
        const auto k = class_index(c);
        rows[k].trade_class = c;
        rows[k].count = count[k];
        if (count[k] > 0) {
            const double n = static_cast<double>(count[k]);
            rows[k].mean_signed_impact_bps = pi[k].value() / n * 1e4;
            rows[k].mean_volume = vol[k].value() / n;
            rows[k].mean_currency_volume = cvol[k].value() / n;
        }
    }
    return rows;
}

inline constexpr std::string_view kSummaryHeader = "class,count,pi_bps,volume,currency_volume";

inline std::string format_summary_csv(std::span<const SummaryRow> rows) {
    std::ostringstream out;
    out << kSummaryHeader << '\n';
    for (const auto& r : rows) {
        out << to_string(r.trade_class) << ',' << r.count << ',' << csv::format_optional(r.mean_signed_impact_bps)
            << ',' << csv::format_optional(r.mean_volume) << ',' << csv::format_optional(r.mean_currency_volume)
            << '\n';
    }
    return out.str();
}

inline std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
    std::vector<SummaryRow> out;
    for (const auto& f : csv::read_table(path, kSummaryHeader)) {
        SummaryRow r;
        const auto c = parse_trade_class(f[0]);
        if (!c) throw ValidationError(path.string() + ": unknown class '" + f[0] + "'");
        r.trade_class = *c;
        const auto n = csv::parse_int(f[1]);
        if (!n || *n < 0) throw ValidationError(path.string() + ": bad count '" + f[1] + "'");
        r.count = static_cast<std::size_t>(*n);
        r.mean_signed_impact_bps = csv::parse_double(f[2]);
        r.mean_volume = csv::parse_double(f[3]);
        r.mean_currency_volume = csv::parse_double(f[4]);
        out.push_back(r);
    }
    return out;
}

// Human-readable table in the Number / PI(bps) / Volume / currency Volume layout.
inline std::string format_summary_table(std::span<const SummaryRow> rows) {
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %12s %12s %14s %16s\n", "Group", "Number", "PI(bps)", "Volume",
                  "CurrencyVolume");
    out << buf;
    for (const auto& r : rows) {
        if (r.count == 0) {
            std::snprintf(buf, sizeof buf, "%-6s %12zu %12s %14s %16s\n", std::string(to_string(r.trade_class)).c_str(),
                          r.count, "-", "-", "-");
        } else {
            std::snprintf(buf, sizeof buf, "%-6s %12zu %12.4f %14.1f %16.1f\n",
                          std::string(to_string(r.trade_class)).c_str(), r.count, *r.mean_signed_impact_bps,
                          *r.mean_volume, *r.mean_currency_volume);
        }
        out << buf;
    }
    return out.str();
}

// Records of one class, temporal order preserved.
inline std::vector<TradeRecord> filter_class(std::span<const TradeRecord> ledger, TradeClass c) {
    std::vector<TradeRecord> out;
    for (const auto& r : ledger)
        if (classify(r) == c) out.push_back(r);
    return out;
}

}  // namespace impact
