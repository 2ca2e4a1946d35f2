#pragma once

// The two competing impact laws in normalized coordinates
// (x = size / mean size, y = impact / mean impact):
//
//   power law    PL:  y = a * x^gamma
//   logarithmic  LG:  y = c * log10(1 + d * x)
//
// Parameter constraints (a, c, d > 0) are enforced by the estimator; the
// evaluator only guards its own domain.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "impact/errors.hpp"

namespace impact {

enum class ModelKind { PL, LG };

inline constexpr std::array<ModelKind, 2> kAllModels{ModelKind::PL, ModelKind::LG};

constexpr std::string_view to_string(ModelKind k) { return k == ModelKind::PL ? "PL" : "LG"; }

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
    if (s == "PL" || s == "pl") return ModelKind::PL;
    if (s == "LG" || s == "lg") return ModelKind::LG;
    return std::nullopt;
}

// Names of (p1, p2): (a, gamma) for PL, (c, d) for LG.
constexpr std::array<std::string_view, 2> param_names(ModelKind k) {
    if (k == ModelKind::PL) return {"a", "gamma"};
    return {"c", "d"};
}

// Index of a named parameter within its model, if the name belongs to it.
inline std::optional<std::size_t> param_index(ModelKind k, std::string_view name) {
    const auto names = param_names(k);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    return std::nullopt;
}

struct ModelParams {
    ModelKind kind = ModelKind::PL;
    double p1 = 1.0;
    double p2 = 0.5;

    static constexpr ModelParams power_law(double a, double gamma) { return {ModelKind::PL, a, gamma}; }
    static constexpr ModelParams logarithmic(double c, double d) { return {ModelKind::LG, c, d}; }

    constexpr std::array<double, 2> values() const { return {p1, p2}; }
    constexpr double operator[](std::size_t i) const { return i == 0 ? p1 : p2; }

    bool operator==(const ModelParams&) const = default;
};

inline double evaluate(const ModelParams& p, double x) {
    if (!(x > 0.0)) throw DomainError("impact model evaluated at non-positive size " + std::to_string(x));
    if (p.kind == ModelKind::PL) return p.p1 * std::pow(x, p.p2);
    const double arg = 1.0 + p.p2 * x;
    if (!(arg > 0.0)) throw DomainError("logarithmic model: 1 + d*x must be positive");
    return p.p1 * std::log10(arg);
}

// (dy/dp1, dy/dp2) at x.
inline std::array<double, 2> gradient(const ModelParams& p, double x) {
    if (!(x > 0.0)) throw DomainError("impact model gradient at non-positive size " + std::to_string(x));
    if (p.kind == ModelKind::PL) {
        const double xg = std::pow(x, p.p2);
        return {xg, p.p1 * xg * std::log(x)};
    }
    const double arg = 1.0 + p.p2 * x;
    if (!(arg > 0.0)) throw DomainError("logarithmic model: 1 + d*x must be positive");
    return {std::log10(arg), p.p1 * x / (arg * std::numbers::ln10)};
}

}  // namespace impact
