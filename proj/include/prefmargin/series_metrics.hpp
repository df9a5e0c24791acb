#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "prefmargin/errors.hpp"

namespace prefmargin {

/// Sample Pearson correlation. Returns nullopt (the "undefined" marker) when
/// either series is constant.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw PreconditionError("pearson: length mismatch (" + std::to_string(xs.size()) + " vs " +
                                std::to_string(ys.size()) + ")");
    }
    if (xs.size() < 2) throw PreconditionError("pearson: need at least 2 points");

    auto constant = [](std::span<const double> s) {
        for (double v : s) {
            if (v != s.front()) return false;
        }
        return true;
    };
    if (constant(xs) || constant(ys)) return std::nullopt;

    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    double r = sxy / std::sqrt(sxx * syy);
    if (r > 1.0) r = 1.0;
    if (r < -1.0) r = -1.0;
    return r;
}

/// Mean absolute difference between two series on [0,1].
inline double l1(std::span<const double> preds, std::span<const double> targets) {
    if (preds.size() != targets.size()) {
        throw PreconditionError("l1: length mismatch (" + std::to_string(preds.size()) + " vs " +
                                std::to_string(targets.size()) + ")");
    }
    if (preds.empty()) throw PreconditionError("l1: empty series");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double p = preds[i];
        const double t = targets[i];
        if (!(p >= 0.0 && p <= 1.0) || !(t >= 0.0 && t <= 1.0)) {
            throw PreconditionError("l1: value outside [0,1] at index " + std::to_string(i));
        }
        sum += std::fabs(p - t);
    }
    return sum / static_cast<double>(preds.size());
}

}  // namespace prefmargin
