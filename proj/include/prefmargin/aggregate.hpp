#pragma once

// Aggregate preference and margin from a set of binary judgments.
//
//   p*  = #{j == 0} / n                      fraction preferring y0
//   m   = | sum(j) - n/2 | / (n/2)           in [0,1]; 1 when unanimous
//
// Both are computed as exact quotients of small integers. The margin is
// unsigned: it measures how contested the pair is, not which side won.
// For odd n the smallest reachable margin is 1/n.

#include <cstddef>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "prefmargin/errors.hpp"
#include "prefmargin/prefdata.hpp"

namespace prefmargin {

struct AggregatePreference {
    double p_star = 0.5;
};

struct MarginValue {
    double value = 0.0;
};

inline AggregatePreference aggregate_preference(std::span<const int> judgments) {
    if (judgments.empty()) throw PreconditionError("aggregate_preference: empty judgment set");
    std::size_t zeros = 0;
    for (int j : judgments) {
        if (j != 0 && j != 1) throw PreconditionError("aggregate_preference: judgments must be 0 or 1");
        zeros += (j == 0) ? 1 : 0;
    }
    return {static_cast<double>(zeros) / static_cast<double>(judgments.size())};
}

inline AggregatePreference aggregate_preference(const JudgmentSet& js) {
    return aggregate_preference(std::span<const int>(js.values));
}

inline MarginValue compute_margin(std::span<const int> judgments) {
    if (judgments.empty()) throw PreconditionError("compute_margin: empty judgment set");
    long long ones = 0;
    for (int j : judgments) {
        if (j != 0 && j != 1) throw PreconditionError("compute_margin: judgments must be 0 or 1");
        ones += j;
    }
    const auto n = static_cast<long long>(judgments.size());
    // |ones - n/2| / (n/2) == |2*ones - n| / n, both integers.
    return {static_cast<double>(std::llabs(2 * ones - n)) / static_cast<double>(n)};
}

inline MarginValue compute_margin(const JudgmentSet& js) {
    return compute_margin(std::span<const int>(js.values));
}

/// Populates `margin` on every example from its judgments. human_pref is
/// never touched. Throws PreconditionError naming every example that lacks
/// judgments.
inline Corpus attach_aggregates(Corpus corpus) {
    std::vector<std::string> missing;
    for (const auto& ex : corpus.examples) {
        if (!ex.judgments || ex.judgments->values.empty()) missing.push_back(ex.id);
    }
    if (!missing.empty()) {
        std::string ids;
        for (std::size_t i = 0; i < missing.size(); ++i) {
            if (i == 10) {
                ids += ", ... (" + std::to_string(missing.size()) + " total)";
                break;
            }
            if (i) ids += ", ";
            ids += missing[i];
        }
        throw PreconditionError("examples missing judgments: " + ids);
    }
    for (auto& ex : corpus.examples) ex.margin = compute_margin(*ex.judgments).value;
    return corpus;
}

}  // namespace prefmargin
