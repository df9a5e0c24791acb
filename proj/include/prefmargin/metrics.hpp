#pragma once

// Evaluation of reward models against aggregate preferences, sliced by
// dataset and by category tag, with optional side-by-side comparison of two
// models (delta = comparison - baseline).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "prefmargin/errors.hpp"
#include "prefmargin/prefdata.hpp"
#include "prefmargin/rewardmodel.hpp"
#include "prefmargin/series_metrics.hpp"

namespace prefmargin {

struct SliceMetrics {
    std::optional<double> pearson;  // nullopt: undefined (constant series or n < 2)
    double l1 = 0.0;
};

enum class SliceSection { dataset, pooled, category };

struct SliceRow {
    SliceSection section = SliceSection::dataset;
    std::string slice_name;  // qualified, e.g. "dataset=sim", "answer_multiplicity=multiple_correct"
    std::string label;       // display name
    std::size_t n = 0;
    SliceMetrics baseline;
    std::optional<SliceMetrics> comparison;

    [[nodiscard]] std::optional<double> delta_pearson() const {
        if (!comparison || !comparison->pearson || !baseline.pearson) return std::nullopt;
        return *comparison->pearson - *baseline.pearson;
    }
    [[nodiscard]] std::optional<double> delta_l1() const {
        if (!comparison) return std::nullopt;
        return comparison->l1 - baseline.l1;
    }
};

struct EvaluationReport {
    std::vector<SliceRow> rows;
    bool has_comparison = false;
    std::size_t evaluated = 0;
    std::size_t excluded_no_target = 0;  // examples without human_pref
    std::size_t untagged = 0;            // evaluated examples without category tags
    std::size_t omitted_category_rows = 0;

    [[nodiscard]] const SliceRow* find(std::string_view slice_name) const {
        for (const auto& r : rows) {
            if (r.slice_name == slice_name) return &r;
        }
        return nullptr;
    }
};

namespace detail {

inline SliceMetrics slice_metrics(const std::vector<double>& preds, const std::vector<double>& targets) {
    SliceMetrics m;
    m.l1 = l1(preds, targets);
    if (preds.size() >= 2) m.pearson = pearson(preds, targets);
    return m;
}

struct SliceAccumulator {
    SliceSection section;
    std::string name;
    std::string label;
    std::vector<double> base_preds;
    std::vector<double> comp_preds;
    std::vector<double> targets;
};

}  // namespace detail

/// Evaluates `baseline` and, if given, `comparison` on every example that has
/// human_pref.
inline EvaluationReport evaluate(const RewardModelParams& baseline, const Corpus& corpus,
                                 const RewardModelParams* comparison = nullptr) {
    EvaluationReport report;
    report.has_comparison = comparison != nullptr;

    std::vector<detail::SliceAccumulator> datasets;
    detail::SliceAccumulator pooled{SliceSection::pooled, "all", "All", {}, {}, {}};
    std::vector<detail::SliceAccumulator> categories = {
        {SliceSection::category, "answer_multiplicity=multiple_correct", "Multiple Correct", {}, {}, {}},
        {SliceSection::category, "answer_multiplicity=single_correct", "Single Correct", {}, {}, {}},
        {SliceSection::category, "distinguishability=distinguishable", "Distinguishable", {}, {}, {}},
        {SliceSection::category, "distinguishability=indistinguishable", "Indistinguishable", {}, {}, {}},
    };

    auto add = [&](detail::SliceAccumulator& acc, double base, double comp, double target) {
        acc.base_preds.push_back(base);
        if (comparison) acc.comp_preds.push_back(comp);
        acc.targets.push_back(target);
    };

    for (const auto& ex : corpus.examples) {
        if (!ex.human_pref) {
            ++report.excluded_no_target;
            continue;
        }
        ++report.evaluated;
        const double target = *ex.human_pref;
        const double base = predict_preference(baseline, ex);
        const double comp = comparison ? predict_preference(*comparison, ex) : 0.0;

        detail::SliceAccumulator* ds = nullptr;
        const std::string name = "dataset=" + ex.dataset;
        for (auto& acc : datasets) {
            if (acc.name == name) ds = &acc;
        }
        if (!ds) {
            datasets.push_back({SliceSection::dataset, name, ex.dataset, {}, {}, {}});
            ds = &datasets.back();
        }
        add(*ds, base, comp, target);
        add(pooled, base, comp, target);

        if (!ex.category) {
            ++report.untagged;
            continue;
        }
        const auto& tags = *ex.category;
        add(categories[tags.answer_multiplicity == AnswerMultiplicity::multiple_correct ? 0 : 1], base, comp, target);
        add(categories[tags.distinguishability == Distinguishability::distinguishable ? 2 : 3], base, comp, target);
    }
    if (report.evaluated == 0) throw PreconditionError("evaluate: no example carries human_pref");

    auto emit = [&](const detail::SliceAccumulator& acc) {
        SliceRow r;
        r.section = acc.section;
        r.slice_name = acc.name;
        r.label = acc.label;
        r.n = acc.targets.size();
        r.baseline = detail::slice_metrics(acc.base_preds, acc.targets);
        if (comparison) r.comparison = detail::slice_metrics(acc.comp_preds, acc.targets);
        report.rows.push_back(std::move(r));
    };
    for (const auto& acc : datasets) emit(acc);
    emit(pooled);
    for (const auto& acc : categories) {
        if (acc.targets.empty()) {
            ++report.omitted_category_rows;
            continue;
        }
        emit(acc);
    }
    return report;
}

inline EvaluationReport evaluate(const TrainedModel& model, const Corpus& corpus) {
    return evaluate(model.params, corpus);
}

inline EvaluationReport evaluate(const TrainedModel& baseline, const TrainedModel& comparison, const Corpus& corpus) {
    return evaluate(baseline.params, corpus, &comparison.params);
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { markdown, csv, json };

inline ReportFormat parse_report_format(std::string_view s) {
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    throw PreconditionError("unknown report format '" + std::string(s) + "'");
}

inline constexpr std::string_view kUndefinedMarker = "\xE2\x80\x94";  // em dash

namespace detail {

inline std::string format_number(double v, bool full_precision) {
    if (full_precision) {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
        (void)ec;
        return std::string(buf, end);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    std::string s(buf);
    if (s == "-0.000") s = "0.000";
    return s;
}

inline std::string format_optional(const std::optional<double>& v, bool full_precision) {
    return v ? format_number(*v, full_precision) : std::string(kUndefinedMarker);
}

inline std::string section_name(SliceSection s) {
    switch (s) {
        case SliceSection::dataset: return "dataset";
        case SliceSection::pooled: return "pooled";
        case SliceSection::category: return "category";
    }
    return "?";
}

inline void markdown_table(std::ostringstream& out, const EvaluationReport& report, bool category_panel,
                           bool pearson_metric) {
    out << "| " << (category_panel ? "Category" : "Dataset") << " | N |";
    if (report.has_comparison) out << " Baseline | Model | \xCE\x94 |\n|---|---:|---:|---:|---:|\n";
    else out << " Model |\n|---|---:|---:|\n";
    for (const auto& r : report.rows) {
        if ((r.section == SliceSection::category) != category_panel) continue;
        out << "| " << r.label << " | " << r.n << " | ";
        if (pearson_metric) {
            out << format_optional(r.baseline.pearson, false);
            if (report.has_comparison) {
                out << " | " << format_optional(r.comparison->pearson, false) << " | "
                    << format_optional(r.delta_pearson(), false);
            }
        } else {
            out << format_number(r.baseline.l1, false);
            if (report.has_comparison) {
                out << " | " << format_number(r.comparison->l1, false) << " | "
                    << format_optional(r.delta_l1(), false);
            }
        }
        out << " |\n";
    }
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
    auto metrics = [](const SliceMetrics& m) {
        nlohmann::ordered_json j;
        j["pearson"] = m.pearson ? nlohmann::ordered_json(*m.pearson) : nullptr;
        j["l1"] = m.l1;
        return j;
    };
    nlohmann::ordered_json j;
    j["evaluated"] = report.evaluated;
    j["excluded_no_human_pref"] = report.excluded_no_target;
    j["untagged"] = report.untagged;
    j["omitted_category_rows"] = report.omitted_category_rows;
    j["has_comparison"] = report.has_comparison;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        nlohmann::ordered_json row;
        row["section"] = detail::section_name(r.section);
        row["slice"] = r.slice_name;
        row["label"] = r.label;
        row["n"] = r.n;
        row["baseline"] = metrics(r.baseline);
        if (r.comparison) {
            row["comparison"] = metrics(*r.comparison);
            auto dp = r.delta_pearson();
            row["delta"] = {{"pearson", dp ? nlohmann::ordered_json(*dp) : nlohmann::ordered_json(nullptr)},
                            {"l1", *r.delta_l1()}};
        }
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

/// Markdown: a Pearson panel and an L1 panel, each split into dataset and
/// category tables. CSV: one row per slice. Numbers use 3 decimals unless
/// full_precision is set.
inline std::string render_report(const EvaluationReport& report, ReportFormat format, bool full_precision = false) {
    std::ostringstream out;
    if (format == ReportFormat::json) return report_to_json(report).dump(2) + "\n";

    if (format == ReportFormat::csv) {
        if (report.has_comparison) {
            out << "slice,n,baseline_pearson,comparison_pearson,delta_pearson,baseline_l1,comparison_l1,delta_l1\n";
        } else {
            out << "slice,n,pearson,l1\n";
        }
        for (const auto& r : report.rows) {
            out << r.slice_name << ',' << r.n << ',' << detail::format_optional(r.baseline.pearson, full_precision);
            if (report.has_comparison) {
                out << ',' << detail::format_optional(r.comparison->pearson, full_precision) << ','
                    << detail::format_optional(r.delta_pearson(), full_precision);
            }
            out << ',' << detail::format_number(r.baseline.l1, full_precision);
            if (report.has_comparison) {
                out << ',' << detail::format_number(r.comparison->l1, full_precision) << ','
                    << detail::format_optional(r.delta_l1(), full_precision);
            }
            out << '\n';
        }
        return out.str();
    }

    const bool any_category = std::any_of(report.rows.begin(), report.rows.end(),
                                          [](const auto& r) { return r.section == SliceSection::category; });
    for (bool pearson_metric : {true, false}) {
        out << (pearson_metric ? "### Pearson correlation\n\n" : "### L1 loss\n\n");
        detail::markdown_table(out, report, false, pearson_metric);
        if (any_category) {
            out << '\n';
            detail::markdown_table(out, report, true, pearson_metric);
        }
        out << '\n';
    }
    std::vector<std::string> notes;
    if (report.omitted_category_rows) {
        notes.push_back(std::to_string(report.omitted_category_rows) + " empty category row(s) omitted");
    }
    if (report.untagged) notes.push_back(std::to_string(report.untagged) + " example(s) without category tags");
    if (report.excluded_no_target) {
        notes.push_back(std::to_string(report.excluded_no_target) + " example(s) without human_pref excluded");
    }
    for (const auto& note : notes) out << "_" << note << "._\n";
    return out.str();
}

}  // namespace prefmargin
