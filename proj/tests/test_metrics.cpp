#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "prefmargin/metrics.hpp"
#include "test_support.hpp"

using namespace prefmargin;

namespace {

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Linear model whose predicted preference equals `target` when
// features_a = [logit(target)] and features_b = [0].
RewardModelParams identity_scorer() {
    RewardModelParams p;
    p.architecture = Architecture::linear();
    p.input_dim = 1;
    p.theta = {1.0, 0.0};
    return p;
}

PreferenceExample example_with_target(std::string id, double target, std::string dataset = "sim") {
    auto ex = testing_support::make_example(std::move(id), {std::log(target / (1.0 - target))}, {0.0}, 0,
                                            std::move(dataset));
    ex.human_pref = target;
    return ex;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Metrics, PearsonFixedExamples) {
    const std::vector<double> xs{1, 2, 3};
    EXPECT_NEAR(*pearson(xs, xs), 1.0, 1e-12);
    EXPECT_NEAR(*pearson(xs, std::vector<double>{2, 4, 6}), 1.0, 1e-12);
    EXPECT_NEAR(*pearson(xs, std::vector<double>{-1, -2, -3}), -1.0, 1e-12);
    EXPECT_NEAR(*pearson(xs, std::vector<double>{1, 3, 2}), 0.5, 1e-12);
}

TEST(Metrics, PearsonUndefinedAndErrors) {
    EXPECT_FALSE(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
    EXPECT_FALSE(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5}).has_value());
    EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), PreconditionError);
    EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), PreconditionError);
}

TEST(Metrics, L1FixedExamples) {
    EXPECT_EQ(l1(std::vector<double>{0.3, 0.6}, std::vector<double>{0.3, 0.6}), 0.0);
    EXPECT_NEAR(l1(std::vector<double>{0.7}, std::vector<double>{0.5}), 0.2, 1e-12);
    EXPECT_NEAR(l1(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 1.0, 1e-12);
    EXPECT_THROW(l1(std::vector<double>{0.5}, std::vector<double>{0.5, 0.1}), PreconditionError);
    EXPECT_THROW(l1(std::vector<double>{}, std::vector<double>{}), PreconditionError);
    EXPECT_THROW(l1(std::vector<double>{1.5}, std::vector<double>{0.5}), PreconditionError);
}

TEST(Metrics, PearsonAffineInvarianceProperty) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> coef(-5.0, 5.0);
    std::uniform_int_distribution<std::size_t> len(2, 60);
    for (int t = 0; t < 1000; ++t) {
        const auto n = len(rng);
        const auto xs = random_series(rng, n, -3.0, 3.0);
        const auto ys = random_series(rng, n, -3.0, 3.0);
        double a = coef(rng);
        if (std::fabs(a) < 1e-3) a = 1.0;
        const double b = coef(rng);
        std::vector<double> axb(n), ayb(n);
        for (std::size_t i = 0; i < n; ++i) {
            axb[i] = a * xs[i] + b;
            ayb[i] = std::fabs(a) * ys[i] + b;
        }
        ASSERT_NEAR(*pearson(xs, axb), a > 0 ? 1.0 : -1.0, 1e-12);
        const double r = *pearson(xs, ys);
        ASSERT_NEAR(*pearson(ys, xs), r, 1e-12);
        ASSERT_NEAR(*pearson(xs, ayb), r, 1e-12);
        ASSERT_GE(r, -1.0);
        ASSERT_LE(r, 1.0);
    }
}

TEST(Metrics, L1MetricAxiomsProperty) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> len(1, 50);
    for (int t = 0; t < 1000; ++t) {
        const auto n = len(rng);
        const auto a = random_series(rng, n), b = random_series(rng, n), c = random_series(rng, n);
        ASSERT_GE(l1(a, b), 0.0);
        ASSERT_EQ(l1(a, a), 0.0);
        ASSERT_GT(l1(a, b), 0.0);
        ASSERT_EQ(l1(a, b), l1(b, a));
        ASSERT_LE(l1(a, c), l1(a, b) + l1(b, c) + 1e-15);
    }
}

TEST(Metrics, PerfectModelOnEverySlice) {
    Corpus c;
    const double targets[] = {0.1, 0.3, 0.45, 0.6, 0.8, 0.95, 0.2, 0.7};
    for (int i = 0; i < 8; ++i) {
        auto ex = example_with_target("e" + std::to_string(i), targets[i], i < 4 ? "a" : "b");
        ex.category = CategoryTags{i % 2 ? AnswerMultiplicity::multiple_correct : AnswerMultiplicity::single_correct,
                                   i % 3 ? Distinguishability::distinguishable : Distinguishability::indistinguishable};
        c.examples.push_back(ex);
    }
    const auto report = evaluate(identity_scorer(), c);
    ASSERT_EQ(report.rows.size(), 7u);
    for (const auto& row : report.rows) {
        EXPECT_NEAR(*row.baseline.pearson, 1.0, 1e-12) << row.slice_name;
        EXPECT_NEAR(row.baseline.l1, 0.0, 1e-12) << row.slice_name;
    }
}

TEST(Metrics, ConstantTargetsGiveUndefinedPearson) {
    Corpus c;
    for (int i = 0; i < 5; ++i) {
        auto ex = testing_support::make_example("e" + std::to_string(i), {0.2 * i}, {0.0});
        ex.human_pref = 0.5;
        c.examples.push_back(ex);
    }
    const auto params = identity_scorer();
    const auto report = evaluate(params, c);
    const auto* all = report.find("all");
    ASSERT_NE(all, nullptr);
    EXPECT_FALSE(all->baseline.pearson.has_value());
    double expected = 0.0;
    for (const auto& ex : c.examples) expected += std::fabs(predict_preference(params, ex) - 0.5);
    EXPECT_NEAR(all->baseline.l1, expected / 5.0, 1e-12);
    EXPECT_NE(render_report(report, ReportFormat::markdown).find("\xE2\x80\x94"), std::string::npos);
}

TEST(Metrics, RowsCoverDatasetsAndCountExclusions) {
    auto c = testing_support::simulated_corpus(40);
    c.examples[0].human_pref.reset();
    c.examples[1].category.reset();
    for (std::size_t i = 20; i < 40; ++i) c.examples[i].dataset = "ood";
    const auto params = initialize_params(Architecture::linear(), 8, 3);
    const auto report = evaluate(params, c);
    EXPECT_EQ(report.evaluated, 39u);
    EXPECT_EQ(report.excluded_no_target, 1u);
    EXPECT_EQ(report.untagged, 1u);
    EXPECT_EQ(report.find("dataset=sim")->n + report.find("dataset=ood")->n, 39u);
    EXPECT_EQ(report.find("all")->n, 39u);
    EXPECT_EQ(report.rows[0].slice_name, "dataset=sim");
    EXPECT_EQ(report.rows[1].slice_name, "dataset=ood");
    EXPECT_EQ(report.rows[2].slice_name, "all");

    // pooled L1 is the count-weighted mean of dataset L1
    const auto* sim = report.find("dataset=sim");
    const auto* ood = report.find("dataset=ood");
    EXPECT_NEAR(report.find("all")->baseline.l1,
                (sim->baseline.l1 * sim->n + ood->baseline.l1 * ood->n) / (sim->n + ood->n), 1e-12);

    c.examples[0].human_pref = 0.5;
    for (auto& ex : c.examples) ex.human_pref.reset();
    EXPECT_THROW(evaluate(params, c), PreconditionError);
}

TEST(Metrics, EmptyCategoryRowsOmitted) {
    CorpusSpec cs;
    cs.n_examples = 30;
    cs.fraction_indistinguishable = 0.0;
    const auto c = generate_corpus(cs, testing_support::small_population());
    const auto report = evaluate(initialize_params(Architecture::linear(), 8, 0), c);
    EXPECT_EQ(report.omitted_category_rows, 1u);
    EXPECT_EQ(report.find("distinguishability=indistinguishable"), nullptr);
    EXPECT_NE(render_report(report, ReportFormat::markdown).find("1 empty category row(s) omitted"),
              std::string::npos);
}

TEST(Metrics, ComparisonDeltaIsDifferenceOfSingleReports) {
    const auto c = testing_support::simulated_corpus(120, 8, 4);
    const auto a = initialize_params(Architecture::linear(), 8, 1);
    const auto b = initialize_params(Architecture::mlp({8}), 8, 2);
    const auto ra = evaluate(a, c), rb = evaluate(b, c), both = evaluate(a, c, &b);
    ASSERT_EQ(both.rows.size(), ra.rows.size());
    for (std::size_t i = 0; i < both.rows.size(); ++i) {
        const auto& row = both.rows[i];
        EXPECT_EQ(row.slice_name, ra.rows[i].slice_name);
        EXPECT_EQ(row.baseline.l1, ra.rows[i].baseline.l1);
        EXPECT_EQ(row.comparison->l1, rb.rows[i].baseline.l1);
        EXPECT_EQ(*row.delta_l1(), rb.rows[i].baseline.l1 - ra.rows[i].baseline.l1);
        EXPECT_EQ(*row.delta_pearson(), *rb.rows[i].baseline.pearson - *ra.rows[i].baseline.pearson);
    }
}

TEST(Metrics, ThreeDecimalRendering) {
    EXPECT_EQ(detail::format_number(0.7341, false), "0.734");
    EXPECT_EQ(detail::format_number(-0.0001, false), "0.000");
    EXPECT_EQ(detail::format_number(0.1, true), "0.1");
}

TEST(Metrics, CsvAndJsonShapes) {
    const auto c = testing_support::simulated_corpus(30, 8, 6);
    const auto a = initialize_params(Architecture::linear(), 8, 1);
    const auto csv = render_report(evaluate(a, c, &a), ReportFormat::csv);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "slice,n,baseline_pearson,comparison_pearson,delta_pearson,baseline_l1,comparison_l1,delta_l1");
    EXPECT_NE(csv.find("\nall,30,"), std::string::npos);
    const auto single = render_report(evaluate(a, c), ReportFormat::csv);
    EXPECT_EQ(single.substr(0, single.find('\n')), "slice,n,pearson,l1");
    const auto j = nlohmann::json::parse(render_report(evaluate(a, c), ReportFormat::json));
    EXPECT_EQ(j["evaluated"], 30);
}

TEST(Metrics, GoldenMarkdownReport) {
    const auto pop = testing_support::small_population(8, 31);
    CorpusSpec cs;
    cs.n_examples = 60;
    cs.seed = 31;
    const auto c = generate_corpus(cs, pop);
    const auto a = initialize_params(Architecture::linear(), 8, 5);
    const auto b = initialize_params(Architecture::mlp({4}), 8, 6);
    const auto text = render_report(evaluate(a, c, &b), ReportFormat::markdown);
    const std::string golden = std::string(PREFMARGIN_GOLDEN_DIR) + "/report_comparison.md";
    if (std::getenv("PREFMARGIN_UPDATE_GOLDEN")) {
        std::ofstream(golden, std::ios::binary) << text;
    }
    EXPECT_EQ(text, read_file(golden));
}
