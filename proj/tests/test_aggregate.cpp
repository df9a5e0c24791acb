#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "prefmargin/aggregate.hpp"
#include "test_support.hpp"

using namespace prefmargin;

namespace {

std::vector<int> bits(unsigned mask, int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = (mask >> i) & 1;
    return v;
}

// Direct evaluation of the two formulas with independent arithmetic.
double oracle_p_star(const std::vector<int>& v) {
    int zeros = 0;
    for (int x : v) zeros += (x == 0);
    return static_cast<double>(zeros) / static_cast<double>(v.size());
}

double oracle_margin(const std::vector<int>& v) {
    double sum = 0.0;
    for (int x : v) sum += x;
    const double half = static_cast<double>(v.size()) / 2.0;
    return std::fabs(sum - half) / half;
}

}  // namespace

TEST(Aggregate, FixedExamples) {
    EXPECT_EQ(aggregate_preference(std::vector<int>(10, 0)).p_star, 1.0);
    EXPECT_EQ(aggregate_preference(std::vector<int>(10, 1)).p_star, 0.0);
    EXPECT_DOUBLE_EQ(aggregate_preference(std::vector<int>{0, 0, 0, 0, 0, 0, 0, 1, 1, 1}).p_star, 0.7);

    EXPECT_EQ(compute_margin(std::vector<int>(10, 0)).value, 1.0);
    EXPECT_EQ(compute_margin(std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1, 0, 1}).value, 0.0);
    EXPECT_DOUBLE_EQ(compute_margin(std::vector<int>{1, 1, 1, 1, 1, 1, 1, 0, 0, 0}).value, 0.4);
    EXPECT_NEAR(compute_margin(std::vector<int>{0, 0, 1}).value, 1.0 / 3.0, 1e-15);
}

TEST(Aggregate, EmptyJudgmentsRejected) {
    EXPECT_THROW(aggregate_preference(std::vector<int>{}), PreconditionError);
    EXPECT_THROW(compute_margin(std::vector<int>{}), PreconditionError);
    EXPECT_THROW(compute_margin(std::vector<int>{0, 2}), PreconditionError);
}

TEST(Aggregate, BruteForceAllVectorsUpTo12) {
    for (int n = 1; n <= 12; ++n) {
        std::set<double> image;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            const auto v = bits(mask, n);
            const double p = aggregate_preference(v).p_star;
            const double m = compute_margin(v).value;
            ASSERT_NEAR(p, oracle_p_star(v), 1e-15);
            ASSERT_NEAR(m, oracle_margin(v), 1e-15);
            ASSERT_NEAR(m, std::fabs(2.0 * p - 1.0), 1e-15);
            ASSERT_GE(m, 0.0);
            ASSERT_LE(m, 1.0);
            image.insert(m);

            auto flipped = v;
            for (int& x : flipped) x = 1 - x;
            ASSERT_EQ(compute_margin(flipped).value, m);
            auto rotated = v;
            std::rotate(rotated.begin(), rotated.begin() + 1, rotated.end());
            ASSERT_EQ(compute_margin(rotated).value, m);
        }
        if (n % 2 == 0) {
            std::set<double> expected;
            for (int k = 0; k <= n; k += 2) expected.insert(static_cast<double>(k) / n);
            ASSERT_EQ(image.size(), expected.size()) << "n=" << n;
            auto it = expected.begin();
            for (double m : image) ASSERT_NEAR(m, *it++, 1e-15);
        } else {
            ASSERT_NEAR(*image.begin(), 1.0 / n, 1e-15) << "n=" << n;
        }
    }
}

TEST(Aggregate, AttachUnanimous) {
    auto corpus = testing_support::simulated_corpus(10);
    for (auto& ex : corpus.examples) ex.judgments = JudgmentSet{std::vector<int>(10, 1), "t"};
    corpus = attach_aggregates(std::move(corpus));
    for (const auto& ex : corpus.examples) EXPECT_EQ(*ex.margin, 1.0);
}

TEST(Aggregate, AttachNeverOverwritesHumanPref) {
    Corpus c;
    auto ex = testing_support::make_example("e", {1}, {0});
    ex.human_pref = 0.7;
    ex.judgments = JudgmentSet{std::vector<int>(10, 0), "t"};
    c.examples.push_back(ex);
    c = attach_aggregates(std::move(c));
    EXPECT_EQ(*c.examples[0].margin, 1.0);
    EXPECT_EQ(*c.examples[0].human_pref, 0.7);
}

TEST(Aggregate, AttachReportsMissingIds) {
    auto corpus = testing_support::simulated_corpus(3);
    corpus.examples[0].judgments = JudgmentSet{{0}, "t"};
    try {
        attach_aggregates(corpus);
        FAIL();
    } catch (const PreconditionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(corpus.examples[1].id), std::string::npos);
        EXPECT_NE(msg.find(corpus.examples[2].id), std::string::npos);
    }
}

TEST(Aggregate, AttachMatchesOracleOnSimulatedCorpus) {
    const auto pop = testing_support::small_population();
    CorpusSpec cs;
    cs.n_examples = 1000;
    cs.seed = 5;
    auto corpus = generate_corpus(cs, pop);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        corpus.examples[i].judgments = sample_judgments_simulated(corpus.examples[i], pop, 1 + i % 12, i);
    }
    const auto out = attach_aggregates(corpus);
    for (std::size_t i = 0; i < out.size(); ++i) {
        ASSERT_NEAR(*out.examples[i].margin, oracle_margin(out.examples[i].judgments->values), 1e-15);
        ASSERT_EQ(out.examples[i].human_pref, corpus.examples[i].human_pref);
    }
}
