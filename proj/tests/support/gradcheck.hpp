#pragma once

// Central finite-difference gradient oracle for the pairwise objectives.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "prefmargin/rewardmodel.hpp"

namespace testing_support {

inline double batch_loss(const prefmargin::RewardModelParams& p, const std::vector<prefmargin::PreferenceExample>& batch,
                         prefmargin::Objective objective) {
    double total = 0.0;
    for (const auto& ex : batch) total += prefmargin::pairwise_loss(p, ex, objective);
    return total / static_cast<double>(batch.size());
}

inline std::vector<double> finite_difference_gradient(const prefmargin::RewardModelParams& p,
                                                      const std::vector<prefmargin::PreferenceExample>& batch,
                                                      prefmargin::Objective objective, double h = 1e-5) {
    std::vector<double> g(p.theta.size());
    auto q = p;
    for (std::size_t k = 0; k < p.theta.size(); ++k) {
        q.theta[k] = p.theta[k] + h;
        const double up = batch_loss(q, batch, objective);
        q.theta[k] = p.theta[k] - h;
        const double down = batch_loss(q, batch, objective);
        q.theta[k] = p.theta[k];
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

/// max_k |a_k - n_k| / max(|a_k|, |n_k|, floor); the floor keeps entries that
/// are zero up to rounding from dominating.
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        const double scale = std::max({std::fabs(analytic[k]), std::fabs(numeric[k]), floor});
        worst = std::max(worst, std::fabs(analytic[k] - numeric[k]) / scale);
    }
    return worst;
}

struct GradCheckDraw {
    prefmargin::RewardModelParams params;
    std::vector<prefmargin::PreferenceExample> batch;
};

/// Random architecture in {linear, mlp[8]}, random params, 8 examples with
/// random margins in [0,1].
inline GradCheckDraw random_gradcheck_draw(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> dim_dist(1, 6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d = dim_dist(rng);
    const auto arch = unit(rng) < 0.5 ? prefmargin::Architecture::linear() : prefmargin::Architecture::mlp({8});
    GradCheckDraw draw;
    draw.params = prefmargin::initialize_params(arch, d, rng());
    for (auto& t : draw.params.theta) t += 0.3 * normal(rng);  // non-zero biases too
    for (int i = 0; i < 8; ++i) {
        prefmargin::PreferenceExample ex;
        ex.id = "g" + std::to_string(i);
        ex.dataset = "grad";
        ex.features_a.resize(d);
        ex.features_b.resize(d);
        for (auto& v : ex.features_a) v = normal(rng);
        for (auto& v : ex.features_b) v = normal(rng);
        ex.chosen = unit(rng) < 0.5 ? 0 : 1;
        ex.margin = unit(rng);
        draw.batch.push_back(std::move(ex));
    }
    return draw;
}

}  // namespace testing_support
