#pragma once

// Simulated annotator populations and corpora with exact ground truth.
//
// Annotator k has a linear utility u_k(y) = w_k . phi(y) plus logistic
// noise of scale s per judgment, so
//
//     P(k prefers y0) = sigmoid(w_k . (phi0 - phi1) / s)
//
// and the population aggregate p* is the mean of that over k. With s = 0 the
// sigmoid becomes a step (ties count one half).
//
// Pair geometry for generated corpora (delta = phi0 - phi1, w_hat = mean
// direction, u a random unit vector orthogonal to w_hat):
//
//     delta = +-r (cos(b) w_hat + sin(b) u)
//
//   single_correct     b ~ U(0, 0.3)        annotators agree on the sign
//   multiple_correct   b ~ U(1.1, pi/2)     utility gap dominated by taste
//   distinguishable    r ~ sep * U(0.5, 1.5)
//   indistinguishable  r ~ sep * U(0, 0.1)  (tag rule: r < 0.25 * sep)
//
// Single-correct distinguishable pairs are redrawn until p* lies outside
// (0.1, 0.9).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmargin/aggregate.hpp"
#include "prefmargin/errors.hpp"
#include "prefmargin/prefdata.hpp"

namespace prefmargin {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
    return mix_seed(mix_seed(mix_seed(base) ^ stream) ^ index);
}

namespace streams {
inline constexpr std::uint64_t population = 0x706f70;
inline constexpr std::uint64_t corpus = 0x636f7270;
inline constexpr std::uint64_t judge = 0x6a756467;
}  // namespace streams

struct PopulationSpec {
    std::size_t size = 100;  // K
    std::size_t dim = 8;     // d
    double dispersion = 0.5;
    double noise_scale = 0.5;
    std::uint64_t seed = 0;
    /// Shared mean w_bar. Empty: a seeded random direction of length mean_norm.
    std::vector<double> mean;
    double mean_norm = 1.0;
};

struct AnnotatorPopulation {
    std::vector<double> mean;
    std::vector<std::vector<double>> weights;
    double dispersion = 0.0;
    double noise_scale = 0.0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const noexcept { return weights.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return mean.size(); }

    friend bool operator==(const AnnotatorPopulation&, const AnnotatorPopulation&) = default;
};

inline AnnotatorPopulation build_population(const PopulationSpec& spec) {
    if (spec.dim < 1) throw PreconditionError("population dimension must be >= 1");
    if (spec.size < 1) throw PreconditionError("population size must be >= 1");
    if (!(spec.dispersion >= 0.0) || !std::isfinite(spec.dispersion)) {
        throw PreconditionError("dispersion must be a finite non-negative number");
    }
    if (!(spec.noise_scale >= 0.0) || !std::isfinite(spec.noise_scale)) {
        throw PreconditionError("noise_scale must be a finite non-negative number");
    }
    if (!spec.mean.empty() && spec.mean.size() != spec.dim) {
        throw PreconditionError("mean weight vector has dimension " + std::to_string(spec.mean.size()) +
                                ", expected " + std::to_string(spec.dim));
    }

    Rng rng(derive_seed(spec.seed, streams::population));
    std::normal_distribution<double> normal(0.0, 1.0);

    AnnotatorPopulation pop;
    pop.dispersion = spec.dispersion;
    pop.noise_scale = spec.noise_scale;
    pop.seed = spec.seed;
    if (spec.mean.empty()) {
        pop.mean.resize(spec.dim);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& v : pop.mean) {
                v = normal(rng);
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& v : pop.mean) v *= spec.mean_norm / norm;
    } else {
        pop.mean = spec.mean;
    }
    pop.weights.assign(spec.size, pop.mean);
    for (auto& w : pop.weights) {
        for (auto& v : w) v += spec.dispersion * normal(rng);
    }
    return pop;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline void check_population_dim(const PreferenceExample& ex, const AnnotatorPopulation& pop) {
    if (ex.features_a.size() != pop.dim() || ex.features_b.size() != pop.dim()) {
        throw PreconditionError("example '" + ex.id + "' has dimension " + std::to_string(ex.features_a.size()) +
                                " but the population has dimension " + std::to_string(pop.dim()));
    }
}

inline double logistic_cdf(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

/// Probability that annotator k prefers y0 given utility gap g = w_k.(phi0 - phi1).
inline double prefer_first_probability(double gap, double noise_scale) {
    if (noise_scale == 0.0) return gap > 0.0 ? 1.0 : (gap < 0.0 ? 0.0 : 0.5);
    return detail::logistic_cdf(gap / noise_scale);
}

/// Exact population fraction preferring y0.
inline AggregatePreference true_aggregate(const PreferenceExample& ex, const AnnotatorPopulation& pop) {
    detail::check_population_dim(ex, pop);
    std::vector<double> diff(pop.dim());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ex.features_a[i] - ex.features_b[i];
    double total = 0.0;
    for (const auto& w : pop.weights) total += prefer_first_probability(detail::dot(w, diff), pop.noise_scale);
    return {total / static_cast<double>(pop.size())};
}

/// One noisy judgment from annotator k: 0 if y0 preferred, 1 otherwise.
/// `diff` is phi1 - phi0.
inline int draw_judgment(const AnnotatorPopulation& pop, std::size_t k, std::span<const double> diff, Rng& rng) {
    const double gap = detail::dot(pop.weights[k], diff);  // utility(y1) - utility(y0)
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (pop.noise_scale == 0.0) {
        if (gap > 0.0) return 1;
        if (gap < 0.0) return 0;
        return unit(rng) < 0.5 ? 0 : 1;
    }
    double u = 0.0;
    do {
        u = unit(rng);
    } while (u == 0.0);
    const double noise = pop.noise_scale * std::log(u / (1.0 - u));
    return gap + noise > 0.0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Corpus generation

struct CorpusSpec {
    std::size_t n_examples = 150;
    std::size_t dim = 8;
    double fraction_multiple_correct = 0.4;
    double fraction_indistinguishable = 0.2;
    double separation_scale = 2.0;
    std::uint64_t seed = 0;
    std::string dataset = "sim";
};

inline constexpr double kIndistinguishableRadius = 0.25;  // relative to separation_scale
inline constexpr std::size_t kMaxSingleCorrectDraws = 1000;

inline void validate(const CorpusSpec& spec) {
    if (spec.n_examples < 1) throw PreconditionError("n_examples must be >= 1");
    if (spec.dim < 1) throw PreconditionError("dim must be >= 1");
    auto frac_ok = [](double f) { return std::isfinite(f) && f >= 0.0 && f <= 1.0; };
    if (!frac_ok(spec.fraction_multiple_correct)) throw PreconditionError("fraction_multiple_correct must lie in [0,1]");
    if (!frac_ok(spec.fraction_indistinguishable)) throw PreconditionError("fraction_indistinguishable must lie in [0,1]");
    if (!(spec.separation_scale > 0.0) || !std::isfinite(spec.separation_scale)) {
        throw PreconditionError("separation_scale must be positive");
    }
    if (spec.dataset.empty()) throw PreconditionError("dataset tag must be non-empty");
}

namespace detail {

/// Exactly round(fraction * n) entries set, at seeded random positions.
inline std::vector<bool> exact_mask(std::size_t n, double fraction, Rng& rng) {
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<bool> mask(n, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(std::min(count, n)), true);
    std::shuffle(mask.begin(), mask.end(), rng);
    return mask;
}

inline std::string example_id(const std::string& dataset, std::size_t i) {
    std::string num = std::to_string(i);
    if (num.size() < 6) num.insert(0, 6 - num.size(), '0');
    return dataset + "-" + num;
}

}  // namespace detail

inline Corpus generate_corpus(const CorpusSpec& spec, const AnnotatorPopulation& pop) {
    validate(spec);
    if (spec.dim != pop.dim()) {
        throw PreconditionError("corpus dimension " + std::to_string(spec.dim) +
                                " does not match population dimension " + std::to_string(pop.dim()));
    }
    const std::size_t d = spec.dim;
    Rng rng(derive_seed(spec.seed, streams::corpus));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto multiple = detail::exact_mask(spec.n_examples, spec.fraction_multiple_correct, rng);
    const auto indist = detail::exact_mask(spec.n_examples, spec.fraction_indistinguishable, rng);

    std::vector<double> w_hat = pop.mean;
    {
        const double norm = std::sqrt(detail::dot(w_hat, w_hat));
        if (norm == 0.0) throw PreconditionError("population mean weight vector is zero");
        for (auto& v : w_hat) v /= norm;
    }

    auto random_orthogonal = [&]() {
        std::vector<double> u(d);
        for (int attempt = 0; attempt < 64; ++attempt) {
            for (auto& v : u) v = normal(rng);
            const double proj = detail::dot(u, w_hat);
            for (std::size_t i = 0; i < d; ++i) u[i] -= proj * w_hat[i];
            const double norm = std::sqrt(detail::dot(u, u));
            if (norm > 1e-12) {
                for (auto& v : u) v /= norm;
                return u;
            }
        }
        std::fill(u.begin(), u.end(), 0.0);  // d == 1: no orthogonal direction exists
        return u;
    };

    Corpus corpus;
    corpus.examples.reserve(spec.n_examples);
    std::vector<double> delta(d);
    std::vector<double> diff10(d);
    for (std::size_t i = 0; i < spec.n_examples; ++i) {
        const bool is_multiple = multiple[i];
        const bool is_indist = indist[i];
        PreferenceExample ex;
        ex.id = detail::example_id(spec.dataset, i);
        ex.dataset = spec.dataset;
        ex.category = CategoryTags{
            is_multiple ? AnswerMultiplicity::multiple_correct : AnswerMultiplicity::single_correct,
            is_indist ? Distinguishability::indistinguishable : Distinguishability::distinguishable};

        double p_star = 0.5;
        for (std::size_t attempt = 0;; ++attempt) {
            const auto u = random_orthogonal();
            const double angle = is_multiple ? 1.1 + unit(rng) * (std::numbers::pi / 2.0 - 1.1) : unit(rng) * 0.3;
            const double radius =
                spec.separation_scale * (is_indist ? unit(rng) * 0.1 : 0.5 + unit(rng));
            const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
            for (std::size_t k = 0; k < d; ++k) {
                delta[k] = sign * radius * (std::cos(angle) * w_hat[k] + std::sin(angle) * u[k]);
            }
            ex.features_a.resize(d);
            ex.features_b.resize(d);
            for (std::size_t k = 0; k < d; ++k) {
                const double context = normal(rng);
                ex.features_a[k] = context + 0.5 * delta[k];
                ex.features_b[k] = context - 0.5 * delta[k];
            }
            // Computed from the stored features so that human_pref is exactly
            // true_aggregate of the example.
            p_star = true_aggregate(ex, pop).p_star;
            if (is_multiple || is_indist || p_star <= 0.1 || p_star >= 0.9) break;
            if (attempt + 1 >= kMaxSingleCorrectDraws) {
                throw PreconditionError(
                    "population is too dispersed or noisy to realize single_correct pairs "
                    "(p* never left (0.1, 0.9)); lower dispersion/noise or raise separation_scale");
            }
        }
        ex.human_pref = p_star;

        std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
        for (std::size_t k = 0; k < d; ++k) diff10[k] = ex.features_b[k] - ex.features_a[k];
        ex.chosen = draw_judgment(pop, pick(rng), diff10, rng);
        corpus.examples.push_back(std::move(ex));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Population sidecar

inline constexpr std::string_view kPopulationFormat = "prefmargin-population";

inline nlohmann::ordered_json population_to_json(const AnnotatorPopulation& pop) {
    nlohmann::ordered_json j;
    j["format"] = kPopulationFormat;
    j["version"] = 1;
    j["size"] = pop.size();
    j["dim"] = pop.dim();
    j["dispersion"] = pop.dispersion;
    j["noise_scale"] = pop.noise_scale;
    j["seed"] = pop.seed;
    j["noise"] = "logistic";
    j["mean"] = pop.mean;
    j["weights"] = pop.weights;
    return j;
}

inline AnnotatorPopulation population_from_json(const nlohmann::ordered_json& j) {
    if (j.value("format", "") != kPopulationFormat) throw PreconditionError("not a population document");
    AnnotatorPopulation pop;
    pop.mean = j.at("mean").get<std::vector<double>>();
    pop.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    pop.dispersion = j.at("dispersion").get<double>();
    pop.noise_scale = j.at("noise_scale").get<double>();
    pop.seed = j.at("seed").get<std::uint64_t>();
    if (pop.mean.empty() || pop.weights.empty()) throw PreconditionError("population has no annotators");
    for (const auto& w : pop.weights) {
        if (w.size() != pop.mean.size()) throw PreconditionError("population weight dimension mismatch");
    }
    if (!(pop.noise_scale >= 0.0)) throw PreconditionError("population noise_scale must be >= 0");
    return pop;
}

inline void save_population(const AnnotatorPopulation& pop, const std::string& path) {
    write_text_file(path, population_to_json(pop).dump() + "\n");
}

inline AnnotatorPopulation load_population(const std::string& path) {
    try {
        return population_from_json(nlohmann::ordered_json::parse(read_text_file(path)));
    } catch (const nlohmann::ordered_json::exception& e) {
        throw PreconditionError("population file '" + path + "' is malformed: " + e.what());
    }
}

}  // namespace prefmargin
