#pragma once

// Pairwise reward scorer over precomputed feature vectors.
//
// Loss for one example, with delta = r(chosen) - r(rejected):
//
//   baseline:  -log sigmoid(delta)
//   margin:    -log sigmoid(delta - m)
//
// The baseline objective is evaluated as the margin objective with m = 0, so
// the two agree bit-for-bit whenever every margin is zero.
//
// Parameter layout (theta):
//   linear: [w_0 .. w_{d-1}, b]
//   mlp:    for each layer in order (hidden..., output), the weight matrix
//           row-major as [out][in] followed by the `out` biases. Hidden layers
//           use tanh, the output layer is a single linear unit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prefmargin/errors.hpp"
#include "prefmargin/prefdata.hpp"
#include "prefmargin/series_metrics.hpp"

namespace prefmargin {

// ---------------------------------------------------------------------------
// Numerics

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// Architecture and parameters

enum class ArchitectureKind { linear, mlp };

struct Architecture {
    ArchitectureKind kind = ArchitectureKind::linear;
    std::vector<std::size_t> hidden;  // mlp only; tanh activations

    static Architecture linear() { return {}; }
    static Architecture mlp(std::vector<std::size_t> hidden_sizes) {
        if (hidden_sizes.empty()) throw PreconditionError("mlp needs at least one hidden layer");
        for (auto h : hidden_sizes) {
            if (h == 0) throw PreconditionError("mlp hidden sizes must be positive");
        }
        return {ArchitectureKind::mlp, std::move(hidden_sizes)};
    }

    /// Layer widths from input to the scalar output.
    [[nodiscard]] std::vector<std::size_t> widths(std::size_t input_dim) const {
        std::vector<std::size_t> w{input_dim};
        if (kind == ArchitectureKind::mlp) w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(1);
        return w;
    }

    [[nodiscard]] std::size_t parameter_count(std::size_t input_dim) const {
        const auto w = widths(input_dim);
        std::size_t n = 0;
        for (std::size_t l = 1; l < w.size(); ++l) n += w[l] * w[l - 1] + w[l];
        return n;
    }

    [[nodiscard]] std::string describe() const {
        if (kind == ArchitectureKind::linear) return "linear";
        std::string s = "mlp[";
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(hidden[i]);
        }
        return s + "]";
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Parses "linear", "mlp", "mlp[8]" or "mlp[16,8]". Plain "mlp" means mlp[8].
inline Architecture parse_architecture(std::string_view s) {
    if (s == "linear") return Architecture::linear();
    if (s == "mlp") return Architecture::mlp({8});
    if (s.starts_with("mlp[") && s.ends_with("]")) {
        std::vector<std::size_t> hidden;
        std::string_view body = s.substr(4, s.size() - 5);
        while (!body.empty()) {
            auto comma = body.find(',');
            auto tok = body.substr(0, comma);
            try {
                std::size_t pos = 0;
                const auto v = std::stoul(std::string(tok), &pos);
                if (pos != tok.size()) throw std::invalid_argument("trailing");
                hidden.push_back(v);
            } catch (const std::exception&) {
                throw PreconditionError("bad architecture '" + std::string(s) + "'");
            }
            if (comma == std::string_view::npos) break;
            body.remove_prefix(comma + 1);
        }
        return Architecture::mlp(std::move(hidden));
    }
    throw PreconditionError("unknown architecture '" + std::string(s) + "'");
}

struct RewardModelParams {
    Architecture architecture;
    std::size_t input_dim = 0;
    std::vector<double> theta;

    [[nodiscard]] bool consistent() const {
        return input_dim >= 1 && theta.size() == architecture.parameter_count(input_dim);
    }

    friend bool operator==(const RewardModelParams&, const RewardModelParams&) = default;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline RewardModelParams initialize_params(const Architecture& arch, std::size_t input_dim,
                                           std::uint64_t seed) {
    if (input_dim < 1) throw PreconditionError("input_dim must be >= 1");
    RewardModelParams p{arch, input_dim, {}};
    p.theta.reserve(arch.parameter_count(input_dim));
    std::mt19937_64 rng(seed);
    const auto w = arch.widths(input_dim);
    for (std::size_t l = 1; l < w.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w[l - 1]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < w[l] * w[l - 1]; ++k) p.theta.push_back(dist(rng));
        for (std::size_t k = 0; k < w[l]; ++k) p.theta.push_back(0.0);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

/// Scratch buffers for the forward pass; reusable across calls.
struct ScoreWorkspace {
    std::vector<std::vector<double>> activations;
};

namespace detail {

inline void check_input(const RewardModelParams& params, std::span<const double> x) {
    if (x.size() != params.input_dim) {
        throw PreconditionError("feature dimension " + std::to_string(x.size()) +
                                " does not match model input_dim " + std::to_string(params.input_dim));
    }
    if (!params.consistent()) throw PreconditionError("theta length does not match architecture");
}

inline double forward(const RewardModelParams& params, std::span<const double> x, ScoreWorkspace& ws) {
    if (params.architecture.kind == ArchitectureKind::linear) {
        const std::size_t d = params.input_dim;
        double s = params.theta[d];
        for (std::size_t i = 0; i < d; ++i) s += params.theta[i] * x[i];
        return s;
    }
    const auto w = params.architecture.widths(params.input_dim);
    ws.activations.resize(w.size());
    ws.activations[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 1; l < w.size(); ++l) {
        const std::size_t in = w[l - 1];
        const std::size_t out = w[l];
        const double* W = params.theta.data() + off;
        const double* b = W + out * in;
        const auto& prev = ws.activations[l - 1];
        auto& cur = ws.activations[l];
        cur.resize(out);
        const bool last = (l + 1 == w.size());
        for (std::size_t o = 0; o < out; ++o) {
            double z = b[o];
            const double* row = W + o * in;
            for (std::size_t i = 0; i < in; ++i) z += row[i] * prev[i];
            cur[o] = last ? z : std::tanh(z);
        }
        off += out * in + out;
    }
    return ws.activations.back()[0];
}

/// grad += coef * d score / d theta, using activations left by forward().
inline void backward(const RewardModelParams& params, std::span<const double> x, double coef,
                     std::span<double> grad, ScoreWorkspace& ws) {
    if (params.architecture.kind == ArchitectureKind::linear) {
        const std::size_t d = params.input_dim;
        for (std::size_t i = 0; i < d; ++i) grad[i] += coef * x[i];
        grad[d] += coef;
        return;
    }
    const auto w = params.architecture.widths(params.input_dim);
    std::vector<std::size_t> offsets(w.size(), 0);
    for (std::size_t l = 1, off = 0; l < w.size(); ++l) {
        offsets[l] = off;
        off += w[l] * w[l - 1] + w[l];
    }
    std::vector<double> upstream{coef};  // dL/dz for the current layer
    for (std::size_t l = w.size() - 1; l >= 1; --l) {
        const std::size_t in = w[l - 1];
        const std::size_t out = w[l];
        const std::size_t off = offsets[l];
        const auto& prev = ws.activations[l - 1];
        double* gW = grad.data() + off;
        double* gb = gW + out * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double u = upstream[o];
            double* row = gW + o * in;
            for (std::size_t i = 0; i < in; ++i) row[i] += u * prev[i];
            gb[o] += u;
        }
        if (l == 1) break;
        const double* W = params.theta.data() + off;
        std::vector<double> down(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double u = upstream[o];
            const double* row = W + o * in;
            for (std::size_t i = 0; i < in; ++i) down[i] += row[i] * u;
        }
        for (std::size_t i = 0; i < in; ++i) down[i] *= 1.0 - prev[i] * prev[i];
        upstream = std::move(down);
    }
}

}  // namespace detail

inline double score(const RewardModelParams& params, std::span<const double> features) {
    detail::check_input(params, features);
    for (double v : features) {
        if (!std::isfinite(v)) throw PreconditionError("score: non-finite feature value");
    }
    ScoreWorkspace ws;
    return detail::forward(params, features, ws);
}

/// sigmoid(r(y0) - r(y1)): predicted fraction preferring response A.
inline double predict_preference(const RewardModelParams& params, const PreferenceExample& ex) {
    return sigmoid(score(params, ex.features_a) - score(params, ex.features_b));
}

// ---------------------------------------------------------------------------
// Objectives

enum class Objective { baseline, margin };

inline std::string_view to_string(Objective o) { return o == Objective::baseline ? "baseline" : "margin"; }

inline Objective parse_objective(std::string_view s) {
    if (s == "baseline") return Objective::baseline;
    if (s == "margin") return Objective::margin;
    throw PreconditionError("unknown objective '" + std::string(s) + "'");
}

namespace detail {

inline double example_margin(const PreferenceExample& ex, Objective objective) {
    if (objective == Objective::baseline) return 0.0;
    if (!ex.margin) throw PreconditionError("example '" + ex.id + "' has no margin (required by the margin objective)");
    return *ex.margin;
}

}  // namespace detail

inline double pairwise_loss(const RewardModelParams& params, const PreferenceExample& ex, Objective objective) {
    const double m = detail::example_margin(ex, objective);
    const double delta = score(params, ex.chosen_features()) - score(params, ex.rejected_features());
    return softplus(m - delta);
}

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Mean loss and gradient over a batch given as pointers, accumulated in
/// batch order.
inline LossAndGradient batch_loss_and_gradient(const RewardModelParams& params,
                                               std::span<const PreferenceExample* const> batch,
                                               Objective objective, ScoreWorkspace& ws) {
    if (batch.empty()) throw PreconditionError("loss_gradient: empty batch");
    LossAndGradient out;
    out.gradient.assign(params.theta.size(), 0.0);
    std::vector<double> delta_grad(params.theta.size());
    for (const PreferenceExample* ex : batch) {
        const double m = detail::example_margin(*ex, objective);
        const auto& xc = ex->chosen_features();
        const auto& xr = ex->rejected_features();
        detail::check_input(params, xc);
        detail::check_input(params, xr);
        std::fill(delta_grad.begin(), delta_grad.end(), 0.0);
        const double sc = detail::forward(params, xc, ws);
        detail::backward(params, xc, 1.0, delta_grad, ws);
        const double sr = detail::forward(params, xr, ws);
        detail::backward(params, xr, -1.0, delta_grad, ws);
        const double z = m - (sc - sr);
        out.loss += softplus(z);
        // d softplus(m - delta) / d delta = -sigmoid(m - delta)
        const double coef = -sigmoid(z);
        for (std::size_t k = 0; k < delta_grad.size(); ++k) out.gradient[k] += coef * delta_grad[k];
    }
    const auto n = static_cast<double>(batch.size());
    out.loss /= n;
    for (auto& g : out.gradient) g /= n;
    if (!std::isfinite(out.loss)) throw DivergenceError("non-finite loss over batch");
    for (std::size_t k = 0; k < out.gradient.size(); ++k) {
        if (!std::isfinite(out.gradient[k])) {
            throw DivergenceError("non-finite gradient at theta[" + std::to_string(k) + "]");
        }
    }
    return out;
}

inline std::vector<double> loss_gradient(const RewardModelParams& params,
                                         std::span<const PreferenceExample> batch, Objective objective) {
    std::vector<const PreferenceExample*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& ex : batch) ptrs.push_back(&ex);
    ScoreWorkspace ws;
    return batch_loss_and_gradient(params, ptrs, objective, ws).gradient;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(std::size_t n, double learning_rate, AdamOptions opts = {})
        : lr_(learning_rate), opts_(opts), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> theta, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m_[k] = opts_.beta1 * m_[k] + (1.0 - opts_.beta1) * grad[k];
            v_[k] = opts_.beta2 * v_[k] + (1.0 - opts_.beta2) * grad[k] * grad[k];
            const double mhat = m_[k] / c1;
            const double vhat = v_[k] / c2;
            theta[k] -= lr_ * mhat / (std::sqrt(vhat) + opts_.epsilon);
        }
    }

    [[nodiscard]] std::size_t steps() const noexcept { return t_; }

private:
    double lr_;
    AdamOptions opts_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

enum class SelectionMetric { pearson, neg_l1, val_loss };

inline std::string_view to_string(SelectionMetric s) {
    switch (s) {
        case SelectionMetric::pearson: return "pearson";
        case SelectionMetric::neg_l1: return "neg_l1";
        case SelectionMetric::val_loss: return "val_loss";
    }
    return "?";
}

inline SelectionMetric parse_selection_metric(std::string_view s) {
    if (s == "pearson") return SelectionMetric::pearson;
    if (s == "neg_l1") return SelectionMetric::neg_l1;
    if (s == "val_loss") return SelectionMetric::val_loss;
    throw PreconditionError("unknown selection metric '" + std::string(s) + "'");
}

struct TrainConfig {
    Objective objective = Objective::baseline;
    Architecture architecture = Architecture::linear();
    std::vector<double> learning_rates{1e-4, 1e-5, 1e-6};
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
    /// nullopt: pearson when every validation example has human_pref, else val_loss.
    std::optional<SelectionMetric> selection_metric;
    AdamOptions adam;
    /// Run the learning-rate sweep on worker threads. Results are identical
    /// either way.
    bool parallel_sweep = false;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;

    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct SweepRun {
    double learning_rate = 0.0;
    bool diverged = false;
    std::string failure;
    std::optional<double> selection_value;  // raw metric; nullopt if undefined
    RewardModelParams params;
    std::vector<EpochLog> log;

    friend bool operator==(const SweepRun&, const SweepRun&) = default;
};

struct TrainedModel {
    RewardModelParams params;
    TrainConfig config;
    SelectionMetric selection_metric = SelectionMetric::val_loss;
    double selected_lr = 0.0;
    std::vector<EpochLog> log;
    std::vector<SweepRun> runs;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Seeded shuffle, first ceil-rounded fraction goes to validation.
inline DataSplit split_train_validation(std::size_t n, double validation_fraction, std::uint64_t seed) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw PreconditionError("validation_fraction must lie in (0,1)");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    n_val = std::max<std::size_t>(n_val, 1);
    if (n_val >= n) {
        throw PreconditionError("corpus of " + std::to_string(n) +
                                " examples leaves no training data after the validation split");
    }
    DataSplit s;
    s.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return s;
}

namespace detail {

inline double mean_loss(const RewardModelParams& params, std::span<const PreferenceExample* const> set,
                        Objective objective, ScoreWorkspace& ws) {
    double total = 0.0;
    for (const auto* ex : set) {
        const double m = example_margin(*ex, objective);
        const double delta = forward(params, ex->chosen_features(), ws) - forward(params, ex->rejected_features(), ws);
        total += softplus(m - delta);
    }
    return total / static_cast<double>(set.size());
}

inline std::optional<double> selection_value(const RewardModelParams& params,
                                             std::span<const PreferenceExample* const> val,
                                             Objective objective, SelectionMetric metric) {
    ScoreWorkspace ws;
    if (metric == SelectionMetric::val_loss) return mean_loss(params, val, objective, ws);
    std::vector<double> preds;
    std::vector<double> targets;
    for (const auto* ex : val) {
        preds.push_back(sigmoid(forward(params, ex->features_a, ws) - forward(params, ex->features_b, ws)));
        targets.push_back(*ex->human_pref);
    }
    if (metric == SelectionMetric::neg_l1) return -l1(preds, targets);
    if (preds.size() < 2) return std::nullopt;
    return pearson(preds, targets);
}

/// True when `a` should be preferred over `b` (strictly better).
inline bool better_selection(const std::optional<double>& a, const std::optional<double>& b,
                             SelectionMetric metric) {
    if (!a) return false;
    if (!b) return true;
    if (!std::isfinite(*a)) return false;
    if (!std::isfinite(*b)) return true;
    return metric == SelectionMetric::val_loss ? *a < *b : *a > *b;
}

inline SweepRun run_single_lr(double lr, const RewardModelParams& init,
                              std::span<const PreferenceExample* const> train,
                              std::span<const PreferenceExample* const> val, const TrainConfig& cfg,
                              SelectionMetric metric) {
    SweepRun run;
    run.learning_rate = lr;
    run.params = init;
    AdamOptimizer opt(init.theta.size(), lr, cfg.adam);
    // The shuffle stream depends only on the seed, so objectives and learning
    // rates all see the same batch sequence.
    std::mt19937_64 rng(cfg.seed + 0x2545f4914f6cdd1dULL);
    std::vector<const PreferenceExample*> order(train.begin(), train.end());
    ScoreWorkspace ws;
    try {
        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t len = std::min(cfg.batch_size, order.size() - start);
                auto batch = std::span<const PreferenceExample* const>(order).subspan(start, len);
                const auto lg = batch_loss_and_gradient(run.params, batch, cfg.objective, ws);
                opt.step(run.params.theta, lg.gradient);
            }
            for (double t : run.params.theta) {
                if (!std::isfinite(t)) throw DivergenceError("non-finite parameter");
            }
            EpochLog entry{epoch, mean_loss(run.params, train, cfg.objective, ws),
                           mean_loss(run.params, val, cfg.objective, ws)};
            if (!std::isfinite(entry.train_loss) || !std::isfinite(entry.val_loss)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
            }
            run.log.push_back(entry);
        }
        run.selection_value = selection_value(run.params, val, cfg.objective, metric);
    } catch (const DivergenceError& e) {
        run.diverged = true;
        run.failure = e.what();
        run.selection_value.reset();
    }
    return run;
}

}  // namespace detail

/// Learning-rate sweep with model selection on a held-out split.
inline TrainedModel train(const Corpus& corpus, const TrainConfig& cfg) {
    if (corpus.empty()) throw PreconditionError("train: corpus is empty");
    if (cfg.learning_rates.empty()) throw PreconditionError("train: learning_rates is empty");
    for (double lr : cfg.learning_rates) {
        if (!(lr > 0.0) || !std::isfinite(lr)) throw PreconditionError("train: learning rates must be positive");
    }
    if (cfg.batch_size == 0) throw PreconditionError("train: batch_size must be positive");

    const std::size_t dim = corpus.examples.front().dim();
    std::vector<std::string> missing_margin;
    for (const auto& ex : corpus.examples) {
        if (ex.dim() != dim || ex.features_b.size() != dim) {
            throw PreconditionError("train: example '" + ex.id + "' has inconsistent feature dimension");
        }
        if (cfg.objective == Objective::margin && !ex.margin) missing_margin.push_back(ex.id);
    }
    if (!missing_margin.empty()) {
        throw PreconditionError("train: objective 'margin' requires field 'margin', missing on " +
                                std::to_string(missing_margin.size()) + " example(s), first '" +
                                missing_margin.front() + "'");
    }

    const auto split = split_train_validation(corpus.size(), cfg.validation_fraction, cfg.seed);
    std::vector<const PreferenceExample*> train_set;
    std::vector<const PreferenceExample*> val_set;
    for (auto i : split.train) train_set.push_back(&corpus.examples[i]);
    for (auto i : split.validation) val_set.push_back(&corpus.examples[i]);

    const bool val_has_targets =
        std::all_of(val_set.begin(), val_set.end(), [](const auto* ex) { return ex->human_pref.has_value(); });
    const SelectionMetric metric =
        cfg.selection_metric.value_or(val_has_targets ? SelectionMetric::pearson : SelectionMetric::val_loss);
    if (metric != SelectionMetric::val_loss && !val_has_targets) {
        throw PreconditionError(std::string("train: selection metric '") + std::string(to_string(metric)) +
                                "' needs human_pref on every validation example");
    }

    const auto init = initialize_params(cfg.architecture, dim, cfg.seed);

    TrainedModel model;
    model.config = cfg;
    model.selection_metric = metric;
    model.train_size = train_set.size();
    model.validation_size = val_set.size();
    if (cfg.parallel_sweep && cfg.learning_rates.size() > 1) {
        std::vector<std::future<SweepRun>> futures;
        for (double lr : cfg.learning_rates) {
            futures.push_back(std::async(std::launch::async, [&, lr] {
                return detail::run_single_lr(lr, init, train_set, val_set, cfg, metric);
            }));
        }
        for (auto& f : futures) model.runs.push_back(f.get());
    } else {
        for (double lr : cfg.learning_rates) {
            model.runs.push_back(detail::run_single_lr(lr, init, train_set, val_set, cfg, metric));
        }
    }

    const SweepRun* best = nullptr;
    for (const auto& run : model.runs) {
        if (run.diverged) continue;
        if (!best || detail::better_selection(run.selection_value, best->selection_value, metric)) best = &run;
    }
    if (!best) {
        std::string why;
        for (const auto& run : model.runs) {
            if (!why.empty()) why += "; ";
            why += "lr=" + std::to_string(run.learning_rate) + ": " + run.failure;
        }
        throw DivergenceError("train: every learning rate diverged (" + why + ")");
    }
    model.params = best->params;
    model.selected_lr = best->learning_rate;
    model.log = best->log;
    return model;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kModelFormat = "prefmargin-reward-model";

namespace detail {

inline nlohmann::ordered_json architecture_json(const Architecture& a) {
    nlohmann::ordered_json j;
    j["kind"] = a.kind == ArchitectureKind::linear ? "linear" : "mlp";
    if (a.kind == ArchitectureKind::mlp) {
        j["hidden"] = a.hidden;
        j["activation"] = "tanh";
    }
    return j;
}

inline Architecture architecture_from_json(const nlohmann::ordered_json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") return Architecture::linear();
    if (kind == "mlp") return Architecture::mlp(j.at("hidden").get<std::vector<std::size_t>>());
    throw PreconditionError("unknown architecture kind '" + kind + "'");
}

inline nlohmann::ordered_json log_json(const std::vector<EpochLog>& log) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : log) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["train_loss"] = e.train_loss;
        j["val_loss"] = e.val_loss;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<EpochLog> log_from_json(const nlohmann::ordered_json& arr) {
    std::vector<EpochLog> out;
    for (const auto& j : arr) {
        out.push_back({j.at("epoch").get<std::size_t>(), j.at("train_loss").get<double>(),
                       j.at("val_loss").get<double>()});
    }
    return out;
}

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["objective"] = to_string(cfg.objective);
    j["architecture"] = cfg.architecture.describe();
    j["learning_rates"] = cfg.learning_rates;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["validation_fraction"] = cfg.validation_fraction;
    j["selection_metric"] = cfg.selection_metric ? nlohmann::ordered_json(to_string(*cfg.selection_metric))
                                                 : nlohmann::ordered_json("auto");
    j["optimizer"] = {{"name", "adam"}, {"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2},
                      {"epsilon", cfg.adam.epsilon}};
    return j;
}

inline TrainConfig config_from_json(const nlohmann::ordered_json& j) {
    TrainConfig cfg;
    cfg.objective = parse_objective(j.at("objective").get<std::string>());
    cfg.architecture = parse_architecture(j.at("architecture").get<std::string>());
    cfg.learning_rates = j.at("learning_rates").get<std::vector<double>>();
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validation_fraction = j.at("validation_fraction").get<double>();
    const auto sel = j.at("selection_metric").get<std::string>();
    if (sel != "auto") cfg.selection_metric = parse_selection_metric(sel);
    const auto& o = j.at("optimizer");
    cfg.adam = {o.at("beta1").get<double>(), o.at("beta2").get<double>(), o.at("epsilon").get<double>()};
    return cfg;
}

inline nlohmann::ordered_json model_to_json(const TrainedModel& m) {
    nlohmann::ordered_json j;
    j["format"] = kModelFormat;
    j["version"] = 1;
    j["architecture"] = detail::architecture_json(m.params.architecture);
    j["input_dim"] = m.params.input_dim;
    j["theta"] = m.params.theta;
    j["selected_lr"] = m.selected_lr;
    j["selection_metric"] = to_string(m.selection_metric);
    j["train_size"] = m.train_size;
    j["validation_size"] = m.validation_size;
    j["config"] = config_to_json(m.config);
    j["log"] = detail::log_json(m.log);
    auto runs = nlohmann::ordered_json::array();
    for (const auto& r : m.runs) {
        nlohmann::ordered_json rj;
        rj["learning_rate"] = r.learning_rate;
        rj["status"] = r.diverged ? "diverged" : "ok";
        if (r.diverged) rj["failure"] = r.failure;
        rj["selection_value"] = r.selection_value ? nlohmann::ordered_json(*r.selection_value) : nullptr;
        rj["log"] = detail::log_json(r.log);
        runs.push_back(std::move(rj));
    }
    j["runs"] = std::move(runs);
    return j;
}

/// Loads a model document. Per-run parameter vectors are not stored, so
/// `runs[i].params` is left empty.
inline TrainedModel model_from_json(const nlohmann::ordered_json& j) {
    if (j.value("format", "") != kModelFormat) throw PreconditionError("not a reward model document");
    TrainedModel m;
    m.params.architecture = detail::architecture_from_json(j.at("architecture"));
    m.params.input_dim = j.at("input_dim").get<std::size_t>();
    m.params.theta = j.at("theta").get<std::vector<double>>();
    if (!m.params.consistent()) throw PreconditionError("model theta length does not match architecture");
    for (double t : m.params.theta) {
        if (!std::isfinite(t)) throw PreconditionError("model theta contains non-finite values");
    }
    m.selected_lr = j.at("selected_lr").get<double>();
    m.selection_metric = parse_selection_metric(j.at("selection_metric").get<std::string>());
    m.train_size = j.at("train_size").get<std::size_t>();
    m.validation_size = j.at("validation_size").get<std::size_t>();
    m.config = config_from_json(j.at("config"));
    m.log = detail::log_from_json(j.at("log"));
    for (const auto& rj : j.at("runs")) {
        SweepRun r;
        r.learning_rate = rj.at("learning_rate").get<double>();
        r.diverged = rj.at("status").get<std::string>() == "diverged";
        r.failure = rj.value("failure", "");
        if (!rj.at("selection_value").is_null()) r.selection_value = rj.at("selection_value").get<double>();
        r.log = detail::log_from_json(rj.at("log"));
        m.runs.push_back(std::move(r));
    }
    return m;
}

inline std::string serialize_model(const TrainedModel& m) { return model_to_json(m).dump(2) + "\n"; }

inline void save_model(const TrainedModel& m, const std::string& path) { write_text_file(path, serialize_model(m)); }

inline TrainedModel load_model(const std::string& path) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw PreconditionError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace prefmargin
