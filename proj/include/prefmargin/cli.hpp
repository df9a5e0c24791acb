#pragma once

// prefmargin command-line pipeline:
//
//   simulate -> judge -> margin -> train -> eval
//
// Every command writes a run manifest (JSON) next to its primary output.
// `replay` re-runs a manifest and checks the output digests.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefmargin/aggregate.hpp"
#include "prefmargin/digest.hpp"
#include "prefmargin/errors.hpp"
#include "prefmargin/judges.hpp"
#include "prefmargin/metrics.hpp"
#include "prefmargin/prefdata.hpp"
#include "prefmargin/rewardmodel.hpp"
#include "prefmargin/simpop.hpp"

namespace prefmargin::cli {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

/// Bad flag combination detected after parsing; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Manifests

struct RunManifest {
    std::string command;
    std::vector<std::string> args;  // argv after the program name
    nlohmann::ordered_json flags = nlohmann::ordered_json::object();
    std::map<std::string, std::string> inputs;   // path -> digest
    std::map<std::string, std::string> outputs;  // path -> digest
    std::optional<std::uint64_t> seed;
    nlohmann::ordered_json details = nlohmann::ordered_json::object();
};

inline std::string file_digest(const std::string& path) { return "fnv1a64:" + fnv1a64_hex(read_text_file(path)); }

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["format"] = "prefmargin-manifest";
    j["command"] = m.command;
    j["args"] = m.args;
    j["flags"] = m.flags;
    j["seed"] = m.seed ? nlohmann::ordered_json(*m.seed) : nullptr;
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["details"] = m.details;
    j["toolkit_version"] = kToolkitVersion;
    j["timestamp"] = utc_timestamp();
    return j;
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    write_text_file(path, manifest_to_json(m).dump(2) + "\n");
}

inline std::string default_manifest_path(const std::string& output) { return output + ".manifest.json"; }

/// Every long option of `sub` with the value it resolved to.
inline nlohmann::ordered_json collect_flags(const CLI::App& sub) {
    nlohmann::ordered_json flags = nlohmann::ordered_json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto& name = opt->get_lnames().front();
        if (name == "help") continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            flags[name] = res.size() == 1 ? nlohmann::ordered_json(res.front()) : nlohmann::ordered_json(res);
        } else {
            flags[name] = opt->get_default_str();
        }
    }
    return flags;
}

// ---------------------------------------------------------------------------
// Option bundles

struct SimulateOptions {
    std::size_t n = 150;
    std::size_t dim = 8;
    double frac_multiple = 0.4;
    double frac_indist = 0.2;
    std::size_t pop_size = 100;
    double dispersion = 0.5;
    double noise = 0.5;
    double separation = 2.0;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> pop_seed;
    std::string dataset = "sim";
    std::string population_in;
    std::string population_out;
    std::string out;
    std::string manifest;
};

struct JudgeOptions {
    std::string in;
    std::string out;
    std::string judge = "simulated";
    std::string population;
    std::uint64_t seed = 0;
    JudgeConfig config;
    std::string manifest;
};

struct MarginOptions {
    std::string in;
    std::string out;
    std::string manifest;
};

struct TrainOptions {
    std::string in;
    std::string out;
    std::string objective = "baseline";
    std::string arch = "linear";
    std::vector<double> lr_grid{1e-4, 1e-5, 1e-6};
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double val_frac = 0.1;
    std::string select = "auto";
    std::string manifest;
};

struct EvalOptions {
    std::string corpus;
    std::string model;
    std::string baseline_model;
    std::string format = "markdown";
    std::string out;
    bool full_precision = false;
    std::string manifest;
};

struct ReplayOptions {
    std::string manifest;
    bool verify = true;
};

// ---------------------------------------------------------------------------
// Commands

inline int cmd_simulate(const SimulateOptions& o, RunManifest& m, std::ostream& out) {
    AnnotatorPopulation pop;
    if (!o.population_in.empty()) {
        pop = load_population(o.population_in);
        m.inputs[o.population_in] = file_digest(o.population_in);
        if (pop.dim() != o.dim) {
            throw UsageError("--dim " + std::to_string(o.dim) + " does not match population dimension " +
                             std::to_string(pop.dim()));
        }
    } else {
        PopulationSpec ps;
        ps.size = o.pop_size;
        ps.dim = o.dim;
        ps.dispersion = o.dispersion;
        ps.noise_scale = o.noise;
        ps.seed = o.pop_seed.value_or(o.seed);
        pop = build_population(ps);
    }
    CorpusSpec cs;
    cs.n_examples = o.n;
    cs.dim = o.dim;
    cs.fraction_multiple_correct = o.frac_multiple;
    cs.fraction_indistinguishable = o.frac_indist;
    cs.separation_scale = o.separation;
    cs.seed = o.seed;
    cs.dataset = o.dataset;
    const auto corpus = generate_corpus(cs, pop);
    write_corpus(corpus, o.out);
    m.outputs[o.out] = file_digest(o.out);
    if (o.population_in.empty()) {
        const auto pop_path = o.population_out.empty() ? o.out + ".population.json" : o.population_out;
        save_population(pop, pop_path);
        m.outputs[pop_path] = file_digest(pop_path);
    }
    m.seed = o.seed;
    out << "wrote " << corpus.size() << " examples to " << o.out << "\n";
    return 0;
}

inline int cmd_judge(const JudgeOptions& o, RunManifest& m, std::ostream& out, std::ostream& err) {
    auto corpus = read_corpus(o.in);
    m.inputs[o.in] = file_digest(o.in);
    m.seed = o.seed;
    validate(o.config);

    Corpus result;
    result.schema_version = corpus.schema_version;
    std::map<std::string, std::size_t> skip_counts;
    nlohmann::ordered_json skipped = nlohmann::ordered_json::array();

    if (o.judge == "simulated") {
        const auto pop_path = o.population.empty() ? o.in + ".population.json" : o.population;
        const auto pop = load_population(pop_path);
        m.inputs[pop_path] = file_digest(pop_path);
        for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
            auto ex = corpus.examples[i];
            ex.judgments = sample_judgments_simulated(ex, pop, o.config.n_samples, derive_seed(o.seed, streams::judge, i));
            ex.margin.reset();
            result.examples.push_back(std::move(ex));
        }
    } else if (o.judge == "remote") {
        if (o.config.endpoint.empty()) throw UsageError("--judge remote requires --endpoint");
        for (const auto& ex : corpus.examples) {
            if (!ex.prompt_text || !ex.response_a_text || !ex.response_b_text) {
                throw PreconditionError("example '" + ex.id + "' lacks prompt/response texts required by the remote judge");
            }
        }
        std::size_t retries = 0;
        for (const auto& src : corpus.examples) {
            auto res = sample_judgments_remote(src, o.config);
            retries += res.retries;
            for (const auto& r : res.retry_log) err << "retry [" << src.id << "] " << r << "\n";
            if (!res.judgments) {
                err << "skipped " << src.id << ": " << res.skip_reason << "\n";
                ++skip_counts["unparseable replies"];
                skipped.push_back({{"id", src.id}, {"reason", res.skip_reason}});
                continue;
            }
            auto ex = src;
            ex.judgments = std::move(*res.judgments);
            ex.margin.reset();
            result.examples.push_back(std::move(ex));
        }
        m.details["retries"] = retries;
    } else {
        throw UsageError("--judge must be 'simulated' or 'remote'");
    }

    m.details["skipped"] = skipped;
    if (result.empty()) throw Error("every example was skipped; nothing to write");
    write_corpus(result, o.out);
    m.outputs[o.out] = file_digest(o.out);
    out << "judged " << result.size() << " examples (" << o.config.n_samples << " judgments each)";
    if (!skipped.empty()) out << ", skipped " << skipped.size();
    out << "\n";
    for (const auto& [reason, count] : skip_counts) out << "  skipped (" << reason << "): " << count << "\n";
    return 0;
}

inline int cmd_margin(const MarginOptions& o, RunManifest& m, std::ostream& out) {
    auto corpus = read_corpus(o.in);
    m.inputs[o.in] = file_digest(o.in);
    corpus = attach_aggregates(std::move(corpus));
    write_corpus(corpus, o.out);
    m.outputs[o.out] = file_digest(o.out);

    std::map<double, std::size_t> histogram;
    for (const auto& ex : corpus.examples) ++histogram[*ex.margin];
    out << "margin histogram (" << corpus.size() << " examples)\n";
    for (const auto& [value, count] : histogram) {
        const auto width = static_cast<std::size_t>(std::llround(50.0 * static_cast<double>(count) /
                                                                 static_cast<double>(corpus.size())));
        char label[32];
        std::snprintf(label, sizeof label, "%6.3f", value);
        out << "  " << label << "  " << std::setw(7) << count << "  " << std::string(width, '#') << "\n";
    }
    return 0;
}

inline int cmd_train(const TrainOptions& o, RunManifest& m, std::ostream& out) {
    const auto corpus = read_corpus(o.in);
    m.inputs[o.in] = file_digest(o.in);
    TrainConfig cfg;
    try {
        cfg.objective = parse_objective(o.objective);
        cfg.architecture = parse_architecture(o.arch);
        if (o.select != "auto") cfg.selection_metric = parse_selection_metric(o.select);
    } catch (const PreconditionError& e) {
        throw UsageError(e.what());
    }
    cfg.learning_rates = o.lr_grid;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    cfg.validation_fraction = o.val_frac;
    m.seed = o.seed;
    m.details["lr_grid"] = o.lr_grid;

    const auto model = train(corpus, cfg);
    save_model(model, o.out);
    m.outputs[o.out] = file_digest(o.out);
    out << "objective=" << to_string(cfg.objective) << " arch=" << cfg.architecture.describe()
        << " selection=" << to_string(model.selection_metric) << "\n";
    for (const auto& run : model.runs) {
        out << "  lr=" << run.learning_rate << "  ";
        if (run.diverged) {
            out << "diverged: " << run.failure << "\n";
            continue;
        }
        out << "selection=" << (run.selection_value ? std::to_string(*run.selection_value) : "undefined");
        if (!run.log.empty()) {
            out << " final train_loss=" << run.log.back().train_loss << " val_loss=" << run.log.back().val_loss;
        }
        out << (run.learning_rate == model.selected_lr ? "  <- selected" : "") << "\n";
    }
    return 0;
}

inline int cmd_eval(const EvalOptions& o, RunManifest& m, std::ostream& out) {
    const auto corpus = read_corpus(o.corpus);
    m.inputs[o.corpus] = file_digest(o.corpus);
    ReportFormat format;
    try {
        format = parse_report_format(o.format);
    } catch (const PreconditionError& e) {
        throw UsageError(e.what());
    }
    const auto model = load_model(o.model);
    m.inputs[o.model] = file_digest(o.model);
    EvaluationReport report;
    if (!o.baseline_model.empty()) {
        const auto baseline = load_model(o.baseline_model);
        m.inputs[o.baseline_model] = file_digest(o.baseline_model);
        report = evaluate(baseline, model, corpus);
    } else {
        report = evaluate(model, corpus);
    }
    const auto text = render_report(report, format, o.full_precision);
    if (o.out.empty()) {
        out << text;
    } else {
        write_text_file(o.out, text);
        m.outputs[o.out] = file_digest(o.out);
    }
    return 0;
}

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

inline int cmd_replay(const ReplayOptions& o, std::ostream& out, std::ostream& err) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(read_text_file(o.manifest));
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw PreconditionError("manifest '" + o.manifest + "' is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "prefmargin-manifest") throw PreconditionError("not a prefmargin manifest");
    const auto args = j.at("args").get<std::vector<std::string>>();
    if (!args.empty() && args.front() == "replay") throw PreconditionError("refusing to replay a replay manifest");
    const auto recorded = j.at("outputs").get<std::map<std::string, std::string>>();
    const int code = run(args, out, err);
    if (code != 0) return code;
    if (!o.verify) return 0;
    bool ok = true;
    for (const auto& [path, digest] : recorded) {
        const auto now = file_digest(path);
        if (now != digest) {
            err << "replay mismatch: " << path << " recorded " << digest << " now " << now << "\n";
            ok = false;
        } else {
            out << "replay ok: " << path << " " << digest << "\n";
        }
    }
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Entry point

/// Runs one command. `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Margin-regularized pairwise reward models evaluated against aggregate preferences", "prefmargin"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolkitVersion));

    SimulateOptions sim;
    auto* s = app.add_subcommand("simulate", "generate a simulated corpus with ground-truth aggregate preferences");
    s->add_option("--n", sim.n, "number of examples")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--dim", sim.dim, "feature dimension")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--frac-multiple", sim.frac_multiple, "fraction tagged multiple_correct")
        ->capture_default_str()->check(CLI::Range(0.0, 1.0));
    s->add_option("--frac-indist", sim.frac_indist, "fraction tagged indistinguishable")
        ->capture_default_str()->check(CLI::Range(0.0, 1.0));
    s->add_option("--pop-size", sim.pop_size, "annotators in the population")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--dispersion", sim.dispersion, "spread of annotator weights around the mean")
        ->capture_default_str()->check(CLI::NonNegativeNumber);
    s->add_option("--noise", sim.noise, "logistic noise scale per judgment")->capture_default_str()->check(CLI::NonNegativeNumber);
    s->add_option("--separation", sim.separation, "pair separation scale")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--seed", sim.seed, "corpus seed (also the population seed unless --pop-seed)")->capture_default_str();
    s->add_option("--pop-seed", sim.pop_seed, "population seed");
    s->add_option("--dataset", sim.dataset, "dataset tag")->capture_default_str();
    s->add_option("--population", sim.population_in, "reuse an existing population sidecar")->check(CLI::ExistingFile);
    s->add_option("--population-out", sim.population_out, "population sidecar path (default <out>.population.json)");
    s->add_option("--out", sim.out, "output corpus (JSONL)")->required();
    s->add_option("--manifest", sim.manifest, "manifest path (default <out>.manifest.json)");

    JudgeOptions jo;
    auto* jd = app.add_subcommand("judge", "attach synthetic judgments to every example");
    jd->add_option("--in", jo.in, "input corpus")->required()->check(CLI::ExistingFile);
    jd->add_option("--out", jo.out, "output corpus")->required();
    jd->add_option("--judge", jo.judge, "simulated|remote")->capture_default_str()->check(CLI::IsMember({"simulated", "remote"}));
    jd->add_option("--n-samples", jo.config.n_samples, "judgments per example")->capture_default_str()->check(CLI::PositiveNumber);
    jd->add_option("--top-p", jo.config.top_p, "nucleus sampling parameter")->capture_default_str()
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
    jd->add_option("--temperature", jo.config.temperature, "sampling temperature")->capture_default_str()->check(CLI::NonNegativeNumber);
    jd->add_option("--seed", jo.seed, "seed for the simulated judge")->capture_default_str();
    jd->add_option("--population", jo.population, "population sidecar (default <in>.population.json)");
    jd->add_option("--endpoint", jo.config.endpoint, "chat-completion URL for the remote judge");
    jd->add_option("--model-name", jo.config.model_name, "model name sent to the remote judge");
    jd->add_option("--auth-env", jo.config.auth_env, "environment variable holding the bearer token")->capture_default_str();
    jd->add_option("--max-retries", jo.config.max_retries, "retries per judgment slot")->capture_default_str();
    jd->add_option("--concurrency", jo.config.concurrency_limit, "concurrent requests per example")
        ->capture_default_str()->check(CLI::PositiveNumber);
    jd->add_option("--backoff", jo.config.backoff_initial_seconds, "initial backoff in seconds")
        ->capture_default_str()->check(CLI::NonNegativeNumber);
    jd->add_option("--timeout", jo.config.timeout_seconds, "per-request timeout in seconds")->capture_default_str();
    jd->add_option("--manifest", jo.manifest, "manifest path (default <out>.manifest.json)");

    MarginOptions mo;
    auto* mg = app.add_subcommand("margin", "convert judgments into margins");
    mg->add_option("--in", mo.in, "input corpus with judgments")->required()->check(CLI::ExistingFile);
    mg->add_option("--out", mo.out, "output corpus")->required();
    mg->add_option("--manifest", mo.manifest, "manifest path (default <out>.manifest.json)");

    TrainOptions to;
    auto* tr = app.add_subcommand("train", "train a reward model with a learning-rate sweep");
    tr->add_option("--in", to.in, "training corpus")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", to.out, "output model (JSON)")->required();
    tr->add_option("--objective", to.objective, "baseline|margin")->capture_default_str()->check(CLI::IsMember({"baseline", "margin"}));
    tr->add_option("--arch", to.arch, "linear | mlp | mlp[h1,h2,...]")->capture_default_str();
    tr->add_option("--lr-grid", to.lr_grid, "comma-separated learning rates")->delimiter(',')->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr->add_option("--epochs", to.epochs, "epochs per learning rate")->capture_default_str();
    tr->add_option("--batch-size", to.batch_size, "mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    tr->add_option("--seed", to.seed, "seed for split, initialization and shuffling")->capture_default_str();
    tr->add_option("--val-frac", to.val_frac, "validation fraction")->capture_default_str()
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0 - 1e-12));
    tr->add_option("--select", to.select, "auto|pearson|neg_l1|val_loss")->capture_default_str()
        ->check(CLI::IsMember({"auto", "pearson", "neg_l1", "val_loss"}));
    tr->add_option("--manifest", to.manifest, "manifest path (default <out>.manifest.json)");

    EvalOptions eo;
    auto* ev = app.add_subcommand("eval", "score a model against human_pref, sliced by dataset and category");
    ev->add_option("--corpus,--in", eo.corpus, "evaluation corpus")->required()->check(CLI::ExistingFile);
    ev->add_option("--model", eo.model, "model to evaluate")->required()->check(CLI::ExistingFile);
    ev->add_option("--baseline-model", eo.baseline_model, "reference model for delta columns")->check(CLI::ExistingFile);
    ev->add_option("--format", eo.format, "markdown|csv|json")->capture_default_str()->check(CLI::IsMember({"markdown", "csv", "json"}));
    ev->add_option("--out", eo.out, "write the report here instead of stdout");
    ev->add_flag("--full-precision", eo.full_precision, "shortest round-trip numbers instead of 3 decimals");
    ev->add_option("--manifest", eo.manifest, "manifest path (default <out>.manifest.json or ./eval.manifest.json)");

    ReplayOptions ro;
    auto* rp = app.add_subcommand("replay", "re-run a manifest and verify output digests");
    rp->add_option("--manifest", ro.manifest, "manifest to replay")->required()->check(CLI::ExistingFile);
    rp->add_flag("!--no-verify", ro.verify, "skip digest verification");

    const std::vector<std::string> original = args;
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    RunManifest manifest;
    manifest.args = original;
    std::string manifest_path;
    try {
        int code = 0;
        if (*s) {
            manifest.command = "simulate";
            manifest.flags = collect_flags(*s);
            code = cmd_simulate(sim, manifest, out);
            manifest_path = sim.manifest.empty() ? default_manifest_path(sim.out) : sim.manifest;
        } else if (*jd) {
            manifest.command = "judge";
            manifest.flags = collect_flags(*jd);
            code = cmd_judge(jo, manifest, out, err);
            manifest_path = jo.manifest.empty() ? default_manifest_path(jo.out) : jo.manifest;
        } else if (*mg) {
            manifest.command = "margin";
            manifest.flags = collect_flags(*mg);
            code = cmd_margin(mo, manifest, out);
            manifest_path = mo.manifest.empty() ? default_manifest_path(mo.out) : mo.manifest;
        } else if (*tr) {
            manifest.command = "train";
            manifest.flags = collect_flags(*tr);
            code = cmd_train(to, manifest, out);
            manifest_path = to.manifest.empty() ? default_manifest_path(to.out) : to.manifest;
        } else if (*ev) {
            manifest.command = "eval";
            manifest.flags = collect_flags(*ev);
            code = cmd_eval(eo, manifest, out);
            manifest_path = !eo.manifest.empty() ? eo.manifest
                            : eo.out.empty()     ? std::string("eval.manifest.json")
                                                 : default_manifest_path(eo.out);
        } else if (*rp) {
            return cmd_replay(ro, out, err);
        }
        if (code == 0) write_manifest(manifest, manifest_path);
        return code;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace prefmargin::cli
