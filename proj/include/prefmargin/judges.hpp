#pragma once

// Sources of synthetic binary judgments.
//
// Remote judges speak a generic chat-completion protocol over HTTP:
//
//   POST <endpoint>
//   Authorization: Bearer $<auth_env>          (only if the variable is set)
//   {"model": "...", "messages": [{"role": "user", "content": <prompt>}],
//    "temperature": t, "top_p": p, "max_tokens": k, "n": 1}
//
// and read the reply text from choices[0].message.content (or
// choices[0].text). Each reply is mapped to a judgment by parse_choice().

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "prefmargin/digest.hpp"
#include "prefmargin/errors.hpp"
#include "prefmargin/prefdata.hpp"
#include "prefmargin/simpop.hpp"

namespace prefmargin {

// ---------------------------------------------------------------------------
// Prompt

inline constexpr std::string_view kJudgePromptVersion = "v1";

/// Must stay byte-identical to assets/judge_prompt_v1.txt.
inline constexpr std::string_view kJudgePromptTemplate =
    "I am going to give you a prompt and two answers.\n"
    "\n"
    "The goal is to identify the better answer.\n"
    "\n"
    "If the prompt is a question, we want the factually correct answer.\n"
    "\n"
    "In a conversation, we want helpful replies that do not cause harm.\n"
    "\n"
    "The output format should be either 'Choice: A' or 'Choice: B' based on the selected answer and "
    "nothing else.\n"
    "\n"
    "Prompt: {prompt}\n"
    "\n"
    "Answer A: {answer_0}\n"
    "\n"
    "Answer B: {answer_1}\n";

struct JudgePromptRendering {
    std::string rendered_text;
};

/// Fills {prompt}, {answer_0}, {answer_1} in a single pass over the template,
/// so placeholder-like text inside the inserted strings is left alone.
inline std::string fill_prompt_template(std::string_view tmpl, std::string_view prompt, std::string_view answer_0,
                                        std::string_view answer_1) {
    std::string out;
    out.reserve(tmpl.size() + prompt.size() + answer_0.size() + answer_1.size());
    const std::pair<std::string_view, std::string_view> slots[] = {
        {"{prompt}", prompt}, {"{answer_0}", answer_0}, {"{answer_1}", answer_1}};
    std::size_t i = 0;
    while (i < tmpl.size()) {
        bool replaced = false;
        if (tmpl[i] == '{') {
            for (const auto& [key, value] : slots) {
                if (tmpl.substr(i, key.size()) == key) {
                    out.append(value);
                    i += key.size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out.push_back(tmpl[i++]);
    }
    return out;
}

inline JudgePromptRendering render_prompt(const PreferenceExample& ex) {
    auto require = [&](const std::optional<std::string>& field, const char* name) -> const std::string& {
        if (!field) {
            throw PreconditionError("example '" + ex.id + "' has no " + name +
                                    "; the remote judge needs prompt and response texts");
        }
        if (field->empty()) throw PreconditionError("example '" + ex.id + "' has an empty " + name);
        return *field;
    };
    const auto& prompt = require(ex.prompt_text, "prompt_text");
    const auto& a = require(ex.response_a_text, "response_a_text");
    const auto& b = require(ex.response_b_text, "response_b_text");
    return {fill_prompt_template(kJudgePromptTemplate, prompt, a, b)};
}

// ---------------------------------------------------------------------------
// Reply parsing

enum class ChoiceStatus { ok, no_match, ambiguous };

struct ParsedChoice {
    ChoiceStatus status = ChoiceStatus::no_match;
    int judgment = -1;  // 0 for A, 1 for B when status == ok

    [[nodiscard]] bool ok() const noexcept { return status == ChoiceStatus::ok; }
};

namespace detail {

inline bool is_markup(char c) {
    return c == '*' || c == '_' || c == '"' || c == '\'' || c == '`' || c == '(' || c == '[' || c == ')' ||
           c == ']';
}

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline std::size_t skip_filler(const std::string& s, std::size_t i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || is_markup(s[i]))) ++i;
    return i;
}

/// Letter 'a'/'b' at i standing alone (not the start of a word).
inline bool standalone_letter(const std::string& s, std::size_t i) {
    return i < s.size() && (s[i] == 'a' || s[i] == 'b') && (i + 1 >= s.size() || !is_alnum(s[i + 1]));
}

}  // namespace detail

/// Maps a judge reply to a judgment.
///
/// Case-insensitive; uses the final occurrence of `choice:` that is followed
/// (after blanks and markdown emphasis/quotes/brackets) by a standalone A or
/// B. A reply naming both letters at that position ("Choice: A/B",
/// "Choice: A or B") is ambiguous.
inline ParsedChoice parse_choice(std::string_view raw) {
    std::string s(raw);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    constexpr std::string_view key = "choice:";

    ParsedChoice result;
    std::size_t from = 0;
    while (true) {
        const auto pos = s.find(key, from);
        if (pos == std::string::npos) break;
        from = pos + 1;
        std::size_t i = detail::skip_filler(s, pos + key.size());
        if (!detail::standalone_letter(s, i)) continue;
        const char letter = s[i];
        const char other = letter == 'a' ? 'b' : 'a';
        std::size_t j = detail::skip_filler(s, i + 1);
        bool ambiguous = false;
        std::size_t k = std::string::npos;
        if (j < s.size() && (s[j] == '/' || s[j] == '|' || s[j] == ',' || s[j] == '&')) {
            k = detail::skip_filler(s, j + 1);
        } else if (s.compare(j, 2, "or") == 0 && (j + 2 >= s.size() || !detail::is_alnum(s[j + 2]))) {
            k = detail::skip_filler(s, j + 2);
        } else if (s.compare(j, 3, "and") == 0 && (j + 3 >= s.size() || !detail::is_alnum(s[j + 3]))) {
            k = detail::skip_filler(s, j + 3);
        }
        if (k != std::string::npos && detail::standalone_letter(s, k) && s[k] == other) ambiguous = true;
        result = ambiguous ? ParsedChoice{ChoiceStatus::ambiguous, -1}
                           : ParsedChoice{ChoiceStatus::ok, letter == 'a' ? 0 : 1};
    }
    return result;
}

// ---------------------------------------------------------------------------
// Configuration

struct JudgeConfig {
    std::size_t n_samples = 10;
    double temperature = 1.0;
    double top_p = 0.9;
    std::size_t max_retries = 3;  // per judgment slot
    std::size_t concurrency_limit = 4;
    std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
    std::string model_name;
    std::string auth_env = "PREFMARGIN_JUDGE_TOKEN";
    std::size_t max_tokens = 16;
    double backoff_initial_seconds = 0.5;
    double timeout_seconds = 60.0;
};

inline void validate(const JudgeConfig& cfg) {
    if (cfg.n_samples < 1) throw PreconditionError("n_samples must be >= 1");
    if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) throw PreconditionError("top_p must lie in (0,1]");
    if (!(cfg.temperature >= 0.0) || !std::isfinite(cfg.temperature)) {
        throw PreconditionError("temperature must be a finite non-negative number");
    }
    if (cfg.concurrency_limit < 1) throw PreconditionError("concurrency_limit must be >= 1");
    if (!(cfg.backoff_initial_seconds >= 0.0)) throw PreconditionError("backoff must be >= 0");
}

/// Provenance string for remote judgments: endpoint, model and a digest of
/// every sampling parameter.
inline std::string remote_source_tag(const JudgeConfig& cfg) {
    std::ostringstream params;
    params << "n=" << cfg.n_samples << ";temperature=" << cfg.temperature << ";top_p=" << cfg.top_p
           << ";max_tokens=" << cfg.max_tokens << ";prompt=" << kJudgePromptVersion;
    const auto p = params.str();
    return "remote:" + cfg.model_name + "@" + cfg.endpoint + ";" + p + ";digest=" +
           fnv1a64_hex(cfg.endpoint + "|" + cfg.model_name + "|" + p);
}

// ---------------------------------------------------------------------------
// Simulated judge

/// n judgments from annotators drawn with replacement. Deterministic in
/// (example, population, n, seed).
inline JudgmentSet sample_judgments_simulated(const PreferenceExample& ex, const AnnotatorPopulation& pop,
                                              std::size_t n, std::uint64_t seed) {
    if (n < 1) throw PreconditionError("n must be >= 1");
    detail::check_population_dim(ex, pop);
    Rng rng(derive_seed(seed, streams::judge));
    std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
    std::vector<double> diff(pop.dim());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ex.features_b[i] - ex.features_a[i];
    JudgmentSet js;
    js.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) js.values.push_back(draw_judgment(pop, pick(rng), diff, rng));
    js.source = "simulated:population_seed=" + std::to_string(pop.seed) + ";n=" + std::to_string(n) +
                ";seed=" + std::to_string(seed);
    return js;
}

// ---------------------------------------------------------------------------
// Remote judge

struct Endpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // begins with '/'
};

inline Endpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw PreconditionError("endpoint '" + url + "' lacks a scheme");
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw PreconditionError("endpoint scheme must be http or https, got '" + scheme + "'");
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw PreconditionError("this build has no TLS support; use an http:// endpoint");
#endif
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.base = url.substr(0, path_start);
    ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (ep.base.size() <= scheme_end + 3) throw PreconditionError("endpoint '" + url + "' has no host");
    return ep;
}

struct RemoteJudgeResult {
    std::optional<JudgmentSet> judgments;  // nullopt when the example was skipped
    std::string skip_reason;
    std::size_t requests = 0;
    std::size_t retries = 0;
    std::vector<std::string> retry_log;  // one entry per retry, in slot order
};

inline std::string chat_request_body(const JudgeConfig& cfg, const std::string& prompt) {
    nlohmann::ordered_json body;
    if (!cfg.model_name.empty()) body["model"] = cfg.model_name;
    body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = cfg.temperature;
    body["top_p"] = cfg.top_p;
    body["max_tokens"] = cfg.max_tokens;
    body["n"] = 1;
    return body.dump();
}

/// Reply text from a chat-completion response, nullopt if the shape is wrong.
inline std::optional<std::string> extract_reply_text(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    const auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
    const auto& first = (*choices)[0];
    if (auto msg = first.find("message"); msg != first.end() && msg->is_object()) {
        if (auto content = msg->find("content"); content != msg->end() && content->is_string()) {
            return content->get<std::string>();
        }
    }
    if (auto text = first.find("text"); text != first.end() && text->is_string()) return text->get<std::string>();
    return std::nullopt;
}

namespace detail {

struct SlotOutcome {
    std::optional<int> judgment;
    std::size_t requests = 0;
    std::vector<std::string> retry_log;
    std::string failure;             // parse exhaustion -> skip
    std::exception_ptr fatal;        // surfaced to the caller
};

inline bool transient_status(int status) { return status == 429 || status >= 500; }

inline SlotOutcome run_slot(const JudgeConfig& cfg, const Endpoint& ep, const httplib::Headers& headers,
                            const std::string& body) {
    SlotOutcome out;
    httplib::Client client(ep.base);
    const auto timeout = std::chrono::duration<double>(cfg.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    std::size_t transient_failures = 0;
    std::string last_transient;
    for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0 && transient_failures > 0 && cfg.backoff_initial_seconds > 0.0) {
            const double wait = cfg.backoff_initial_seconds * std::pow(2.0, static_cast<double>(transient_failures - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(std::min(wait, 30.0)));
        }
        ++out.requests;
        auto res = client.Post(ep.path, headers, body, "application/json");
        std::string reason;
        if (!res) {
            reason = "transport: " + httplib::to_string(res.error());
            ++transient_failures;
            last_transient = reason;
        } else if (res->status == 401 || res->status == 403) {
            out.fatal = std::make_exception_ptr(
                JudgeError("judge endpoint rejected credentials (HTTP " + std::to_string(res->status) + "): " + res->body));
            return out;
        } else if (transient_status(res->status)) {
            reason = "HTTP " + std::to_string(res->status) + ": " + res->body;
            ++transient_failures;
            last_transient = reason;
        } else if (res->status < 200 || res->status >= 300) {
            out.fatal = std::make_exception_ptr(
                JudgeError("judge endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body));
            return out;
        } else if (auto text = extract_reply_text(res->body); !text) {
            reason = "unexpected response shape";
        } else {
            const auto parsed = parse_choice(*text);
            if (parsed.ok()) {
                out.judgment = parsed.judgment;
                return out;
            }
            reason = std::string(parsed.status == ChoiceStatus::ambiguous ? "ambiguous reply: " : "unparseable reply: ") +
                     *text;
        }
        if (attempt < cfg.max_retries) out.retry_log.push_back(reason);
        else out.failure = reason;
    }
    if (transient_failures == cfg.max_retries + 1) {
        out.fatal = std::make_exception_ptr(
            JudgeError("judge endpoint failed after " + std::to_string(out.requests) + " attempts: " + last_transient));
    }
    return out;
}

}  // namespace detail

/// Issues n_samples independent requests (up to concurrency_limit at a
/// time). Judgments keep slot order regardless of completion order. A slot
/// whose replies never parse within max_retries causes the whole example to
/// be skipped; it is never padded.
inline RemoteJudgeResult sample_judgments_remote(const PreferenceExample& ex, const JudgeConfig& cfg) {
    validate(cfg);
    if (cfg.endpoint.empty()) throw PreconditionError("remote judge requires an endpoint");
    const auto ep = parse_endpoint(cfg.endpoint);
    const auto body = chat_request_body(cfg, render_prompt(ex).rendered_text);

    httplib::Headers headers;
    if (!cfg.auth_env.empty()) {
        if (const char* token = std::getenv(cfg.auth_env.c_str()); token && *token) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }

    std::vector<detail::SlotOutcome> slots(cfg.n_samples);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < slots.size(); i = next++) {
            try {
                slots[i] = detail::run_slot(cfg, ep, headers, body);
            } catch (...) {
                slots[i].fatal = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(cfg.concurrency_limit, cfg.n_samples);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    RemoteJudgeResult result;
    JudgmentSet js;
    js.source = remote_source_tag(cfg);
    for (auto& s : slots) {
        if (s.fatal) std::rethrow_exception(s.fatal);
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
        auto& s = slots[i];
        result.requests += s.requests;
        result.retries += s.requests - 1;
        for (auto& r : s.retry_log) result.retry_log.push_back("slot " + std::to_string(i) + ": " + r);
        if (!s.failure.empty()) result.retry_log.push_back("slot " + std::to_string(i) + ": " + s.failure);
        if (s.judgment) {
            js.values.push_back(*s.judgment);
        } else if (result.skip_reason.empty()) {
            result.skip_reason = "slot " + std::to_string(i) + " exhausted " + std::to_string(cfg.max_retries) +
                                 " retries (" + s.failure + ")";
        }
    }
    if (result.skip_reason.empty()) result.judgments = std::move(js);
    return result;
}

}  // namespace prefmargin
