#pragma once

// Preference examples, corpora and their canonical JSONL form.
//
// A corpus file starts with an optional header comment
//
//     # prefmargin corpus schema_version=1
//
// followed by one JSON object per line. Known keys are written in this
// fixed order, optional ones omitted when absent:
//
//     id, dataset, prompt_text, response_a_text, response_b_text,
//     features_a, features_b, chosen, category, judgments, margin, human_pref
//
// Unknown keys are kept verbatim (in their original order) after the known
// ones. Reals use the shortest decimal form that round-trips.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prefmargin/errors.hpp"

namespace prefmargin {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class AnswerMultiplicity { single_correct, multiple_correct };
enum class Distinguishability { distinguishable, indistinguishable };

inline std::string_view to_string(AnswerMultiplicity v) {
    return v == AnswerMultiplicity::single_correct ? "single_correct" : "multiple_correct";
}

inline std::string_view to_string(Distinguishability v) {
    return v == Distinguishability::distinguishable ? "distinguishable" : "indistinguishable";
}

inline std::optional<AnswerMultiplicity> parse_answer_multiplicity(std::string_view s) {
    if (s == "single_correct") return AnswerMultiplicity::single_correct;
    if (s == "multiple_correct") return AnswerMultiplicity::multiple_correct;
    return std::nullopt;
}

inline std::optional<Distinguishability> parse_distinguishability(std::string_view s) {
    if (s == "distinguishable") return Distinguishability::distinguishable;
    if (s == "indistinguishable") return Distinguishability::indistinguishable;
    return std::nullopt;
}

struct CategoryTags {
    AnswerMultiplicity answer_multiplicity = AnswerMultiplicity::single_correct;
    Distinguishability distinguishability = Distinguishability::distinguishable;

    friend bool operator==(const CategoryTags&, const CategoryTags&) = default;
};

/// n binary judgments; 0 means the judge preferred response A (y0).
struct JudgmentSet {
    std::vector<int> values;
    std::string source;

    friend bool operator==(const JudgmentSet&, const JudgmentSet&) = default;
};

struct PreferenceExample {
    std::string id;
    std::string dataset;
    std::optional<std::string> prompt_text;
    std::optional<std::string> response_a_text;
    std::optional<std::string> response_b_text;
    std::vector<double> features_a;
    std::vector<double> features_b;
    int chosen = 0;  // 0: y0 preferred, 1: y1 preferred
    std::optional<CategoryTags> category;
    std::optional<JudgmentSet> judgments;
    std::optional<double> margin;
    std::optional<double> human_pref;  // aggregate fraction preferring y0
    ordered_json extra = ordered_json::object();  // unknown fields, verbatim
    std::size_t source_line = 0;                  // not part of equality

    [[nodiscard]] std::size_t dim() const noexcept { return features_a.size(); }
    [[nodiscard]] const std::vector<double>& chosen_features() const {
        return chosen == 0 ? features_a : features_b;
    }
    [[nodiscard]] const std::vector<double>& rejected_features() const {
        return chosen == 0 ? features_b : features_a;
    }

    friend bool operator==(const PreferenceExample& a, const PreferenceExample& b) {
        return a.id == b.id && a.dataset == b.dataset && a.prompt_text == b.prompt_text &&
               a.response_a_text == b.response_a_text && a.response_b_text == b.response_b_text &&
               a.features_a == b.features_a && a.features_b == b.features_b &&
               a.chosen == b.chosen && a.category == b.category && a.judgments == b.judgments &&
               a.margin == b.margin && a.human_pref == b.human_pref && a.extra == b.extra;
    }
};

struct Corpus {
    std::vector<PreferenceExample> examples;
    int schema_version = kSchemaVersion;

    [[nodiscard]] std::size_t size() const noexcept { return examples.size(); }
    [[nodiscard]] bool empty() const noexcept { return examples.empty(); }

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

namespace detail {

inline bool in_unit_interval(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

inline std::string example_label(const PreferenceExample& ex) {
    return ex.id.empty() ? std::string("<no id>") : "'" + ex.id + "'";
}

}  // namespace detail

/// Throws CorpusError when an example violates the data-model invariants.
inline void validate(const PreferenceExample& ex) {
    const auto line = ex.source_line;
    const auto who = detail::example_label(ex);
    if (ex.id.empty()) throw CorpusError("example has an empty id", line);
    if (ex.features_a.empty()) throw CorpusError(who + ": features must have dimension >= 1", line);
    if (ex.features_a.size() != ex.features_b.size()) {
        throw CorpusError(who + ": dimension mismatch between features_a (" +
                              std::to_string(ex.features_a.size()) + ") and features_b (" +
                              std::to_string(ex.features_b.size()) + ")",
                          line);
    }
    for (const auto* fs : {&ex.features_a, &ex.features_b}) {
        for (double v : *fs) {
            if (!std::isfinite(v)) throw CorpusError(who + ": non-finite feature value", line);
        }
    }
    if (ex.chosen != 0 && ex.chosen != 1) throw CorpusError(who + ": chosen must be 0 or 1", line);
    if (ex.margin && !detail::in_unit_interval(*ex.margin)) {
        throw CorpusError(who + ": margin outside [0,1]", line);
    }
    if (ex.human_pref && !detail::in_unit_interval(*ex.human_pref)) {
        throw CorpusError(who + ": human_pref outside [0,1]", line);
    }
    if (ex.judgments) {
        if (ex.judgments->values.empty()) throw CorpusError(who + ": judgments must be non-empty", line);
        for (int j : ex.judgments->values) {
            if (j != 0 && j != 1) throw CorpusError(who + ": judgment values must be 0 or 1", line);
        }
    }
}

/// Validates every example and id uniqueness. An empty corpus is valid here;
/// training and evaluation entry points reject it separately.
inline void validate(const Corpus& corpus) {
    std::set<std::string_view> seen;
    for (const auto& ex : corpus.examples) {
        validate(ex);
        if (!seen.insert(ex.id).second) {
            throw CorpusError("duplicate id '" + ex.id + "'", ex.source_line);
        }
    }
}

// ---------------------------------------------------------------------------
// JSON conversion

inline ordered_json to_json(const PreferenceExample& ex) {
    ordered_json j = ordered_json::object();
    j["id"] = ex.id;
    j["dataset"] = ex.dataset;
    if (ex.prompt_text) j["prompt_text"] = *ex.prompt_text;
    if (ex.response_a_text) j["response_a_text"] = *ex.response_a_text;
    if (ex.response_b_text) j["response_b_text"] = *ex.response_b_text;
    j["features_a"] = ex.features_a;
    j["features_b"] = ex.features_b;
    j["chosen"] = ex.chosen;
    if (ex.category) {
        ordered_json c = ordered_json::object();
        c["answer_multiplicity"] = to_string(ex.category->answer_multiplicity);
        c["distinguishability"] = to_string(ex.category->distinguishability);
        j["category"] = std::move(c);
    }
    if (ex.judgments) {
        ordered_json js = ordered_json::object();
        js["values"] = ex.judgments->values;
        js["source"] = ex.judgments->source;
        j["judgments"] = std::move(js);
    }
    if (ex.margin) j["margin"] = *ex.margin;
    if (ex.human_pref) j["human_pref"] = *ex.human_pref;
    for (const auto& [key, value] : ex.extra.items()) j[key] = value;
    return j;
}

namespace detail {

inline const std::set<std::string, std::less<>>& known_keys() {
    static const std::set<std::string, std::less<>> keys = {
        "id",         "dataset", "prompt_text", "response_a_text", "response_b_text", "features_a",
        "features_b", "chosen",  "category",    "judgments",       "margin",          "human_pref"};
    return keys;
}

inline std::vector<double> read_features(const ordered_json& j, const char* key, std::size_t line) {
    if (!j.is_array()) throw CorpusError(std::string(key) + " must be an array of numbers", line);
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw CorpusError(std::string(key) + " must contain only numbers", line);
        out.push_back(v.get<double>());
    }
    return out;
}

inline std::optional<std::string> read_optional_string(const ordered_json& j, const char* key,
                                                       std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw CorpusError(std::string(key) + " must be a string", line);
    return it->get<std::string>();
}

inline std::optional<double> read_optional_real(const ordered_json& j, const char* key,
                                                std::size_t line) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw CorpusError(std::string(key) + " must be a number", line);
    return it->get<double>();
}

inline int read_binary(const ordered_json& v, const char* what, std::size_t line) {
    if (!v.is_number_integer()) throw CorpusError(std::string(what) + " must be the integer 0 or 1", line);
    const auto x = v.get<long long>();
    if (x != 0 && x != 1) throw CorpusError(std::string(what) + " must be 0 or 1", line);
    return static_cast<int>(x);
}

}  // namespace detail

inline PreferenceExample example_from_json(const ordered_json& j, std::size_t line = 0) {
    if (!j.is_object()) throw CorpusError("record is not a JSON object", line);
    PreferenceExample ex;
    ex.source_line = line;

    auto need = [&](const char* key) -> const ordered_json& {
        auto it = j.find(key);
        if (it == j.end()) throw CorpusError(std::string("missing required field '") + key + "'", line);
        return *it;
    };

    const auto& id = need("id");
    if (!id.is_string()) throw CorpusError("id must be a string", line);
    ex.id = id.get<std::string>();
    const auto& dataset = need("dataset");
    if (!dataset.is_string()) throw CorpusError("dataset must be a string", line);
    ex.dataset = dataset.get<std::string>();

    ex.prompt_text = detail::read_optional_string(j, "prompt_text", line);
    ex.response_a_text = detail::read_optional_string(j, "response_a_text", line);
    ex.response_b_text = detail::read_optional_string(j, "response_b_text", line);
    ex.features_a = detail::read_features(need("features_a"), "features_a", line);
    ex.features_b = detail::read_features(need("features_b"), "features_b", line);
    ex.chosen = detail::read_binary(need("chosen"), "chosen", line);

    if (auto it = j.find("category"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw CorpusError("category must be an object", line);
        auto am = it->find("answer_multiplicity");
        auto di = it->find("distinguishability");
        if (am == it->end() || di == it->end()) {
            throw CorpusError("category requires both answer_multiplicity and distinguishability", line);
        }
        if (!am->is_string() || !di->is_string()) throw CorpusError("category values must be strings", line);
        auto a = parse_answer_multiplicity(am->get<std::string>());
        auto d = parse_distinguishability(di->get<std::string>());
        if (!a) throw CorpusError("unknown answer_multiplicity '" + am->get<std::string>() + "'", line);
        if (!d) throw CorpusError("unknown distinguishability '" + di->get<std::string>() + "'", line);
        ex.category = CategoryTags{*a, *d};
    }

    if (auto it = j.find("judgments"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw CorpusError("judgments must be an object", line);
        auto values = it->find("values");
        if (values == it->end() || !values->is_array()) {
            throw CorpusError("judgments.values must be an array", line);
        }
        JudgmentSet js;
        for (const auto& v : *values) js.values.push_back(detail::read_binary(v, "judgment value", line));
        if (auto src = it->find("source"); src != it->end()) {
            if (!src->is_string()) throw CorpusError("judgments.source must be a string", line);
            js.source = src->get<std::string>();
        }
        ex.judgments = std::move(js);
    }

    ex.margin = detail::read_optional_real(j, "margin", line);
    ex.human_pref = detail::read_optional_real(j, "human_pref", line);

    for (const auto& [key, value] : j.items()) {
        if (!detail::known_keys().contains(key)) ex.extra[key] = value;
    }
    validate(ex);
    return ex;
}

inline std::string to_jsonl_line(const PreferenceExample& ex) { return to_json(ex).dump(); }

inline std::string corpus_header(int schema_version = kSchemaVersion) {
    return "# prefmargin corpus schema_version=" + std::to_string(schema_version);
}

/// Parses JSONL text. `origin` names the source in error messages.
inline Corpus parse_corpus(std::istream& in, const std::string& origin = "<stream>") {
    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (line.front() == '#') {
            constexpr std::string_view key = "schema_version=";
            if (auto pos = line.find(key); pos != std::string::npos) {
                try {
                    corpus.schema_version = std::stoi(line.substr(pos + key.size()));
                } catch (const std::exception&) {
                    throw CorpusError(origin + ": unreadable schema_version in header", lineno);
                }
                if (corpus.schema_version != kSchemaVersion) {
                    throw CorpusError(origin + ": unsupported schema_version " +
                                          std::to_string(corpus.schema_version),
                                      lineno);
                }
            }
            continue;
        }
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const ordered_json::parse_error& e) {
            throw CorpusError(origin + ": malformed JSON: " + e.what(), lineno);
        }
        corpus.examples.push_back(example_from_json(j, lineno));
    }
    if (corpus.empty()) throw CorpusError(origin + ": corpus is empty");
    validate(corpus);
    return corpus;
}

inline Corpus read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus '" + path + "'");
    return parse_corpus(in, path);
}

inline std::string serialize_corpus(const Corpus& corpus) {
    validate(corpus);
    std::string out = corpus_header(corpus.schema_version);
    out += '\n';
    for (const auto& ex : corpus.examples) {
        out += to_jsonl_line(ex);
        out += '\n';
    }
    return out;
}

inline void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_corpus(const Corpus& corpus, const std::string& path) {
    write_text_file(path, serialize_corpus(corpus));
}

// ---------------------------------------------------------------------------
// Slicing

/// Conjunction of optional predicates; an unset field matches everything.
struct SliceSelector {
    std::optional<std::string> dataset;
    std::optional<AnswerMultiplicity> answer_multiplicity;
    std::optional<Distinguishability> distinguishability;

    [[nodiscard]] bool needs_category() const {
        return answer_multiplicity.has_value() || distinguishability.has_value();
    }
};

struct SliceResult {
    Corpus corpus;
    std::size_t untagged = 0;  // excluded because a required category tag was absent
};

inline SliceResult slice(const Corpus& corpus, const SliceSelector& sel) {
    SliceResult out;
    out.corpus.schema_version = corpus.schema_version;
    for (const auto& ex : corpus.examples) {
        if (sel.needs_category() && !ex.category) {
            ++out.untagged;
            continue;
        }
        if (sel.dataset && ex.dataset != *sel.dataset) continue;
        if (sel.answer_multiplicity && ex.category->answer_multiplicity != *sel.answer_multiplicity) continue;
        if (sel.distinguishability && ex.category->distinguishability != *sel.distinguishability) continue;
        out.corpus.examples.push_back(ex);
    }
    return out;
}

}  // namespace prefmargin
