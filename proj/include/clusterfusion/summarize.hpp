#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "clusterfusion/corpus.hpp"
#include "clusterfusion/error.hpp"
#include "clusterfusion/llm.hpp"
#include "clusterfusion/partition.hpp"
#include "clusterfusion/text.hpp"

namespace clusterfusion {

struct Topic {
    std::string name;
    std::string description;
    std::vector<std::string> examples;
};

struct TopicSet {
    std::vector<Topic> topics;
    int k = 0;

    void validate() const {
        if (k < 1) throw Error(ErrorKind::validation, "topic count must be >= 1");
        if (static_cast<int>(topics.size()) != k)
            throw Error(ErrorKind::validation,
                        "topic count mismatch: found " + std::to_string(topics.size()) +
                            ", expected " + std::to_string(k));
        std::unordered_set<std::string> seen;
        for (const auto& t : topics) {
            if (trim(t.name).empty()) throw Error(ErrorKind::validation, "empty topic name");
            if (!seen.insert(normalize_label(t.name)).second)
                throw Error(ErrorKind::validation,
                            "duplicate topic name '" + normalize_label(t.name) + "'");
        }
    }

    // Normalized-name -> canonical-name lookup for label matching.
    std::unordered_map<std::string, std::string> normalized_names() const {
        std::unordered_map<std::string, std::string> out;
        for (const auto& t : topics) out.emplace(normalize_label(t.name), t.name);
        return out;
    }

    std::string digest() const {
        uint64_t h = 1469598103934665603ULL;
        for (const auto& t : topics) h = fnv1a64(normalize_label(t.name), h ^ 0x1f);
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

struct DomainContext {
    std::string feature_context;
    std::optional<std::string> extra_guidance;
};

namespace detail {

// The template reserves ";" as the record delimiter and defines no escape,
// so literal semicolons inside a record become commas.
inline std::string escape_record_text(const std::string& text) {
    std::string out = text;
    std::replace(out.begin(), out.end(), ';', ',');
    return out;
}

}  // namespace detail

inline const char* summarization_system_message() {
    return "You are an intelligent assistant skilled in summarizing and extracting insights.";
}

inline PromptPair build_summarization_prompt(const SampledSubset& subset, const Corpus& corpus,
                                             int k, const DomainContext& ctx) {
    if (subset.items.empty()) throw Error(ErrorKind::validation, "cannot summarize an empty subset");
    if (k < 1) throw Error(ErrorKind::validation, "topic count must be >= 1");
    if (ctx.feature_context.empty())
        throw Error(ErrorKind::validation, "feature context must be non-empty");

    std::string records;
    for (size_t i = 0; i < subset.items.size(); ++i) {
        const Record* rec = corpus.find(subset.items[i].record_id);
        if (!rec)
            throw Error(ErrorKind::validation,
                        "subset record '" + subset.items[i].record_id + "' not in corpus");
        if (i > 0) records += "; ";
        records += detail::escape_record_text(rec->text);
    }

    const std::string k_str = std::to_string(k);
    std::string user;
    user += "You are now tasked with reviewing records related to " + ctx.feature_context +
            ". Each record is separated by \";\" symbols.\n\n";
    user += "Records: " + records + "\n\n";
    user += "Your goal is to extract the key topics from these records. For each identified "
            "topic, please provide a brief explanation along with examples. The total number of "
            "topics you extract should be exactly " + k_str + ", not more than " + k_str +
            " and not fewer than " + k_str + ".\n\n";
    user += "The result should be returned in JSON format, where each key represents an index, "
            "and the corresponding value is a dictionary with:\n"
            "- A topic name as the key, and\n"
            "- A description and some examples as the value.";
    if (ctx.extra_guidance && !ctx.extra_guidance->empty())
        user += "\n\n" + *ctx.extra_guidance;

    return {summarization_system_message(), user};
}

namespace detail {

// Model output often wraps the JSON in code fences or prose; cut down to the
// outermost {...} payload before parsing.
inline std::string extract_json_payload(const std::string& text) {
    std::string s = trim(text);
    auto fence = s.find("```");
    if (fence != std::string::npos) {
        auto start = s.find('\n', fence);
        auto close = s.rfind("```");
        if (start != std::string::npos && close != std::string::npos && close > start)
            s = trim(s.substr(start + 1, close - start - 1));
    }
    auto open = s.find('{');
    auto close = s.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open)
        s = s.substr(open, close - open + 1);
    return s;
}

inline std::vector<std::string> examples_from_json(const nlohmann::ordered_json& j) {
    std::vector<std::string> out;
    if (j.is_string()) {
        out.push_back(j.get<std::string>());
    } else if (j.is_array()) {
        for (const auto& e : j)
            out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    }
    return out;
}

inline Topic topic_from_value(const std::string& name, const nlohmann::ordered_json& value) {
    Topic t;
    t.name = trim(name);
    if (value.is_string()) {
        t.description = value.get<std::string>();
    } else if (value.is_object()) {
        for (const auto& [k, v] : value.items()) {
            std::string nk = normalize_label(k);
            if (nk == "description" || nk == "explanation") {
                t.description = v.is_string() ? v.get<std::string>() : v.dump();
            } else if (nk == "examples" || nk == "example") {
                t.examples = examples_from_json(v);
            }
        }
        if (t.description.empty() && !value.empty()) {
            const auto first = value.begin();
            if (first->is_string()) t.description = first->get<std::string>();
        }
    } else {
        t.description = value.dump();
    }
    return t;
}

}  // namespace detail

// Accepts the index-keyed shape ({"1": {name: {description, examples}}, ...})
// and the flat {name: description} map. Requires exactly k unique topics.
inline TopicSet parse_topic_json(const std::string& text, int k) {
    const std::string payload = detail::extract_json_payload(text);
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(payload);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, std::string("malformed topic JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::parse, "topic JSON must be an object");

    bool index_keyed = !j.empty();
    for (const auto& [key, value] : j.items()) {
        const std::string kt = trim(key);
        const bool numeric = !kt.empty() && kt.find_first_not_of("0123456789") == std::string::npos;
        if (!numeric || !value.is_object()) {
            index_keyed = false;
            break;
        }
    }

    TopicSet ts;
    ts.k = k;
    if (index_keyed) {
        std::vector<std::pair<long long, const nlohmann::ordered_json*>> entries;
        for (const auto& [key, value] : j.items()) {
            long long idx = 0;
            try {
                idx = std::stoll(trim(key));
            } catch (const std::exception&) {
                throw Error(ErrorKind::parse, "topic index key '" + key + "' out of range");
            }
            entries.emplace_back(idx, &value);
        }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [idx, value] : entries) {
            if (!value->is_object() || value->empty())
                throw Error(ErrorKind::parse,
                            "topic entry " + std::to_string(idx) + " must be a non-empty object");
            const auto item = value->begin();
            ts.topics.push_back(detail::topic_from_value(item.key(), item.value()));
        }
    } else {
        for (const auto& [name, value] : j.items())
            ts.topics.push_back(detail::topic_from_value(name, value));
    }

    if (static_cast<int>(ts.topics.size()) != k)
        throw Error(ErrorKind::validation,
                    "topic count mismatch: found " + std::to_string(ts.topics.size()) +
                        ", expected " + std::to_string(k));
    ts.validate();
    return ts;
}

struct ExtractResult {
    TopicSet topics;
    LlmUsage usage;
    int attempts = 0;
};

// Summarization call with rerun-on-invalid: the same prompt is reissued until
// the output parses into exactly k topics or attempts run out. repair_mode
// appends the previous parse error to the prompt instead (off by default).
inline ExtractResult extract_topics(const SampledSubset& subset, const Corpus& corpus, int k,
                                    const DomainContext& ctx, LlmClient& llm,
                                    int max_attempts = 3, bool repair_mode = false) {
    if (max_attempts < 1) throw Error(ErrorKind::validation, "max_attempts must be >= 1");
    const PromptPair base = build_summarization_prompt(subset, corpus, k, ctx);

    ExtractResult result;
    std::string last_error;
    std::string last_text;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        PromptPair prompt = base;
        if (repair_mode && attempt > 1)
            prompt.user += "\n\nYour previous answer was rejected: " + last_error +
                           ". Return only the corrected JSON.";
        ChatResult chat = llm.chat(prompt, {"summarize", "corpus"});
        result.usage += chat.usage;
        result.attempts = attempt;
        last_text = chat.text;
        try {
            result.topics = parse_topic_json(chat.text, k);
            return result;
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    std::string snippet = last_text.substr(0, 200);
    throw Error(ErrorKind::llm, "topic extraction failed after " + std::to_string(max_attempts) +
                                    " attempts; last error: " + last_error +
                                    "; last response: " + snippet);
}

// --- persistence ------------------------------------------------------------

inline nlohmann::ordered_json topics_to_json(const TopicSet& ts) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : ts.topics) {
        nlohmann::ordered_json j;
        j["name"] = t.name;
        j["description"] = t.description;
        j["examples"] = t.examples;
        arr.push_back(std::move(j));
    }
    return arr;
}

inline TopicSet topic_set_from_json(const nlohmann::ordered_json& j,
                                    std::optional<int> expected_k = std::nullopt) {
    if (!j.is_array()) throw Error(ErrorKind::parse, "topic file must hold an array of topics");
    TopicSet ts;
    for (const auto& item : j) {
        Topic t;
        t.name = item.at("name").get<std::string>();
        t.description = item.value("description", std::string{});
        if (item.contains("examples")) t.examples = detail::examples_from_json(item["examples"]);
        ts.topics.push_back(std::move(t));
    }
    ts.k = expected_k.value_or(static_cast<int>(ts.topics.size()));
    ts.validate();
    return ts;
}

inline void save_topic_set(const TopicSet& ts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write topic file '" + path + "'");
    out << topics_to_json(ts).dump(2) << "\n";
}

inline TopicSet load_topic_set(const std::string& path, std::optional<int> expected_k = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open topic file '" + path + "'");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, "topic file '" + path + "': " + e.what());
    }
    return topic_set_from_json(j, expected_k);
}

// Renders a TopicSet into the index-keyed response shape; fixtures and the
// parser round-trip test use this.
inline std::string render_topics_indexed(const TopicSet& ts) {
    nlohmann::ordered_json j;
    for (size_t i = 0; i < ts.topics.size(); ++i) {
        nlohmann::ordered_json value;
        value["description"] = ts.topics[i].description;
        value["examples"] = ts.topics[i].examples;
        nlohmann::ordered_json entry;
        entry[ts.topics[i].name] = std::move(value);
        j[std::to_string(i + 1)] = std::move(entry);
    }
    return j.dump(2);
}

}  // namespace clusterfusion
