#pragma once

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "clusterfusion/corpus.hpp"
#include "clusterfusion/error.hpp"
#include "clusterfusion/llm.hpp"
#include "clusterfusion/summarize.hpp"
#include "clusterfusion/text.hpp"

namespace clusterfusion {

struct AssignmentEntry {
    std::string topic;
    int attempts = 0;
    bool fallback = false;
};

struct AssignmentMap {
    std::map<std::string, AssignmentEntry> entries;  // record id -> entry, sorted by id
    std::string topic_set_digest;
};

inline const char* assignment_system_message() {
    return "You are a helpful assistant, that can help me label each record into topics.";
}

inline PromptPair build_assignment_prompt(const Record& record, const TopicSet& ts,
                                          const DomainContext& ctx) {
    ts.validate();
    if (ctx.feature_context.empty())
        throw Error(ErrorKind::validation, "feature context must be non-empty");

    nlohmann::ordered_json dict;
    for (const auto& t : ts.topics) dict[t.name] = t.description;

    std::string user;
    user += "Following records is about " + ctx.feature_context +
            ". Please classify the record into one of the following topics, which are "
            "represented as a dictionary. Its keys are the names of the topics and values are "
            "the descriptions of the topic: " + dict.dump() + "\n\n";
    user += "Comment: " + record.text + "\n\n";
    user += "Return the result in JSON format with the following format: key 'topic', with "
            "value as the picked topic;";
    return {assignment_system_message(), user};
}

// Canonical topic name on a valid answer, nullopt on anything else. Invalid
// is a value here, consumed by the rerun loop.
inline std::optional<std::string> parse_assignment(const std::string& text, const TopicSet& ts) {
    const std::string payload = detail::extract_json_payload(text);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(payload);
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    if (!j.is_object() || !j.contains("topic") || !j["topic"].is_string()) return std::nullopt;
    const auto names = ts.normalized_names();
    auto it = names.find(normalize_label(j["topic"].get<std::string>()));
    if (it == names.end()) return std::nullopt;
    return it->second;
}

namespace detail {

// Label the model tried to emit, for nearest-name fallback: prefer the JSON
// "topic" value, else the raw text.
inline std::string candidate_label(const std::string& text) {
    const std::string payload = extract_json_payload(text);
    try {
        auto j = nlohmann::json::parse(payload);
        if (j.is_object() && j.contains("topic") && j["topic"].is_string())
            return j["topic"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
    }
    return trim(text);
}

inline std::string nearest_topic_name(const std::string& label, const TopicSet& ts) {
    double best = -1.0;
    std::string best_name;
    for (const auto& t : ts.topics) {
        double sim = name_similarity(label, t.name);
        if (sim > best) {  // ties keep the earlier topic
            best = sim;
            best_name = t.name;
        }
    }
    return best_name;
}

}  // namespace detail

struct AssignOutcome {
    std::string topic;
    int attempts = 0;
    bool fallback = false;
    LlmUsage usage;
};

// One record, one topic. Invalid answers rerun the identical prompt up to
// max_reruns times; a persistently invalid record falls back to the nearest
// topic name by normalized edit-distance similarity and is flagged.
inline AssignOutcome assign_record(const Record& record, const TopicSet& ts,
                                   const DomainContext& ctx, LlmClient& llm, int max_reruns = 3) {
    if (max_reruns < 0) throw Error(ErrorKind::validation, "max_reruns must be >= 0");
    const PromptPair prompt = build_assignment_prompt(record, ts, ctx);

    AssignOutcome out;
    std::string last_text;
    for (int attempt = 1; attempt <= max_reruns + 1; ++attempt) {
        ChatResult chat = llm.chat(prompt, {"assign", record.id});
        out.usage += chat.usage;
        out.attempts = attempt;
        last_text = chat.text;
        if (auto topic = parse_assignment(chat.text, ts)) {
            out.topic = *topic;
            return out;
        }
    }
    out.topic = detail::nearest_topic_name(detail::candidate_label(last_text), ts);
    out.fallback = true;
    return out;
}

struct AssignFailure {
    std::string record_id;
    std::string error;
};

struct AssignAllResult {
    AssignmentMap map;
    LlmUsage usage;
    std::vector<AssignFailure> failures;  // transport-dead records; run continues
    size_t resumed = 0;                   // entries restored from a checkpoint
};

namespace detail {

// Entries written against a different topic set are ignored on resume; the
// optional digest field makes that detectable.
inline std::map<std::string, AssignmentEntry> load_checkpoint(const std::string& path,
                                                              const std::string& digest) {
    std::map<std::string, AssignmentEntry> entries;
    std::ifstream in(path);
    if (!in) return entries;
    std::string line;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::parse,
                        "checkpoint row " + std::to_string(row) + ": " + e.what());
        }
        if (j.contains("digest") && j["digest"].get<std::string>() != digest) continue;
        AssignmentEntry e;
        e.topic = j.at("topic").get<std::string>();
        e.attempts = j.value("attempts", 1);
        e.fallback = j.value("fallback", false);
        entries[j.at("id").get<std::string>()] = std::move(e);
    }
    return entries;
}

inline std::string checkpoint_line(const std::string& id, const AssignmentEntry& e,
                                   const std::string& digest) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["topic"] = e.topic;
    j["attempts"] = e.attempts;
    j["fallback"] = e.fallback;
    j["digest"] = digest;
    return j.dump();
}

}  // namespace detail

// Fans the per-record calls out over `parallelism` workers. The map is keyed
// by record id, so the result is independent of completion order; the
// checkpoint file is appended as records complete and consulted on restart so
// a resumed run never re-bills finished records.
inline AssignAllResult assign_all(const Corpus& corpus, const TopicSet& ts,
                                  const DomainContext& ctx, LlmClient& llm, int parallelism = 1,
                                  int max_reruns = 3, const std::string& checkpoint_path = "") {
    if (parallelism < 1) throw Error(ErrorKind::validation, "parallelism must be >= 1");
    ts.validate();

    AssignAllResult result;
    result.map.topic_set_digest = ts.digest();

    std::map<std::string, AssignmentEntry> done;
    if (!checkpoint_path.empty())
        done = detail::load_checkpoint(checkpoint_path, result.map.topic_set_digest);

    std::vector<size_t> pending;
    for (size_t i = 0; i < corpus.size(); ++i) {
        auto it = done.find(corpus.at(i).id);
        if (it != done.end()) {
            result.map.entries.emplace(it->first, it->second);
            ++result.resumed;
        } else {
            pending.push_back(i);
        }
    }

    std::ofstream checkpoint;
    if (!checkpoint_path.empty()) {
        checkpoint.open(checkpoint_path, std::ios::app);
        if (!checkpoint)
            throw Error(ErrorKind::io, "cannot open checkpoint file '" + checkpoint_path + "'");
    }

    std::mutex mu;
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
        while (true) {
            const size_t slot = cursor.fetch_add(1);
            if (slot >= pending.size()) return;
            const Record& rec = corpus.at(pending[slot]);
            try {
                AssignOutcome out = assign_record(rec, ts, ctx, llm, max_reruns);
                AssignmentEntry entry{out.topic, out.attempts, out.fallback};
                std::lock_guard<std::mutex> lock(mu);
                result.usage += out.usage;
                result.map.entries.emplace(rec.id, entry);
                if (checkpoint.is_open())
                    checkpoint << detail::checkpoint_line(rec.id, entry,
                                                          result.map.topic_set_digest)
                               << "\n"
                               << std::flush;
            } catch (const Error& e) {
                std::lock_guard<std::mutex> lock(mu);
                result.failures.push_back({rec.id, e.what()});
            }
        }
    };

    const size_t workers = std::min<size_t>(static_cast<size_t>(parallelism),
                                            std::max<size_t>(pending.size(), 1));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (size_t i = 0; i < workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return result;
}

inline void save_assignment_map(const AssignmentMap& map, const std::string& path) {
    nlohmann::ordered_json j;
    j["topic_set_digest"] = map.topic_set_digest;
    nlohmann::ordered_json entries;
    for (const auto& [id, e] : map.entries) {
        nlohmann::ordered_json item;
        item["topic"] = e.topic;
        item["attempts"] = e.attempts;
        item["fallback"] = e.fallback;
        entries[id] = std::move(item);
    }
    j["entries"] = std::move(entries);
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write assignment file '" + path + "'");
    out << j.dump(2) << "\n";
}

inline AssignmentMap load_assignment_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open assignment file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, "assignment file '" + path + "': " + e.what());
    }
    AssignmentMap map;
    map.topic_set_digest = j.value("topic_set_digest", std::string{});
    for (const auto& [id, item] : j.at("entries").items()) {
        AssignmentEntry e;
        e.topic = item.at("topic").get<std::string>();
        e.attempts = item.value("attempts", 1);
        e.fallback = item.value("fallback", false);
        map.entries[id] = std::move(e);
    }
    return map;
}

}  // namespace clusterfusion
