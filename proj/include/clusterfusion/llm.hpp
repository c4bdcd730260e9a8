#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterfusion/error.hpp"

namespace clusterfusion {

struct PromptPair {
    std::string system;
    std::string user;
};

struct LlmUsage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;
    long long calls = 0;
    bool estimated = false;  // true if any merged-in count was estimated

    LlmUsage& operator+=(const LlmUsage& o) {
        prompt_tokens += o.prompt_tokens;
        completion_tokens += o.completion_tokens;
        calls += o.calls;
        estimated = estimated || o.estimated;
        return *this;
    }

    friend LlmUsage operator+(LlmUsage a, const LlmUsage& b) { return a += b; }

    friend bool operator==(const LlmUsage& a, const LlmUsage& b) {
        return a.prompt_tokens == b.prompt_tokens && a.completion_tokens == b.completion_tokens &&
               a.calls == b.calls && a.estimated == b.estimated;
    }
};

// chars/4 heuristic, used whenever a response carries no usage block.
inline long long estimate_tokens(const std::string& s) {
    return static_cast<long long>((s.size() + 3) / 4);
}

struct LlmConfig {
    std::string model_id = "gpt-4o";
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    int max_retries = 3;
    int timeout_ms = 60000;
    std::optional<double> temperature;  // unset -> provider default
    int max_inflight = 8;
    int backoff_base_ms = 250;
};

// Which pipeline stage issued the request, and for which record. Lets the
// scripted client route requests; the live client ignores it.
struct ChatTag {
    std::string stage;           // "summarize" | "assign"
    std::string id = "corpus";   // record id, or "corpus" for whole-corpus calls
};

struct ChatResult {
    std::string text;
    LlmUsage usage;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual ChatResult chat(const PromptPair& prompt, const ChatTag& tag) = 0;
    virtual std::string model_id() const = 0;
};

// Scripted client. Responses are keyed by (stage, id); a value is either a
// single string (repeated forever) or a sequence that advances per call and
// sticks at its last element. "*" matches any id within a stage.
class MockLlmClient : public LlmClient {
public:
    MockLlmClient() = default;

    void add_response(const std::string& stage, const std::string& id, std::string response) {
        std::lock_guard<std::mutex> lock(mu_);
        entries_[key(stage, id)].responses = {std::move(response)};
    }

    void add_sequence(const std::string& stage, const std::string& id,
                      std::vector<std::string> responses) {
        if (responses.empty())
            throw Error(ErrorKind::config, "mock sequence for " + stage + "/" + id + " is empty");
        std::lock_guard<std::mutex> lock(mu_);
        entries_[key(stage, id)].responses = std::move(responses);
    }

    ChatResult chat(const PromptPair& prompt, const ChatTag& tag) override {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = entries_.find(key(tag.stage, tag.id));
        if (it == entries_.end()) it = entries_.find(key(tag.stage, "*"));
        if (it == entries_.end())
            throw Error(ErrorKind::llm,
                        "unmatched mock request: stage=" + tag.stage + " id=" + tag.id);
        Entry& e = it->second;
        const size_t idx = std::min(e.cursor, e.responses.size() - 1);
        ++e.cursor;
        ChatResult result;
        result.text = e.responses[idx];
        result.usage.prompt_tokens = estimate_tokens(prompt.system) + estimate_tokens(prompt.user);
        result.usage.completion_tokens = estimate_tokens(result.text);
        result.usage.calls = 1;
        result.usage.estimated = true;
        return result;
    }

    std::string model_id() const override { return "mock"; }

private:
    struct Entry {
        std::vector<std::string> responses;
        size_t cursor = 0;
    };

    static std::string key(const std::string& stage, const std::string& id) {
        return stage + "\x1f" + id;
    }

    std::mutex mu_;
    std::map<std::string, Entry> entries_;
};

// Fixture file shape:
//   { "summarize": { "corpus": "resp" | ["resp1", "resp2"] },
//     "assign":    { "<record-id>": ..., "*": ... } }
inline std::unique_ptr<MockLlmClient> mock_from_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open fixture file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, "fixture '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::parse, "fixture '" + path + "': expected an object");
    auto client = std::make_unique<MockLlmClient>();
    for (const auto& [stage, table] : j.items()) {
        if (stage != "summarize" && stage != "assign")
            throw Error(ErrorKind::parse,
                        "fixture '" + path + "': unknown stage '" + stage + "'");
        if (!table.is_object())
            throw Error(ErrorKind::parse, "fixture '" + path + "': stage '" + stage +
                                              "' must map ids to responses");
        for (const auto& [id, value] : table.items()) {
            if (value.is_string()) {
                client->add_response(stage, id, value.get<std::string>());
            } else if (value.is_array()) {
                std::vector<std::string> seq;
                for (const auto& v : value) {
                    if (!v.is_string())
                        throw Error(ErrorKind::parse, "fixture '" + path +
                                                          "': sequence entries must be strings");
                    seq.push_back(v.get<std::string>());
                }
                client->add_sequence(stage, id, std::move(seq));
            } else {
                throw Error(ErrorKind::parse, "fixture '" + path + "': response for " + stage +
                                                  "/" + id + " must be a string or array");
            }
        }
    }
    return client;
}

}  // namespace clusterfusion
