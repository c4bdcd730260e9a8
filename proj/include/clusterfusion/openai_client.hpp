#pragma once

#include <chrono>
#include <cstdlib>
#include <functional>
#include <random>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "clusterfusion/embedding.hpp"
#include "clusterfusion/error.hpp"
#include "clusterfusion/llm.hpp"

namespace clusterfusion {

struct HttpResponse {
    int status = 0;        // 0 = transport failure
    std::string body;
    std::string error;     // transport error description when status == 0
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

// POST fn, injectable so retry behavior is testable without sockets.
using Transport = std::function<HttpResponse(const std::string& url, const std::string& body,
                                             const HttpHeaders& headers, int timeout_ms)>;

inline Transport default_http_transport() {
    return [](const std::string& url, const std::string& body, const HttpHeaders& headers,
              int timeout_ms) -> HttpResponse {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos)
            return {0, "", "invalid endpoint url '" + url + "'"};
        auto path_start = url.find('/', scheme_end + 3);
        const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(base);
        client.set_connection_timeout(0, timeout_ms * 1000LL);
        client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        client.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        httplib::Headers hdrs;
        for (const auto& [k, v] : headers) hdrs.emplace(k, v);
        auto res = client.Post(path, hdrs, body, "application/json");
        if (!res) return {0, "", httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    };
}

inline std::string api_key_from_env() {
    if (const char* k = std::getenv("CLUSTERFUSION_API_KEY")) return k;
    if (const char* k = std::getenv("OPENAI_API_KEY")) return k;
    return "";
}

namespace detail {

inline bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

// Runs the transport with exponential backoff + jitter. Counts every attempt
// in `calls`. `accept` decides whether a 2xx body is usable; an unusable body
// is retried like a transient failure.
inline HttpResponse post_with_retries(const Transport& transport, const std::string& url,
                                      const std::string& body, const HttpHeaders& headers,
                                      int timeout_ms, int max_retries, int backoff_base_ms,
                                      long long& calls,
                                      const std::function<bool(const HttpResponse&)>& accept) {
    static thread_local std::mt19937_64 jitter_rng(std::random_device{}());
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        if (attempt > 0 && backoff_base_ms > 0) {
            double jitter = 0.5 + 0.5 * std::uniform_real_distribution<double>(0.0, 1.0)(jitter_rng);
            double delay = backoff_base_ms * static_cast<double>(1ULL << (attempt - 1)) * jitter;
            if (delay > 8000.0) delay = 8000.0;
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(delay)));
        }
        HttpResponse res = transport(url, body, headers, timeout_ms);
        ++calls;
        if (res.status == 0) {
            last_error = "transport failure: " + res.error;
            continue;
        }
        if (res.status >= 200 && res.status < 300) {
            if (accept(res)) return res;
            last_error = "unusable response body (status " + std::to_string(res.status) + ")";
            continue;
        }
        if (!retryable_status(res.status))
            throw Error(ErrorKind::transport, "fatal HTTP status " + std::to_string(res.status) +
                                                  " from " + url + ": " + res.body.substr(0, 200));
        last_error = "HTTP status " + std::to_string(res.status);
    }
    throw Error(ErrorKind::transport,
                "exhausted " + std::to_string(max_retries + 1) + " attempts against " + url +
                    "; last: " + last_error);
}

}  // namespace detail

// Chat-completions client for any OpenAI-compatible endpoint. One handle may
// be shared across threads; a semaphore caps in-flight requests and a call
// holds its slot across its own retries.
class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(LlmConfig config, std::string api_key = api_key_from_env(),
                           Transport transport = default_http_transport())
        : config_(std::move(config)),
          api_key_(std::move(api_key)),
          transport_(std::move(transport)),
          slots_(std::max(1, config_.max_inflight)) {}

    ChatResult chat(const PromptPair& prompt, const ChatTag&) override {
        if (prompt.system.empty() || prompt.user.empty())
            throw Error(ErrorKind::validation, "prompt messages must be non-empty");

        nlohmann::ordered_json body;
        body["model"] = config_.model_id;
        body["messages"] = nlohmann::json::array({
            {{"role", "system"}, {"content", prompt.system}},
            {{"role", "user"}, {"content", prompt.user}},
        });
        if (config_.temperature) body["temperature"] = *config_.temperature;

        HttpHeaders headers;
        if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

        slots_.acquire();
        ChatResult result;
        try {
            HttpResponse res = detail::post_with_retries(
                transport_, config_.endpoint_url, body.dump(), headers, config_.timeout_ms,
                config_.max_retries, config_.backoff_base_ms, result.usage.calls,
                [](const HttpResponse& r) {
                    auto parsed = parse_completion(r.body);
                    return parsed.has_value() && !parsed->empty();
                });
            slots_.release();
            result.text = *parse_completion(res.body);
            fill_usage(res.body, prompt, result);
        } catch (...) {
            slots_.release();
            throw;
        }
        return result;
    }

    std::string model_id() const override { return config_.model_id; }

private:
    static std::optional<std::string> parse_completion(const std::string& body) {
        try {
            auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

    void fill_usage(const std::string& body, const PromptPair& prompt, ChatResult& result) const {
        try {
            auto j = nlohmann::json::parse(body);
            if (j.contains("usage")) {
                result.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0LL);
                result.usage.completion_tokens = j["usage"].value("completion_tokens", 0LL);
                return;
            }
        } catch (const nlohmann::json::exception&) {
        }
        result.usage.prompt_tokens = estimate_tokens(prompt.system) + estimate_tokens(prompt.user);
        result.usage.completion_tokens = estimate_tokens(result.text);
        result.usage.estimated = true;
    }

    LlmConfig config_;
    std::string api_key_;
    Transport transport_;
    std::counting_semaphore<256> slots_;
};

// OpenAI-compatible embeddings endpoint:
//   request  {model, input: [texts]}
//   response {data: [{embedding: [...]}, ...]}
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string endpoint_url, std::string model,
                          std::string api_key = api_key_from_env(), int max_retries = 3,
                          int timeout_ms = 60000, int backoff_base_ms = 250,
                          Transport transport = default_http_transport())
        : endpoint_url_(std::move(endpoint_url)),
          model_(std::move(model)),
          api_key_(std::move(api_key)),
          max_retries_(max_retries),
          timeout_ms_(timeout_ms),
          backoff_base_ms_(backoff_base_ms),
          transport_(std::move(transport)) {}

    std::string id() const override { return model_; }
    bool remote() const override { return true; }

    std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) override {
        nlohmann::ordered_json body;
        body["model"] = model_;
        body["input"] = texts;
        HttpHeaders headers;
        if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

        long long calls = 0;
        HttpResponse res = detail::post_with_retries(
            transport_, endpoint_url_, body.dump(), headers, timeout_ms_, max_retries_,
            backoff_base_ms_, calls,
            [&](const HttpResponse& r) { return parse_vectors(r.body, texts.size()).has_value(); });
        return *parse_vectors(res.body, texts.size());
    }

private:
    static std::optional<std::vector<std::vector<float>>> parse_vectors(const std::string& body,
                                                                        size_t expected) {
        try {
            auto j = nlohmann::json::parse(body);
            const auto& data = j.at("data");
            if (!data.is_array() || data.size() != expected) return std::nullopt;
            std::vector<std::vector<float>> out;
            out.reserve(expected);
            for (const auto& item : data)
                out.push_back(item.at("embedding").get<std::vector<float>>());
            return out;
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

    std::string endpoint_url_;
    std::string model_;
    std::string api_key_;
    int max_retries_;
    int timeout_ms_;
    int backoff_base_ms_;
    Transport transport_;
};

}  // namespace clusterfusion
