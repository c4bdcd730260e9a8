#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterfusion/assign.hpp"
#include "clusterfusion/corpus.hpp"
#include "clusterfusion/embedding.hpp"
#include "clusterfusion/error.hpp"
#include "clusterfusion/eval.hpp"
#include "clusterfusion/llm.hpp"
#include "clusterfusion/openai_client.hpp"
#include "clusterfusion/partition.hpp"
#include "clusterfusion/rng.hpp"
#include "clusterfusion/summarize.hpp"

namespace clusterfusion {

enum class EmbeddingSource { test, file, provider };

inline EmbeddingSource embedding_source_from_string(const std::string& s) {
    if (s == "test") return EmbeddingSource::test;
    if (s == "file") return EmbeddingSource::file;
    if (s == "provider") return EmbeddingSource::provider;
    throw Error(ErrorKind::config,
                "unknown embedding source '" + s + "' (expected test|file|provider)");
}

struct RunConfig {
    std::string dataset_path;
    std::string dataset_format = "jsonl";
    std::string dataset_name;  // defaults to the file stem

    int k = 0;
    int m = 0;  // 0 -> 2K
    int s = 0;  // 0 -> min(N, 8K)
    OrderStrategy strategy;
    uint64_t seed = 0;

    EmbeddingSource embedding_source = EmbeddingSource::test;
    std::string embedding_file;
    size_t embedding_dim = 64;    // test embedder
    std::string embedding_model = "text-embedding-3-small";
    std::string embedding_endpoint = "https://api.openai.com/v1/embeddings";
    size_t embed_batch_size = 64;

    LlmConfig llm;
    std::string mock_fixture;  // non-empty -> scripted client

    DomainContext ctx;
    Pricing pricing;
    NmiNorm nmi_norm = NmiNorm::arithmetic;
    KMeansSpace kmeans_space = KMeansSpace::unit;

    int parallelism = 1;
    int max_attempts = 3;  // summarization reruns
    int max_reruns = 3;    // assignment reruns
    long long token_budget = 32000;

    std::string out_dir = "runs";

    int effective_m() const { return m > 0 ? m : 2 * k; }
    int effective_s(size_t n) const {
        if (s > 0) return s;
        return static_cast<int>(std::min<long long>(static_cast<long long>(n), 8LL * k));
    }

    void validate() const {
        if (dataset_path.empty()) throw Error(ErrorKind::config, "dataset path is required");
        if (k < 1) throw Error(ErrorKind::config, "k must be >= 1");
        if (s > 0 && s < effective_m())
            throw Error(ErrorKind::config, "s must be >= the group count m");
        if (ctx.feature_context.empty())
            throw Error(ErrorKind::config, "feature_context is required");
        if (parallelism < 1) throw Error(ErrorKind::config, "parallelism must be >= 1");
    }
};

// --- config file ------------------------------------------------------------
//
// Plain `key = value` lines, '#' comments. Secrets never appear here; the API
// key comes from the environment.

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto to_int = [&](const std::string& v) {
        try {
            return std::stoi(v);
        } catch (...) {
            throw Error(ErrorKind::config, "config key '" + key + "': not an integer: " + v);
        }
    };
    auto to_u64 = [&](const std::string& v) {
        try {
            return static_cast<uint64_t>(std::stoull(v));
        } catch (...) {
            throw Error(ErrorKind::config, "config key '" + key + "': not an integer: " + v);
        }
    };
    auto to_double = [&](const std::string& v) {
        try {
            return std::stod(v);
        } catch (...) {
            throw Error(ErrorKind::config, "config key '" + key + "': not a number: " + v);
        }
    };

    if (key == "dataset") cfg.dataset_path = value;
    else if (key == "format") cfg.dataset_format = value;
    else if (key == "name") cfg.dataset_name = value;
    else if (key == "k") cfg.k = to_int(value);
    else if (key == "m") cfg.m = to_int(value);
    else if (key == "s") cfg.s = to_int(value);
    else if (key == "strategy") cfg.strategy = OrderStrategy::parse(value);
    else if (key == "seed") cfg.seed = to_u64(value);
    else if (key == "embedding") cfg.embedding_source = embedding_source_from_string(value);
    else if (key == "embedding_file") cfg.embedding_file = value;
    else if (key == "embedding_dim") cfg.embedding_dim = static_cast<size_t>(to_int(value));
    else if (key == "embedding_model") cfg.embedding_model = value;
    else if (key == "embedding_endpoint") cfg.embedding_endpoint = value;
    else if (key == "embed_batch_size") cfg.embed_batch_size = static_cast<size_t>(to_int(value));
    else if (key == "llm_model") cfg.llm.model_id = value;
    else if (key == "llm_endpoint") cfg.llm.endpoint_url = value;
    else if (key == "max_retries") cfg.llm.max_retries = to_int(value);
    else if (key == "timeout_ms") cfg.llm.timeout_ms = to_int(value);
    else if (key == "temperature") cfg.llm.temperature = to_double(value);
    else if (key == "max_inflight") cfg.llm.max_inflight = to_int(value);
    else if (key == "mock_fixture") cfg.mock_fixture = value;
    else if (key == "feature_context") cfg.ctx.feature_context = value;
    else if (key == "extra_guidance") cfg.ctx.extra_guidance = value;
    else if (key == "price_in") cfg.pricing.input_per_million = to_double(value);
    else if (key == "price_out") cfg.pricing.output_per_million = to_double(value);
    else if (key == "nmi_norm") {
        if (value == "arithmetic") cfg.nmi_norm = NmiNorm::arithmetic;
        else if (value == "geometric") cfg.nmi_norm = NmiNorm::geometric;
        else throw Error(ErrorKind::config, "nmi_norm must be arithmetic or geometric");
    }
    else if (key == "kmeans_space") {
        if (value == "unit") cfg.kmeans_space = KMeansSpace::unit;
        else if (value == "raw") cfg.kmeans_space = KMeansSpace::raw;
        else throw Error(ErrorKind::config, "kmeans_space must be unit or raw");
    }
    else if (key == "parallelism") cfg.parallelism = to_int(value);
    else if (key == "max_attempts") cfg.max_attempts = to_int(value);
    else if (key == "max_reruns") cfg.max_reruns = to_int(value);
    else if (key == "token_budget") cfg.token_budget = to_int(value);
    else if (key == "out_dir") cfg.out_dir = value;
    else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config file '" + path + "'");
    std::string line;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::config,
                        "config line " + std::to_string(row) + ": expected key = value");
        apply_config_entry(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return base;
}

// Canonical serialization of everything that shapes run output; the hash
// names the run directory so identical configs land in the same place.
inline std::string config_hash(const RunConfig& cfg) {
    std::string s;
    auto add = [&](const std::string& k, const std::string& v) { s += k + "=" + v + ";"; };
    add("dataset", cfg.dataset_path);
    add("format", cfg.dataset_format);
    add("name", cfg.dataset_name);
    add("k", std::to_string(cfg.k));
    add("m", std::to_string(cfg.m));
    add("s", std::to_string(cfg.s));
    add("strategy", cfg.strategy.to_string());
    add("seed", std::to_string(cfg.seed));
    add("embedding", std::to_string(static_cast<int>(cfg.embedding_source)));
    add("embedding_file", cfg.embedding_file);
    add("embedding_dim", std::to_string(cfg.embedding_dim));
    add("embedding_model", cfg.embedding_model);
    add("llm_model", cfg.llm.model_id);
    add("mock", cfg.mock_fixture);
    add("feature_context", cfg.ctx.feature_context);
    add("extra_guidance", cfg.ctx.extra_guidance.value_or(""));
    add("price_in", std::to_string(cfg.pricing.input_per_million));
    add("price_out", std::to_string(cfg.pricing.output_per_million));
    add("nmi_norm", std::to_string(static_cast<int>(cfg.nmi_norm)));
    add("kmeans_space", std::to_string(static_cast<int>(cfg.kmeans_space)));
    add("max_attempts", std::to_string(cfg.max_attempts));
    add("max_reruns", std::to_string(cfg.max_reruns));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

// --- manifest ---------------------------------------------------------------

struct StageRecord {
    std::string name;
    std::string status = "pending";  // pending | ok | failed | skipped
    std::string artifact;
    std::string started;
    std::string finished;
    std::string error;
};

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunManifest {
    std::string run_id;
    std::string dataset;
    std::string strategy;
    uint64_t seed = 0;
    int k = 0, m = 0, s = 0, quota = 0;
    size_t n = 0;
    std::string embedding_provider;
    std::string llm_model;
    size_t embed_batches = 0;
    bool embed_remote = false;
    long long summarize_attempts = 0;
    long long assignment_calls = 0;
    LlmUsage summarize_usage;
    LlmUsage assign_usage;
    LlmUsage total_usage;
    long long n_fallback = 0;
    size_t n_failed_records = 0;
    size_t resumed_records = 0;
    std::vector<StageRecord> stages;

    StageRecord& stage(const std::string& name) {
        for (auto& s : stages)
            if (s.name == name) return s;
        StageRecord rec;
        rec.name = name;
        stages.push_back(std::move(rec));
        return stages.back();
    }

    nlohmann::ordered_json to_json(const RunConfig& cfg) const {
        nlohmann::ordered_json j;
        j["run_id"] = run_id;
        j["dataset"] = dataset;
        j["strategy"] = strategy;
        j["seed"] = seed;
        j["n"] = n;
        j["k"] = k;
        j["m"] = m;
        j["s"] = s;
        j["quota"] = quota;
        j["embedding_provider"] = embedding_provider;
        j["llm_model"] = llm_model;
        j["calls"] = {{"embed_batches", embed_batches},
                      {"embed_remote", embed_remote},
                      {"summarize_attempts", summarize_attempts},
                      {"assignment_calls", assignment_calls},
                      {"llm_total", total_usage.calls}};
        j["usage"] = {{"summarize",
                       {{"prompt_tokens", summarize_usage.prompt_tokens},
                        {"completion_tokens", summarize_usage.completion_tokens},
                        {"calls", summarize_usage.calls}}},
                      {"assign",
                       {{"prompt_tokens", assign_usage.prompt_tokens},
                        {"completion_tokens", assign_usage.completion_tokens},
                        {"calls", assign_usage.calls}}},
                      {"total",
                       {{"prompt_tokens", total_usage.prompt_tokens},
                        {"completion_tokens", total_usage.completion_tokens},
                        {"calls", total_usage.calls},
                        {"estimated", total_usage.estimated}}}};
        j["n_fallback"] = n_fallback;
        j["n_failed_records"] = n_failed_records;
        j["resumed_records"] = resumed_records;
        nlohmann::ordered_json stages_json = nlohmann::ordered_json::array();
        for (const auto& s : stages) {
            nlohmann::ordered_json sj;
            sj["name"] = s.name;
            sj["status"] = s.status;
            sj["artifact"] = s.artifact;
            sj["started"] = s.started;
            sj["finished"] = s.finished;
            if (!s.error.empty()) sj["error"] = s.error;
            stages_json.push_back(std::move(sj));
        }
        j["stages"] = std::move(stages_json);
        nlohmann::ordered_json cj;
        cj["dataset"] = cfg.dataset_path;
        cj["format"] = cfg.dataset_format;
        cj["k"] = cfg.k;
        cj["m"] = cfg.m;
        cj["s"] = cfg.s;
        cj["strategy"] = cfg.strategy.to_string();
        cj["seed"] = cfg.seed;
        cj["embedding_source"] = static_cast<int>(cfg.embedding_source);
        cj["embedding_model"] = cfg.embedding_model;
        cj["llm_model"] = cfg.llm.model_id;
        cj["mock_fixture"] = cfg.mock_fixture;
        cj["feature_context"] = cfg.ctx.feature_context;
        cj["extra_guidance"] = cfg.ctx.extra_guidance.value_or("");
        cj["parallelism"] = cfg.parallelism;
        cj["max_attempts"] = cfg.max_attempts;
        cj["max_reruns"] = cfg.max_reruns;
        cj["price_in"] = cfg.pricing.input_per_million;
        cj["price_out"] = cfg.pricing.output_per_million;
        j["config"] = std::move(cj);
        return j;
    }
};

struct RunResult {
    bool ok = false;
    std::filesystem::path run_dir;
    RunManifest manifest;
    std::optional<EvalReport> report;
    std::string error;
};

// --- pipeline ---------------------------------------------------------------

namespace detail {

inline std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& cfg) {
    return std::make_unique<HttpEmbeddingProvider>(cfg.embedding_endpoint, cfg.embedding_model,
                                                   api_key_from_env(), cfg.llm.max_retries,
                                                   cfg.llm.timeout_ms);
}

inline std::unique_ptr<LlmClient> make_llm_client(const RunConfig& cfg) {
    if (!cfg.mock_fixture.empty()) return mock_from_fixture(cfg.mock_fixture);
    return std::make_unique<HttpLlmClient>(cfg.llm);
}

inline EmbedResult obtain_embeddings(const RunConfig& cfg, const Corpus& corpus,
                                     EmbeddingProvider* injected, uint64_t stage_seed) {
    if (cfg.embedding_source == EmbeddingSource::file) {
        EmbedResult res;
        res.matrix = load_embeddings(cfg.embedding_file);
        require_aligned(res.matrix, corpus);
        return res;
    }
    if (injected) return embed_corpus(corpus, *injected, cfg.embed_batch_size);
    if (cfg.embedding_source == EmbeddingSource::test) {
        TestEmbeddingProvider provider(cfg.embedding_dim, stage_seed);
        return embed_corpus(corpus, provider, cfg.embed_batch_size);
    }
    auto provider = make_embedding_provider(cfg);
    return embed_corpus(corpus, *provider, cfg.embed_batch_size);
}

}  // namespace detail

// Runs the full pipeline: embed, group, sample, order, summarize, assign,
// and score when every record carries a gold label. Each stage persists its
// artifact under the run directory before the next starts, and the manifest
// records whatever completed even when a stage fails.
inline RunResult cmd_run(const RunConfig& cfg, LlmClient* injected_llm = nullptr,
                         EmbeddingProvider* injected_embedder = nullptr,
                         const TopicSet* provided_topics = nullptr) {
    cfg.validate();
    namespace fs = std::filesystem;

    RunResult result;
    RunManifest& man = result.manifest;
    man.stages.reserve(8);
    man.run_id = config_hash(cfg);
    man.seed = cfg.seed;
    man.k = cfg.k;
    man.strategy = cfg.strategy.to_string();
    man.llm_model = cfg.llm.model_id;

    result.run_dir = fs::path(cfg.out_dir) / ("run-" + man.run_id);
    fs::create_directories(result.run_dir);
    const auto artifact = [&](const char* name) { return (result.run_dir / name).string(); };
    const auto save_manifest = [&]() {
        std::ofstream out(artifact("manifest.json"));
        out << man.to_json(cfg).dump(2) << "\n";
    };

    auto fail_stage = [&](StageRecord& st, const Error& e) {
        st.status = "failed";
        st.finished = timestamp_utc();
        st.error = e.what();
        result.error = e.what();
        save_manifest();
    };

    std::unique_ptr<LlmClient> owned_llm;
    LlmClient* llm = injected_llm;

    try {
        // ---- load ----
        auto& load_st = man.stage("load");
        load_st.started = timestamp_utc();
        Corpus corpus;
        try {
            corpus = load_corpus(cfg.dataset_path, corpus_format_from_string(cfg.dataset_format));
        } catch (const Error& e) {
            fail_stage(load_st, e);
            return result;
        }
        man.dataset = cfg.dataset_name.empty() ? corpus.name : cfg.dataset_name;
        man.n = corpus.size();
        man.m = cfg.effective_m();
        man.s = cfg.effective_s(corpus.size());
        load_st.status = "ok";
        load_st.artifact = cfg.dataset_path;
        load_st.finished = timestamp_utc();

        if (!llm) {
            owned_llm = detail::make_llm_client(cfg);
            llm = owned_llm.get();
        }

        TopicSet topics;
        if (provided_topics) {
            // assignment-only mode: topics are given, Step 1 and Step 2 are skipped
            topics = *provided_topics;
            topics.validate();
            man.stage("embed").status = "skipped";
            man.stage("partition").status = "skipped";
            auto& sum_st = man.stage("summarize");
            sum_st.status = "skipped";
            save_topic_set(topics, artifact("topics.json"));
            sum_st.artifact = artifact("topics.json");
            save_manifest();
        } else {
            // ---- embed ----
            auto& embed_st = man.stage("embed");
            embed_st.started = timestamp_utc();
            EmbedResult embedded;
            try {
                embedded = detail::obtain_embeddings(cfg, corpus, injected_embedder,
                                                     derive_seed(cfg.seed, "embed"));
            } catch (const Error& e) {
                fail_stage(embed_st, e);
                return result;
            }
            man.embedding_provider = embedded.matrix.provider_id();
            man.embed_batches = embedded.remote ? embedded.batches : 0;
            man.embed_remote = embedded.remote;
            save_embeddings(embedded.matrix, artifact("embeddings.bin"));
            embed_st.status = "ok";
            embed_st.artifact = artifact("embeddings.bin");
            embed_st.finished = timestamp_utc();
            save_manifest();

            // ---- partition: group, sample, order ----
            auto& part_st = man.stage("partition");
            part_st.started = timestamp_utc();
            SampledSubset ordered;
            try {
                const GroupingResult grouping = group_embeddings(
                    embedded.matrix, man.m, derive_seed(cfg.seed, "group"), cfg.kmeans_space);
                const SampledSubset sampled =
                    balanced_sample(corpus, grouping, man.s, derive_seed(cfg.seed, "sample"));
                man.quota = sampled.quota;
                ordered = order_subset(sampled, embedded.matrix, corpus, cfg.strategy,
                                       derive_seed(cfg.seed, "order"));
            } catch (const Error& e) {
                fail_stage(part_st, e);
                return result;
            }
            write_subset_jsonl(ordered, corpus, artifact("subset.jsonl"));
            part_st.status = "ok";
            part_st.artifact = artifact("subset.jsonl");
            part_st.finished = timestamp_utc();
            save_manifest();

            // ---- summarize ----
            auto& sum_st = man.stage("summarize");
            sum_st.started = timestamp_utc();
            const PromptPair preview = build_summarization_prompt(ordered, corpus, cfg.k, cfg.ctx);
            const long long est = estimate_tokens(preview.system) + estimate_tokens(preview.user);
            if (est > cfg.token_budget)
                std::cerr << "warning: estimated summarization prompt tokens (" << est
                          << ") exceed token budget (" << cfg.token_budget
                          << "); consider lowering s\n";
            try {
                ExtractResult extracted =
                    extract_topics(ordered, corpus, cfg.k, cfg.ctx, *llm, cfg.max_attempts);
                topics = std::move(extracted.topics);
                man.summarize_attempts = extracted.attempts;
                man.summarize_usage = extracted.usage;
            } catch (const Error& e) {
                fail_stage(sum_st, e);
                return result;
            }
            save_topic_set(topics, artifact("topics.json"));
            sum_st.status = "ok";
            sum_st.artifact = artifact("topics.json");
            sum_st.finished = timestamp_utc();
            save_manifest();
        }

        // ---- assign ----
        auto& assign_st = man.stage("assign");
        assign_st.started = timestamp_utc();
        assign_st.artifact = artifact("assignments.jsonl");
        AssignAllResult assigned;
        try {
            assigned = assign_all(corpus, topics, cfg.ctx, *llm, cfg.parallelism, cfg.max_reruns,
                                  artifact("assignments.jsonl"));
        } catch (const Error& e) {
            fail_stage(assign_st, e);
            return result;
        }
        man.assign_usage = assigned.usage;
        man.assignment_calls = assigned.usage.calls;
        man.total_usage = man.summarize_usage + man.assign_usage;
        man.n_failed_records = assigned.failures.size();
        man.resumed_records = assigned.resumed;
        for (const auto& [id, e] : assigned.map.entries)
            if (e.fallback) ++man.n_fallback;
        save_assignment_map(assigned.map, artifact("assignments.json"));
        if (!assigned.failures.empty()) {
            std::string msg = std::to_string(assigned.failures.size()) +
                              " records failed after transport retries; first: " +
                              assigned.failures.front().record_id + " (" +
                              assigned.failures.front().error + ")";
            fail_stage(assign_st, Error(ErrorKind::transport, msg));
            return result;
        }
        assign_st.status = "ok";
        assign_st.finished = timestamp_utc();
        save_manifest();

        // ---- eval ----
        auto& eval_st = man.stage("eval");
        eval_st.started = timestamp_utc();
        if (corpus.all_gold()) {
            LabelVectorPair pair;
            for (const auto& rec : corpus.records) {
                pair.ids.push_back(rec.id);
                pair.pred.push_back(assigned.map.entries.at(rec.id).topic);
                pair.gold.push_back(*rec.gold_label);
            }
            EvalReport report;
            report.dataset = man.dataset;
            report.strategy = man.strategy;
            report.seed = cfg.seed;
            auto acc = hungarian_accuracy(pair);
            report.accuracy = acc.accuracy;
            report.alignment = std::move(acc.alignment);
            report.nmi = nmi(pair, cfg.nmi_norm);
            report.usage = man.total_usage;
            report.cost_usd = estimate_cost(man.total_usage, cfg.pricing);
            report.n_fallback = man.n_fallback;
            emit_report(report, artifact("report.csv"), artifact("report.json"));
            result.report = std::move(report);
            eval_st.status = "ok";
            eval_st.artifact = artifact("report.csv");
        } else {
            eval_st.status = "skipped";
        }
        eval_st.finished = timestamp_utc();
        save_manifest();

        result.ok = true;
    } catch (const Error& e) {
        result.error = e.what();
        result.ok = false;
        save_manifest();
    }
    return result;
}

// Ablation entry point: topics are given, only assignment (and scoring) runs.
inline RunResult cmd_assignment_only(const RunConfig& cfg, const std::string& topics_path,
                                     LlmClient* injected_llm = nullptr) {
    TopicSet topics = load_topic_set(topics_path);  // validates before any LLM call
    RunConfig local = cfg;
    if (local.k == 0) local.k = topics.k;
    if (topics.k != local.k)
        throw Error(ErrorKind::validation,
                    "topic file has " + std::to_string(topics.k) + " topics but k is " +
                        std::to_string(local.k));
    return cmd_run(local, injected_llm, nullptr, &topics);
}

struct SweepOutcome {
    std::vector<SweepCell> cells;
    std::filesystem::path summary_csv;
    size_t total_runs = 0;
    size_t failed_runs = 0;
};

// Strategy x seed grid. Failed cells are recorded and the sweep continues.
inline SweepOutcome cmd_sweep(const RunConfig& base, const std::vector<OrderStrategy>& strategies,
                              const std::vector<uint64_t>& seeds,
                              LlmClient* injected_llm = nullptr,
                              EmbeddingProvider* injected_embedder = nullptr) {
    if (strategies.empty() || seeds.empty())
        throw Error(ErrorKind::config, "sweep needs at least one strategy and one seed");

    SweepOutcome outcome;
    for (const auto& strategy : strategies) {
        SweepCell cell;
        cell.strategy = strategy.to_string();
        for (uint64_t seed : seeds) {
            RunConfig cfg = base;
            cfg.strategy = strategy;
            cfg.seed = seed;
            RunResult run = cmd_run(cfg, injected_llm, injected_embedder);
            ++outcome.total_runs;
            cell.dataset = run.manifest.dataset;
            if (run.ok && run.report) {
                cell.runs.push_back(*run.report);
            } else {
                ++cell.failed;
                ++outcome.failed_runs;
                const std::string why =
                    run.error.empty() ? "no evaluation report (corpus has no gold labels)"
                                      : run.error;
                std::cerr << "sweep cell failed (strategy=" << cell.strategy << " seed=" << seed
                          << "): " << why << "\n";
            }
        }
        outcome.cells.push_back(std::move(cell));
    }
    std::filesystem::create_directories(base.out_dir);
    outcome.summary_csv = std::filesystem::path(base.out_dir) / "sweep_summary.csv";
    emit_sweep_summary(outcome.cells, outcome.summary_csv.string());
    return outcome;
}

}  // namespace clusterfusion
